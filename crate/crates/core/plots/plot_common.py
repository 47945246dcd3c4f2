"""Shared CSV loading for the figure scripts."""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    """Return {column: [float]} from a harness CSV (skips `#` lines)."""
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    table = {name: [] for name in reader.fieldnames}
    for row in reader:
        for name, value in row.items():
            try:
                table[name].append(float(value))
            except ValueError:
                table[name].append(value)
    return table


def split_runs(table, param):
    """Group a long sweep table by run index: [(param value, {column: [...]})]."""
    runs = {}
    for k, run in enumerate(table["run"]):
        entry = runs.setdefault(run, (table[param][k], {c: [] for c in table}))
        for c in table:
            entry[1][c].append(table[c][k])
    return [runs[r] for r in sorted(runs)]


def argument(default):
    return sys.argv[1] if len(sys.argv) > 1 else default


def finish(fig, name):
    fig.tight_layout()
    fig.savefig(name, dpi=150)
    print("wrote", name)


__all__ = ["load", "split_runs", "argument", "finish", "plt"]
