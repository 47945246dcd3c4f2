"""xi^2 against Jt for several couplings and temperatures.

    lmg-squeeze sweep --config fig3_damping.toml --out .
    lmg-squeeze sweep --config fig3_kt.toml --out .
    python fig3.py fig3_damping_long.csv fig3_kt_long.csv
"""
import sys

from plot_common import finish, load, plt, split_runs

paths = sys.argv[1:3] if len(sys.argv) > 2 else ["fig3_damping_long.csv", "fig3_kt_long.csv"]
fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
for ax, path, param, label in zip(axes, paths, ["damping", "kt"], ["Gamma", "kT"]):
    for value, run in split_runs(load(path), param):
        ax.plot(run["Jt"], run["xi2"], label="%s = %g" % (label, value))
    ax.axhline(1.0, color="grey", lw=0.5)
    ax.set_xlabel("Jt")
    ax.legend()
axes[0].set_ylabel("xi^2")
finish(fig, "fig3.png")
