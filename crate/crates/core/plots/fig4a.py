"""Heatmap of xi^2(Jt, a/b).

    lmg-squeeze sweep --config fig4a.toml --out .
    python fig4a.py fig4a_long.csv
"""
import numpy as np

from plot_common import argument, finish, load, plt, split_runs

runs = split_runs(load(argument("fig4a_long.csv")), "a_over_b")
ratios = np.array([r for r, _ in runs])
length = min(len(run["Jt"]) for _, run in runs)
jt = np.array(runs[0][1]["Jt"][:length])
xi2 = np.array([run["xi2"][:length] for _, run in runs])
fig, ax = plt.subplots(figsize=(6, 4.5))
mesh = ax.pcolormesh(jt, ratios, np.clip(xi2, 0.0, 1.0), shading="auto", cmap="viridis")
fig.colorbar(mesh, ax=ax, label="xi^2 (clipped at 1)")
ax.set_xlabel("Jt")
ax.set_ylabel("a/b")
finish(fig, "fig4a.png")
