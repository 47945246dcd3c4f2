"""xi^2 against Jt for four cutoff frequencies.

    lmg-squeeze sweep --config fig2a.toml --out .
    python fig2a.py fig2a_long.csv
"""
from plot_common import argument, finish, load, plt, split_runs

styles = ["-", "--", "-.", ":"]
fig, ax = plt.subplots(figsize=(6, 4))
for k, (gamma, run) in enumerate(split_runs(load(argument("fig2a_long.csv")), "cutoff")):
    ax.plot(run["Jt"], run["xi2"], styles[k % 4], label="gamma = %g" % gamma)
ax.axhline(1.0, color="grey", lw=0.5)
ax.set_xlabel("Jt")
ax.set_ylabel("xi^2")
ax.legend()
finish(fig, "fig2a.png")
