"""xi^2 against Jt for several spin numbers.

    lmg-squeeze sweep --config fig2b.toml --out .
    python fig2b.py fig2b_long.csv
"""
from plot_common import argument, finish, load, plt, split_runs

styles = ["-", "--", "-.", ":"]
fig, ax = plt.subplots(figsize=(6, 4))
for k, (n, run) in enumerate(split_runs(load(argument("fig2b_long.csv")), "n")):
    ax.plot(run["Jt"], run["xi2"], styles[k % 4], label="N = %d" % n)
ax.axhline(1.0, color="grey", lw=0.5)
ax.set_xlabel("Jt")
ax.set_ylabel("xi^2")
ax.legend()
finish(fig, "fig2b.png")
