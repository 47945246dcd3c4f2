"""Real and imaginary parts of F_ij(t).

    lmg-squeeze run --config fig1.toml --out .
    python fig1.py fig1.csv
"""
from plot_common import argument, finish, load, plt

data = load(argument("fig1.csv"))
fig, axes = plt.subplots(2, 2, figsize=(8, 6), sharex=True)
for ax, name in zip(axes.flat, ["F11", "F12", "F21", "F22"]):
    ax.plot(data["t"], data[name + "_re"], label="Re " + name)
    ax.plot(data["t"], data[name + "_im"], "--", label="Im " + name)
    ax.set_title(name)
    ax.legend()
for ax in axes[1]:
    ax.set_xlabel("t")
finish(fig, "fig1.png")
