"""Plot a CSV trace written by ``adalloc simulate --trace``.

Needs matplotlib, which the package itself does not depend on.

    python3 scripts/plot_trace.py trace.csv --out trace.png
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_trace(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return header, data


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("trace")
    ap.add_argument("--out", default="trace.png")
    args = ap.parse_args(argv)

    header, data = read_trace(args.trace)
    t = data[:, 0]
    groups = [("states", "x"), ("virtual command v", "v"), ("sliding variable s", "s"),
              ("actuator deflection", "u_act"), ("allocator error e", "e"),
              ("theta_v", "theta")]
    fig, axes = plt.subplots(len(groups), 1, figsize=(9, 2.2 * len(groups)), sharex=True)
    for ax, (title, prefix) in zip(axes, groups):
        for j, name in enumerate(header):
            if name.startswith(prefix) and name[len(prefix):][:1].isdigit():
                ax.plot(t, data[:, j], lw=0.8, label=name)
        ax.set_title(title, fontsize=9)
        if prefix != "theta":
            ax.legend(fontsize=7, ncol=5, loc="upper right")
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
