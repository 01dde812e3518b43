#!/usr/bin/env python3
"""Plot columnar .dat files written by `popcon plotdata` or `popcon sweep`.

The first line of each file is `# col1 col2 ...`; the first column is the
x axis unless --x names another one.

    python3 scripts/plot.py out/ode.leaders.dat --columns alpha_s,delta_s -o leaders.png
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def load(path):
    with open(path) as f:
        header = f.readline()
    if not header.startswith("#"):
        sys.exit(f"{path}: missing '#' header line")
    names = header[1:].split()
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.size and data.shape[1] != len(names):
        sys.exit(f"{path}: header names {len(names)} columns, rows have {data.shape[1]}")
    return names, data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("files", nargs="+")
    ap.add_argument("--x", help="x column (default: first)")
    ap.add_argument("--columns", help="comma-separated y columns (default: all)")
    ap.add_argument("--logy", action="store_true")
    ap.add_argument("-o", "--output", default="plot.png")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(8, 5))
    for path in args.files:
        names, data = load(path)
        if not data.size:
            continue
        xi = names.index(args.x) if args.x else 0
        wanted = args.columns.split(",") if args.columns else [n for i, n in enumerate(names) if i != xi]
        for name in wanted:
            if name not in names:
                sys.exit(f"{path}: no column {name!r}")
            label = name if len(args.files) == 1 else f"{path}:{name}"
            ax.plot(data[:, xi], data[:, names.index(name)], label=label, lw=1)
        ax.set_xlabel(names[xi])
    if args.logy:
        ax.set_yscale("log")
    if len(ax.lines) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(args.output)


if __name__ == "__main__":
    main()
