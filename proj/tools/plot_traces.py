#!/usr/bin/env python3
"""Plot the metric panels of a finished sweep.

Reads summary_by_iteration.csv (or summary_by_samples.csv with --by-samples)
from an output directory and draws one panel per metric with one line per
method, shading +/- one standard deviation across seeds.

Usage:
    python3 tools/plot_traces.py out/ring8_logistic [-o traces.png] [--by-samples]
"""

import argparse
import csv
import os
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = [
    ("loss", "training loss", "linear"),
    ("stationarity_exp", "stationarity violation", "log"),
    ("sparsity_pct", "% non-zeros", "linear"),
    ("accuracy", "training accuracy", "linear"),
    ("consensus", "consensus violation", "log"),
    ("stationarity_def2", "prox-gradient stationarity", "log"),
]


def load_summary(path, key):
    rows = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rows[row["method"]].append(row)
    for method in rows:
        rows[method].sort(key=lambda r: int(r[key]))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir", help="sweep output directory")
    ap.add_argument("-o", "--output", default=None, help="png path (default <outdir>/traces.png)")
    ap.add_argument("--by-samples", action="store_true", help="use the sample-count axis")
    args = ap.parse_args()

    name = "summary_by_samples.csv" if args.by_samples else "summary_by_iteration.csv"
    key = "samples_used" if args.by_samples else "k"
    path = os.path.join(args.outdir, name)
    if not os.path.exists(path):
        sys.exit(f"no {name} in {args.outdir}; run the sweep first")
    summary = load_summary(path, key)
    if not summary:
        sys.exit(f"{path} has no data rows")

    have = {c for rows in summary.values() for c in rows[0].keys()}
    panels = [p for p in PANELS if f"{p[0]}_mean" in have]
    fig, axes = plt.subplots(2, (len(panels) + 1) // 2, figsize=(5 * ((len(panels) + 1) // 2), 8))
    axes = axes.ravel()

    for ax, (col, title, scale) in zip(axes, panels):
        for method, rows in sorted(summary.items()):
            xs = [int(r[key]) for r in rows]
            mean = [float(r[f"{col}_mean"]) for r in rows]
            std = [float(r[f"{col}_std"]) for r in rows]
            ax.plot(xs, mean, label=method, linewidth=1.4)
            lo = [m - s for m, s in zip(mean, std)]
            hi = [m + s for m, s in zip(mean, std)]
            ax.fill_between(xs, lo, hi, alpha=0.2)
        ax.set_title(title)
        ax.set_xlabel("samples per agent" if args.by_samples else "iteration")
        if scale == "log":
            ax.set_yscale("log")
        ax.legend(fontsize=8)
    for ax in axes[len(panels):]:
        ax.axis("off")

    out = args.output or os.path.join(args.outdir, "traces.png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
