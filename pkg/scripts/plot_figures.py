#!/usr/bin/env python3
"""Render the figure CSVs produced by the CLI into PNGs.

Thin plotting layer: the core emits only CSV (capex_sweep.csv from ``sweep``,
heatmap_*.csv and power_shift.csv from ``validate``/``compare``); this script
turns them into the investment bar chart, nodal power heatmaps, and the
uniform-minus-optimal shift map. Requires matplotlib.

Usage:
    python scripts/plot_figures.py --results results --out figures
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_capex(path: Path):
    by_battery = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            by_battery[float(row["battery_kwh"])][int(row["fleet_size"])] = (
                float(row["capex_eur"]))
    return by_battery


def read_heatmap(path: Path):
    cells = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells[(int(row["node"]), int(row["t"]))] = float(row["value_pu"])
    nodes = sorted({n for n, _ in cells})
    steps = sorted({t for _, t in cells})
    matrix = np.array([[cells[(n, t)] for t in steps] for n in nodes])
    return matrix, nodes, steps


def plot_capex(path: Path, out: Path):
    by_battery = read_capex(path)
    fleets = sorted({f for d in by_battery.values() for f in d})
    width = 0.8 / max(1, len(by_battery))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, (battery, series) in enumerate(sorted(by_battery.items())):
        xs = np.arange(len(fleets)) + i * width
        ys = [series.get(f, np.nan) / 1e3 for f in fleets]
        ax.bar(xs, ys, width, label=f"{battery:g} kWh battery")
    ax.set_xticks(np.arange(len(fleets)) + width / 2)
    ax.set_xticklabels(fleets)
    ax.set_xlabel("Number of EVs in fleet")
    ax.set_ylabel("Investment cost (EUR x1000)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def plot_heatmap(path: Path, out: Path, title: str, diverging: bool = False):
    matrix, nodes, steps = read_heatmap(path)
    fig, ax = plt.subplots(figsize=(8, 4))
    if diverging:
        vmax = max(abs(matrix.min()), abs(matrix.max())) or 1.0
        im = ax.imshow(matrix, aspect="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    else:
        im = ax.imshow(matrix, aspect="auto", cmap="viridis")
    ax.set_yticks(range(len(nodes)))
    ax.set_yticklabels(nodes)
    ax.set_xlabel("Hour")
    ax.set_ylabel("Node")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="p.u.")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", default="results")
    parser.add_argument("--out", default="figures")
    args = parser.parse_args(argv)
    results = Path(args.results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    made = 0
    capex_csv = results / "capex_sweep.csv"
    if capex_csv.exists():
        plot_capex(capex_csv, out / "capex_by_fleet.png")
        made += 1
    for heatmap in sorted(results.rglob("heatmap_*.csv")):
        label = heatmap.parent.name or "run"
        name = f"{label}_{heatmap.stem}.png"
        plot_heatmap(heatmap, out / name, f"{label}: {heatmap.stem}")
        made += 1
    for shift in sorted(results.rglob("power_shift.csv")):
        label = shift.parent.name or "run"
        plot_heatmap(shift, out / f"{label}_power_shift.png",
                     f"{label}: uniform minus optimal", diverging=True)
        made += 1
    if not made:
        print(f"nothing to plot under {results}", file=sys.stderr)
        return 1
    print(f"{made} figures in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
