#!/usr/bin/env python3
"""Full experiment grid: infrastructure sweep plus O-vs-U validation runs.

Reproduces the study layout (fleet sizes 250..600 at 20 and 40 kWh, each
planned at a 5% gap and validated against the uniform redistribution
baseline). Mind the runtime: each paper-scale point is a real MIP solve that
can take tens of minutes. ``--quick`` shrinks everything to desk scale for a
smoke run.

Usage:
    python scripts/run_paper_study.py --out results [--quick] [--jobs N]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from evgridplan.cli import main as cli_main


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--quick", action="store_true",
                        help="desk-scale smoke run (minutes, not hours)")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--gap", type=float, default=0.05)
    parser.add_argument("--time-limit", type=float, default=3600.0)
    args = parser.parse_args(argv)

    if args.quick:
        fleets = [20, 40]
        batteries = [20.0, 40.0]
        validate_points = [(40, 40.0)]
    else:
        fleets = [250, 350, 450, 550, 600]
        batteries = [20.0, 40.0]
        validate_points = [(f, b) for f in fleets for b in batteries]

    out = Path(args.out)
    config = {
        "scenario": {"n_evs": fleets[-1], "battery_kwh": 40.0, "seed": args.seed},
        "solve": {"relative_gap": args.gap, "time_limit": args.time_limit},
        "sweep": {"fleet_sizes": fleets, "battery_kwh": batteries, "jobs": args.jobs},
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(config, fh)
        cfg_path = fh.name

    rc = cli_main(["sweep", "--config", cfg_path, "--out", str(out)])
    if rc != 0:
        return rc

    for fleet, battery in validate_points:
        point_out = out / f"validate/fleet{fleet}_batt{battery:g}"
        rc = cli_main([
            "compare", "--config", cfg_path, "--out", str(point_out),
            "--fleet", str(fleet), "--battery", str(battery),
        ])
        if rc != 0:
            print(f"point ({fleet}, {battery}) failed with exit {rc}", file=sys.stderr)
            return rc
        report = json.loads((point_out / "comparison.json").read_text())
        print(f"fleet {fleet:>4} / {battery:g} kWh: "
              f"eta {report['eta']:6.2f}%  "
              f"SOC O {report['avg_final_soc_o']:6.2f}% -> U {report['avg_final_soc_u']:6.2f}%")
    print(f"study artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
