"""Batch front door: plan, validate, compare, sweep, ablate, export-model.

Everything is driven by one JSON config file with sections mirroring the
module options; command-line flags override file values. Artifacts are
collected in memory and written only after the whole run succeeds, so failed
runs leave no partial outputs. Exit codes: 0 ok, 2 config error, 3 infeasible,
4 solver failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .builder import BuildConfig, BuildMode, build
from .chargers import (
    CatalogError,
    InfrastructurePlan,
    capex,
    default_catalog,
    load_catalog,
    read_plan_csv,
    write_plan_csv,
)
from .dispatch import (
    DispatchError,
    DispatchWeights,
    dispatch,
    ev_series_csv,
    node_series_csv,
    uniform_redistribute,
)
from .fleet import ScenarioError, scenario_from_config, scenario_table
from .grid import NetworkError, load_bundled_network, load_network
from .metrics import (
    MetricsError,
    capex_sweep_csv,
    comparison_from_solutions,
    heatmap_csv,
    matrix_bus_ids,
    nodal_power_matrix,
    power_shift,
)
from .planning import PlanningError, PlanOptions, plan_infrastructure, plan_summary, summary_csv
from .solver import (
    BackendUnavailable,
    SolveOptions,
    SolverError,
    export_model,
    get_backend,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

CONFIG_SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "network": None,
    "catalog": None,
    "scenario": {"n_evs": 40, "battery_kwh": 40.0, "seed": 1},
    "plan": {
        "epsilon": 1e-3,
        "soc_min_terminal": 0.80,
        "enforce_capacity_constraints": True,
        "max_units_per_type": None,
    },
    "dispatch": {"w1": 1.0, "w2": 100.0, "soc_min_terminal": 0.05},
    "solve": {"relative_gap": 0.05, "time_limit": 600.0, "threads": 1, "backend": None},
    "include_reactive": True,
    "sweep": {"fleet_sizes": [], "battery_kwh": [], "jobs": 1},
    "out_dir": "out",
}


class ConfigError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass


@dataclass
class RunConfig:
    network_path: Optional[str]
    catalog_path: Optional[str]
    scenario: dict
    plan: dict
    dispatch: dict
    solve: dict
    include_reactive: bool
    sweep: dict
    out_dir: Path

    @property
    def network(self):
        if self.network_path:
            return load_network(self.network_path)
        return load_bundled_network()

    @property
    def charger_catalog(self):
        if self.catalog_path:
            return load_catalog(self.catalog_path)
        return default_catalog()

    def solve_options(self) -> SolveOptions:
        return SolveOptions(
            relative_gap=float(self.solve["relative_gap"]),
            time_limit=float(self.solve["time_limit"]),
            threads=int(self.solve["threads"]),
        )

    def backend_name(self) -> Optional[str]:
        return self.solve.get("backend")

    def plan_options(self) -> PlanOptions:
        return PlanOptions(
            epsilon=float(self.plan["epsilon"]),
            solve=self.solve_options(),
            soc_min_terminal=float(self.plan["soc_min_terminal"]),
            enforce_capacity_constraints=bool(self.plan["enforce_capacity_constraints"]),
            include_reactive=self.include_reactive,
            max_units_per_type=self.plan["max_units_per_type"],
            backend=self.backend_name(),
        )

    def weights(self) -> DispatchWeights:
        return DispatchWeights(w1=float(self.dispatch["w1"]), w2=float(self.dispatch["w2"]))

    def build_scenario(self, network, **overrides):
        return scenario_from_config(dict(self.scenario), network, **overrides)


def _merge_section(base: dict, override) -> dict:
    merged = dict(base)
    if override:
        unknown = set(override) - set(base)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        merged.update(override)
    return merged


def load_config(path: Optional[str], args: argparse.Namespace) -> RunConfig:
    doc = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version}")
    unknown = set(doc) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")

    # scenario keys beyond the three primaries are validated by scenario_from_config
    scenario = {**DEFAULT_CONFIG["scenario"], **doc.get("scenario", {})}
    plan = _merge_section(DEFAULT_CONFIG["plan"], doc.get("plan"))
    dispatch_sec = _merge_section(DEFAULT_CONFIG["dispatch"], doc.get("dispatch"))
    solve = _merge_section(DEFAULT_CONFIG["solve"], doc.get("solve"))
    sweep = _merge_section(DEFAULT_CONFIG["sweep"], doc.get("sweep"))

    cfg = RunConfig(
        network_path=doc.get("network"),
        catalog_path=doc.get("catalog"),
        scenario=scenario,
        plan=plan,
        dispatch=dispatch_sec,
        solve=solve,
        include_reactive=bool(doc.get("include_reactive", True)),
        sweep=sweep,
        out_dir=Path(doc.get("out_dir", "out")),
    )

    # flag overrides
    if getattr(args, "network", None):
        cfg.network_path = args.network
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.scenario["seed"] = args.seed
    if getattr(args, "fleet", None) is not None:
        cfg.scenario["n_evs"] = args.fleet
    if getattr(args, "battery", None) is not None:
        cfg.scenario["battery_kwh"] = args.battery
    if getattr(args, "gap", None) is not None:
        cfg.solve["relative_gap"] = args.gap
    if getattr(args, "time_limit", None) is not None:
        cfg.solve["time_limit"] = args.time_limit
    if getattr(args, "backend", None):
        cfg.solve["backend"] = args.backend
    if getattr(args, "ablate_capacity_constraints", False):
        cfg.plan["enforce_capacity_constraints"] = False
    if getattr(args, "jobs", None) is not None:
        cfg.sweep["jobs"] = args.jobs
    return cfg


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _metadata(cfg: RunConfig, command: str, extra: dict) -> str:
    doc = {
        "schema_version": 1,
        "command": command,
        "seed": cfg.scenario.get("seed"),
        "scenario": cfg.scenario,
        "plan_options": cfg.plan,
        "dispatch_options": cfg.dispatch,
        "solve_options": cfg.solve,
        "include_reactive": cfg.include_reactive,
        "timestamp_utc": _timestamp(),
    }
    doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=2, default=str) + "\n"


def _write_artifacts(out_dir: Path, artifacts: dict[str, str]):
    for rel, text in artifacts.items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _plan_point(cfg: RunConfig, network, catalog, scenario):
    plan, solution = plan_infrastructure(scenario, network, catalog, cfg.plan_options())
    if not solution.feasible:
        raise InfeasibleError(f"planning is {solution.status}")
    return plan, solution


def _plan_artifacts(cfg: RunConfig, plan, solution, catalog, prefix: str = "") -> dict[str, str]:
    summary = plan_summary(plan, catalog)
    return {
        f"{prefix}plan.csv": write_plan_csv(plan),
        f"{prefix}plan_summary.csv": summary_csv(summary),
        f"{prefix}metadata.json": _metadata(
            cfg, "plan",
            {
                "status": solution.status,
                "objective": solution.objective,
                "achieved_gap": solution.achieved_gap,
                "capex_eur": summary.capex_eur,
            },
        ),
    }


def cmd_plan(cfg: RunConfig, args) -> int:
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network)
    plan, solution = _plan_point(cfg, network, catalog, scenario)
    artifacts = _plan_artifacts(cfg, plan, solution, catalog)
    artifacts["scenario.csv"] = scenario_table(scenario)
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"plan: {solution.status}, capex {capex(plan, catalog):.2f} EUR -> {cfg.out_dir}")
    return EXIT_OK


def _validate_artifacts(cfg: RunConfig, network, catalog, scenario, plan) -> dict[str, str]:
    weights = cfg.weights()
    solve_opts = cfg.solve_options()
    kwargs = dict(
        soc_min_terminal=float(cfg.dispatch["soc_min_terminal"]),
        include_reactive=cfg.include_reactive,
        backend=cfg.backend_name(),
    )
    sol_o = dispatch(scenario, network, plan, catalog, weights, solve_opts, **kwargs)
    if not sol_o.feasible:
        raise InfeasibleError(f"dispatch of the plan is {sol_o.status}")
    plan_u = uniform_redistribute(plan, network)
    sol_u = dispatch(scenario, network, plan_u, catalog, weights, solve_opts, **kwargs)
    if not sol_u.feasible:
        raise InfeasibleError(f"dispatch of the uniform baseline is {sol_u.status}")
    report = comparison_from_solutions(sol_o, sol_u, scenario, capex(plan, catalog))
    mat_o = nodal_power_matrix(sol_o, network)
    mat_u = nodal_power_matrix(sol_u, network)
    bus_ids = matrix_bus_ids(sol_o, network)
    return {
        "dispatch_ev_optimal.csv": ev_series_csv(sol_o, scenario),
        "dispatch_node_optimal.csv": node_series_csv(sol_o),
        "dispatch_ev_uniform.csv": ev_series_csv(sol_u, scenario),
        "dispatch_node_uniform.csv": node_series_csv(sol_u),
        "uniform_plan.csv": write_plan_csv(plan_u),
        "comparison.json": report.to_json(),
        "heatmap_optimal.csv": heatmap_csv(mat_o, bus_ids),
        "heatmap_uniform.csv": heatmap_csv(mat_u, bus_ids),
        "power_shift.csv": heatmap_csv(power_shift(mat_u, mat_o), bus_ids),
        "validate_metadata.json": _metadata(
            cfg, "validate",
            {
                "status_o": sol_o.status,
                "status_u": sol_u.status,
                "eta_percent": report.eta,
            },
        ),
    }


def cmd_validate(cfg: RunConfig, args) -> int:
    if not args.plan:
        raise ConfigError("validate requires --plan FILE")
    plan_path = Path(args.plan)
    if not plan_path.exists():
        raise ConfigError(f"plan file {plan_path} does not exist")
    plan = read_plan_csv(plan_path.read_text(encoding="utf-8"))
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network)
    artifacts = _validate_artifacts(cfg, network, catalog, scenario, plan)
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"validate: artifacts in {cfg.out_dir}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    """Stage 1 then O-vs-U validation in one run."""
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network)
    plan, solution = _plan_point(cfg, network, catalog, scenario)
    artifacts = _plan_artifacts(cfg, plan, solution, catalog)
    if plan.is_empty():
        raise InfeasibleError("stage 1 returned an empty plan; nothing to compare")
    artifacts.update(_validate_artifacts(cfg, network, catalog, scenario, plan))
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"compare: artifacts in {cfg.out_dir}")
    return EXIT_OK


def _sweep_point(cfg: RunConfig, fleet: int, battery: float):
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network, n_evs=int(fleet), battery_kwh=float(battery))
    plan, solution = _plan_point(cfg, network, catalog, scenario)
    prefix = f"sweep/fleet{fleet}_batt{battery:g}/"
    artifacts = _plan_artifacts(cfg, plan, solution, catalog, prefix=prefix)
    return artifacts, (fleet, battery, capex(plan, catalog))


def cmd_sweep(cfg: RunConfig, args) -> int:
    fleets = [int(f) for f in cfg.sweep["fleet_sizes"]]
    batteries = [float(b) for b in cfg.sweep["battery_kwh"]]
    if not fleets or not batteries:
        raise ConfigError("sweep needs nonempty sweep.fleet_sizes and sweep.battery_kwh")
    jobs = max(1, int(cfg.sweep.get("jobs", 1)))
    points = [(f, b) for f in fleets for b in batteries]
    artifacts: dict[str, str] = {}
    capex_rows = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_sweep_point, cfg, f, b) for f, b in points]
        for fut in futures:
            point_artifacts, row = fut.result()
            artifacts.update(point_artifacts)
            capex_rows.append(row)
    capex_rows.sort(key=lambda r: (r[0], r[1]))
    artifacts["capex_sweep.csv"] = capex_sweep_csv(capex_rows)
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"sweep: {len(points)} points -> {cfg.out_dir}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    """Plan with and without the nodal capacity coupling, side by side."""
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network)
    plans = {}
    for label, enforce in (("with", True), ("without", False)):
        cfg_i = replace(cfg, plan={**cfg.plan, "enforce_capacity_constraints": enforce})
        plan, solution = _plan_point(cfg_i, network, catalog, scenario)
        plans[label] = (plan, solution)
    rows = ["charger_type,with_capacity_constraints,without_capacity_constraints"]
    totals = {"with": plan_summary(plans["with"][0], catalog),
              "without": plan_summary(plans["without"][0], catalog)}
    for ct in catalog:
        rows.append(
            f"{ct.id},{totals['with'].per_type_units[ct.id]},"
            f"{totals['without'].per_type_units[ct.id]}"
        )
    rows.append(f"total_units,{totals['with'].total_units},{totals['without'].total_units}")
    rows.append(f"total_ports,{totals['with'].total_ports},{totals['without'].total_ports}")
    rows.append(
        f"capex_eur,{totals['with'].capex_eur!r},{totals['without'].capex_eur!r}"
    )
    artifacts = {
        "ablation.csv": "\n".join(rows) + "\n",
        "plan_with_constraints.csv": write_plan_csv(plans["with"][0]),
        "plan_without_constraints.csv": write_plan_csv(plans["without"][0]),
        "ablation_metadata.json": _metadata(
            cfg, "ablate",
            {
                "status_with": plans["with"][1].status,
                "status_without": plans["without"][1].status,
            },
        ),
    }
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"ablate: artifacts in {cfg.out_dir}")
    return EXIT_OK


def cmd_export_model(cfg: RunConfig, args) -> int:
    network = cfg.network
    catalog = cfg.charger_catalog
    scenario = cfg.build_scenario(network)
    config = BuildConfig(
        soc_terminal_min=float(cfg.plan["soc_min_terminal"]),
        include_reactive=cfg.include_reactive,
        enforce_capacity_constraints=bool(cfg.plan["enforce_capacity_constraints"]),
    )
    if args.plan:
        plan = read_plan_csv(Path(args.plan).read_text(encoding="utf-8"))
        mode = BuildMode.dispatch_mode(plan)
    else:
        mode = BuildMode.plan_mode(max_units_per_type=cfg.plan["max_units_per_type"])
    model = build(scenario, network, catalog, mode, config)
    model.set_objective({})
    model.freeze()
    fmt = args.export or "lp"
    artifacts = {f"model.{fmt}": export_model(model, fmt)}
    _write_artifacts(cfg.out_dir, artifacts)
    print(f"export-model: model.{fmt} in {cfg.out_dir}")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "export-model": cmd_export_model,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evgridplan",
        description="EV charging infrastructure planning and grid-constrained validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--network", help="network schema file (default: bundled benchmark)")
        p.add_argument("--plan", help="infrastructure plan CSV (validate / export-model)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--gap", type=float, help="relative optimality gap")
        p.add_argument("--time-limit", type=float, dest="time_limit")
        p.add_argument("--fleet", type=int, help="fleet size override")
        p.add_argument("--battery", type=float, help="battery kWh override")
        p.add_argument("--backend", help="solver backend (highs, glpk, cbc)")
        p.add_argument("--jobs", type=int, help="sweep worker count")
        p.add_argument(
            "--uniform-baseline",
            action="store_true",
            default=True,
            help="score against the uniform redistribution baseline (always on)",
        )
        p.add_argument(
            "--ablate-capacity-constraints",
            action="store_true",
            help="drop the nodal EV power capacity coupling",
        )
        p.add_argument("--export", choices=["mps", "lp"], help="model export format")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ScenarioError, NetworkError, CatalogError, PlanningError,
            DispatchError, MetricsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, BackendUnavailable) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
