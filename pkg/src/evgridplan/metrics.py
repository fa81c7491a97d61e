"""Service-quality metrics and figure-ready data extraction.

Shortfall is the fleet-average unmet energy against each EV's target at the
end of its final parking session, clamped at zero per EV. The headline
comparison metric is the percentage reduction in shortfall when moving from
one deployment to another with identical hardware totals.

All figure data leaves as CSV with explicit axes; plotting stays out of the
core (see scripts/plot_figures.py).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .chargers import ChargerType, InfrastructurePlan, capex
from .dispatch import DispatchSolution, DispatchWeights, dispatch
from .fleet import FleetScenario
from .grid import GridNetwork
from .solver import SolveOptions

REPORT_SCHEMA_VERSION = 1


class MetricsError(ValueError):
    pass


def shortfall(solution: DispatchSolution, scenario: FleetScenario) -> float:
    """Average unmet energy per EV in kWh against each EV's target SOC."""
    if not solution.feasible:
        raise MetricsError(f"solution status {solution.status!r} carries no trajectories")
    if not scenario.evs:
        return 0.0
    total = 0.0
    for idx, ev in enumerate(scenario.evs):
        deficit = ev.battery_kwh * (ev.target_soc - solution.final_soc(idx))
        total += max(0.0, deficit)
    return total / scenario.n_evs


def avg_final_soc(solution: DispatchSolution, scenario: FleetScenario) -> float:
    """Fleet-average end-of-final-session SOC in percent."""
    if not solution.feasible:
        raise MetricsError(f"solution status {solution.status!r} carries no trajectories")
    if not scenario.evs:
        return 100.0
    return float(solution.final_socs().mean() * 100.0)


def shortfall_reduction(shortfall_o: float, shortfall_u: float) -> float:
    """Percentage decrease in unmet energy of U relative to O."""
    if shortfall_o <= 0:
        raise MetricsError("shortfall_o must be positive")
    return (shortfall_o - shortfall_u) / shortfall_o * 100.0


def nodal_power_matrix(solution: DispatchSolution, network: GridNetwork) -> np.ndarray:
    """Consumption intensity (base + EV load, p.u.) by non-slack node and step.

    Row order follows ascending non-slack bus id; slack rows are excluded.
    Equals the negated net injection, so it needs no scenario input.
    """
    slack = set(network.slack_ids)
    rows = [b for b, n in enumerate(solution.bus_ids) if n not in slack]
    return -solution.p_net[rows, :]


def matrix_bus_ids(solution: DispatchSolution, network: GridNetwork) -> list[int]:
    slack = set(network.slack_ids)
    return [n for n in solution.bus_ids if n not in slack]


def power_shift(uniform_matrix: np.ndarray, optimal_matrix: np.ndarray) -> np.ndarray:
    """Elementwise uniform-minus-optimal nodal power differential."""
    if uniform_matrix.shape != optimal_matrix.shape:
        raise MetricsError(
            f"shape mismatch {uniform_matrix.shape} vs {optimal_matrix.shape}"
        )
    return uniform_matrix - optimal_matrix


@dataclass(frozen=True)
class ComparisonReport:
    avg_final_soc_o: float      # percent
    avg_final_soc_u: float      # percent
    shortfall_o: float          # kWh per EV
    shortfall_u: float          # kWh per EV
    soc_improvement: float      # percentage points, U minus O
    eta: float                  # percent shortfall reduction
    status_o: str
    status_u: str
    capex_eur: float

    def to_json(self) -> str:
        doc = {"schema_version": REPORT_SCHEMA_VERSION}
        doc.update(asdict(self))
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        doc = json.loads(text)
        if doc.pop("schema_version", None) != REPORT_SCHEMA_VERSION:
            raise MetricsError("unsupported report schema version")
        return cls(**doc)


def comparison_from_solutions(
    solution_o: DispatchSolution,
    solution_u: DispatchSolution,
    scenario: FleetScenario,
    plan_capex: float,
) -> ComparisonReport:
    s_o = shortfall(solution_o, scenario)
    s_u = shortfall(solution_u, scenario)
    soc_o = avg_final_soc(solution_o, scenario)
    soc_u = avg_final_soc(solution_u, scenario)
    eta = shortfall_reduction(s_o, s_u) if s_o > 0 else 0.0
    return ComparisonReport(
        avg_final_soc_o=soc_o,
        avg_final_soc_u=soc_u,
        shortfall_o=s_o,
        shortfall_u=s_u,
        soc_improvement=soc_u - soc_o,
        eta=eta,
        status_o=solution_o.status,
        status_u=solution_u.status,
        capex_eur=plan_capex,
    )


def compare(
    plan_o: InfrastructurePlan,
    plan_u: InfrastructurePlan,
    scenario: FleetScenario,
    network: GridNetwork,
    catalog: Iterable[ChargerType],
    weights: DispatchWeights = DispatchWeights(),
    solve_options: SolveOptions = SolveOptions(),
    **dispatch_kwargs,
) -> ComparisonReport:
    """Dispatch both deployments and score them against each other."""
    catalog = list(catalog)
    if plan_o.type_totals() != plan_u.type_totals():
        raise MetricsError(
            "plans must hold identical per-type unit totals: "
            f"{plan_o.type_totals()} vs {plan_u.type_totals()}"
        )
    sol_o = dispatch(scenario, network, plan_o, catalog, weights, solve_options,
                     **dispatch_kwargs)
    sol_u = dispatch(scenario, network, plan_u, catalog, weights, solve_options,
                     **dispatch_kwargs)
    if not sol_o.feasible or not sol_u.feasible:
        raise MetricsError(
            f"dispatch failed: O status {sol_o.status!r}, U status {sol_u.status!r}"
        )
    return comparison_from_solutions(sol_o, sol_u, scenario, capex(plan_o, catalog))


def heatmap_csv(matrix: np.ndarray, bus_ids: Iterable[int]) -> str:
    """Figure data as (node, t, value) triples."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["node", "t", "value_pu"])
    for row, node in enumerate(bus_ids):
        for t in range(matrix.shape[1]):
            writer.writerow([node, t, repr(float(matrix[row, t]))])
    return buf.getvalue()


def capex_sweep_csv(rows: Iterable[tuple[int, float, float]]) -> str:
    """(fleet size, battery kWh, capex euro) rows for the investment figure."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fleet_size", "battery_kwh", "capex_eur"])
    for fleet, battery, cost in rows:
        writer.writerow([fleet, repr(float(battery)), repr(float(cost))])
    return buf.getvalue()
