"""Stage 1: strategic siting and sizing of charging infrastructure.

Minimizes installation cost with a small connection-time incentive that
breaks ties toward better-utilized deployments; the incentive weight is
validated to be too small to flip any unit-count decision.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .builder import BuildConfig, BuildMode, build, n_var, xf_var, xs_var
from .chargers import ChargerType, InfrastructurePlan, capex, catalog_by_id, nodal_capacity
from .fleet import FleetScenario
from .grid import GridNetwork
from .milp import INTEGRALITY_TOL
from .solver import SolveOptions, Solution, get_backend


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class PlanOptions:
    epsilon: float = 1e-3  # euro credit per connection-step
    solve: SolveOptions = field(default_factory=SolveOptions)
    soc_min_terminal: float = 0.80
    enforce_capacity_constraints: bool = True
    include_reactive: bool = True
    max_units_per_type: Optional[int] = None
    backend: Optional[str] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise PlanningError("epsilon must be nonnegative")


def _check_epsilon(options: PlanOptions, scenario: FleetScenario,
                   catalog: Iterable[ChargerType]):
    """Tie-break weight must stay below any unit cost over the whole horizon."""
    costs = [ct.unit_cost_eur for ct in catalog if ct.unit_cost_eur > 0]
    if not costs or not scenario.evs or options.epsilon == 0:
        return
    worst = options.epsilon * scenario.n_evs * scenario.time.horizon_steps
    if worst >= min(costs):
        raise PlanningError(
            f"epsilon {options.epsilon} can accumulate {worst} over the horizon, "
            f"reaching the cheapest unit cost {min(costs)}; lower it"
        )


def stage1_objective(scenario: FleetScenario, network: GridNetwork,
                     catalog: Iterable[ChargerType], epsilon: float) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    for n in network.consumer_ids:
        for ct in catalog:
            coeffs[n_var(n, ct.id)] = ct.unit_cost_eur
    for ev in scenario.evs:
        for t in scenario.time.steps:
            coeffs[xf_var(ev.id, t)] = -epsilon
            coeffs[xs_var(ev.id, t)] = -epsilon
    return coeffs


def extract_plan(solution: Solution, network: GridNetwork,
                 catalog: Iterable[ChargerType]) -> InfrastructurePlan:
    """Round near-integral counts out of a solved plan-mode model."""
    counts = {}
    for n in network.consumer_ids:
        for ct in catalog:
            name = n_var(n, ct.id)
            raw = solution.values.get(name, 0.0)
            rounded = round(raw)
            if abs(raw - rounded) > INTEGRALITY_TOL:
                raise PlanningError(f"{name} = {raw} is not integral within tolerance")
            if rounded:
                counts[(n, ct.id)] = int(rounded)
    return InfrastructurePlan(counts)


def plan_infrastructure(
    scenario: FleetScenario,
    network: GridNetwork,
    catalog: Iterable[ChargerType],
    options: PlanOptions = PlanOptions(),
) -> tuple[InfrastructurePlan, Solution]:
    """Solve the siting problem; returns the plan and the raw solution.

    Infeasibility (for example a terminal SOC no window can reach) comes back
    as the solution status with an empty plan, not an exception.
    """
    catalog = list(catalog)
    _check_epsilon(options, scenario, catalog)
    config = BuildConfig(
        soc_terminal_min=options.soc_min_terminal,
        include_reactive=options.include_reactive,
        enforce_capacity_constraints=options.enforce_capacity_constraints,
    )
    model = build(
        scenario, network, catalog,
        BuildMode.plan_mode(max_units_per_type=options.max_units_per_type),
        config,
    )
    model.set_objective(stage1_objective(scenario, network, catalog, options.epsilon))
    model.freeze()
    backend = get_backend(options.backend)
    solution = backend.solve(model, options.solve)
    if not solution.feasible:
        return InfrastructurePlan({}), solution
    plan = extract_plan(solution, network, catalog)
    # rounding must not break feasibility of the operational witness
    patched = dict(solution.values)
    for (n, type_id), count in plan.counts.items():
        patched[n_var(n, type_id)] = float(count)
    problems = model.check_solution(patched)
    if problems:
        raise PlanningError(f"rounded plan breaks feasibility: {problems[:3]}")
    return plan, solution


@dataclass(frozen=True)
class PlanSummary:
    per_type_units: dict[str, int]
    total_units: int
    total_ports: int
    capex_eur: float


def plan_summary(plan: InfrastructurePlan, catalog: Iterable[ChargerType]) -> PlanSummary:
    """Units/ports/cost aggregates in the layout of the result tables."""
    catalog = list(catalog)
    by_id = catalog_by_id(catalog)
    per_type = {ct.id: 0 for ct in catalog}
    for (_, type_id), count in plan.counts.items():
        if type_id not in by_id:
            raise PlanningError(f"unknown charger type {type_id!r}")
        per_type[type_id] += count
    total_units = sum(per_type.values())
    total_ports = sum(by_id[t].port_multiplier * c for t, c in per_type.items())
    return PlanSummary(per_type, total_units, total_ports, capex(plan, catalog))


def summary_csv(summary: PlanSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["type", "units"])
    for type_id, units in summary.per_type_units.items():
        writer.writerow([type_id, units])
    writer.writerow(["total_units", summary.total_units])
    writer.writerow(["total_ports", summary.total_ports])
    writer.writerow(["capex_eur", repr(summary.capex_eur)])
    return buf.getvalue()
