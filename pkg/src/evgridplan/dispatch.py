"""Stage 2: grid-constrained fleet dispatch under a fixed plan.

The objective trades cumulative charging progress against end-of-horizon
state, weighted so the terminal term dominates. The hard terminal floor is
kept at a low configurable value here so undersized plans stay feasible and
show up as shortfall in the metrics instead of as solver infeasibility.

Also provides the uniform-redistribution baseline: the same per-type unit
totals spread evenly over all consumer buses.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .builder import (
    BuildConfig,
    BuildMode,
    build,
    p_var,
    pnet_var,
    qnet_var,
    soc_var,
    th_var,
    v_var,
    xf_var,
    xs_var,
)
from .chargers import ChargerType, InfrastructurePlan
from .fleet import FleetScenario
from .grid import GridNetwork
from .solver import SolveOptions, Solution, get_backend


class DispatchError(ValueError):
    pass


@dataclass(frozen=True)
class DispatchWeights:
    w1: float = 1.0
    w2: float = 100.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise DispatchError("weights must be nonnegative")
        if not self.w2 > self.w1:
            raise DispatchError("terminal weight w2 must exceed cumulative weight w1")


@dataclass(frozen=True)
class DispatchSolution:
    """Solved operating point: per-EV and per-node series plus objective parts."""

    status: str
    objective: float
    achieved_gap: float
    j_cum: float
    j_term: float
    ev_ids: tuple[int, ...]
    p_kw: np.ndarray          # (n_evs, T) charging power
    soc: np.ndarray           # (n_evs, T+1) fenceposts
    plug: np.ndarray          # (n_evs, T) codes '', 'f', 's'
    bus_ids: tuple[int, ...]
    p_net: np.ndarray         # (n_buses, T) p.u. injections
    q_net: Optional[np.ndarray]
    v: np.ndarray             # (n_buses, T) p.u.
    theta: np.ndarray         # (n_buses, T) rad
    terminal_fencepost: tuple[int, ...]
    values: Mapping[str, float] = field(default_factory=dict)  # raw solver point

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "gap_feasible")

    def final_soc(self, ev_index: int) -> float:
        return float(self.soc[ev_index, self.terminal_fencepost[ev_index]])

    def final_socs(self) -> np.ndarray:
        return np.array([self.final_soc(i) for i in range(len(self.ev_ids))])


def stage2_objective(scenario: FleetScenario, weights: DispatchWeights):
    """Linear coefficients and constant for the weighted SOC-deviation objective."""
    T = scenario.time.horizon_steps
    coeffs: dict[str, float] = {}
    constant = 0.0
    for ev in scenario.evs:
        for t in range(T):
            coeffs[soc_var(ev.id, t)] = coeffs.get(soc_var(ev.id, t), 0.0) - weights.w1
        constant += weights.w1 * T * ev.target_soc
        k_term = terminal_fencepost_index(scenario, ev.id)
        coeffs[soc_var(ev.id, k_term)] = coeffs.get(soc_var(ev.id, k_term), 0.0) - weights.w2
        constant += weights.w2 * ev.target_soc
    return coeffs, constant


def terminal_fencepost_index(scenario: FleetScenario, ev_id: int) -> int:
    t_final = scenario.terminal_step(ev_id)
    if t_final is None:
        return scenario.time.horizon_steps
    return t_final + 1


def objective_parts(scenario: FleetScenario, soc: np.ndarray,
                    terminal: Iterable[int]) -> tuple[float, float]:
    """(J_cum, J_term) recomputed from the SOC trajectories."""
    T = scenario.time.horizon_steps
    j_cum = 0.0
    j_term = 0.0
    for idx, ev in enumerate(scenario.evs):
        j_cum += sum(ev.target_soc - soc[idx, t] for t in range(T))
        j_term += ev.target_soc - soc[idx, list(terminal)[idx]]
    return j_cum, j_term


def dispatch(
    scenario: FleetScenario,
    network: GridNetwork,
    plan: InfrastructurePlan,
    catalog: Iterable[ChargerType],
    weights: DispatchWeights = DispatchWeights(),
    solve_options: SolveOptions = SolveOptions(),
    *,
    soc_min_terminal: float = 0.05,
    include_reactive: bool = True,
    backend: Optional[str] = None,
) -> DispatchSolution:
    """Solve the operational problem with infrastructure fixed to ``plan``."""
    catalog = list(catalog)
    config = BuildConfig(
        soc_terminal_min=soc_min_terminal,
        include_reactive=include_reactive,
    )
    model = build(scenario, network, catalog, BuildMode.dispatch_mode(plan), config)
    coeffs, constant = stage2_objective(scenario, weights)
    model.set_objective(coeffs, constant=constant)
    model.freeze()
    solution = get_backend(backend).solve(model, solve_options)
    if not solution.feasible:
        return DispatchSolution(
            status=solution.status,
            objective=math.nan,
            achieved_gap=math.nan,
            j_cum=math.nan,
            j_term=math.nan,
            ev_ids=tuple(ev.id for ev in scenario.evs),
            p_kw=np.zeros((scenario.n_evs, scenario.time.horizon_steps)),
            soc=np.zeros((scenario.n_evs, scenario.time.horizon_steps + 1)),
            plug=np.full((scenario.n_evs, scenario.time.horizon_steps), ""),
            bus_ids=tuple(network.bus_ids),
            p_net=np.zeros((len(network.buses), scenario.time.horizon_steps)),
            q_net=None,
            v=np.zeros((len(network.buses), scenario.time.horizon_steps)),
            theta=np.zeros((len(network.buses), scenario.time.horizon_steps)),
            terminal_fencepost=tuple(
                terminal_fencepost_index(scenario, ev.id) for ev in scenario.evs
            ),
        )
    return extract_dispatch(scenario, network, solution, include_reactive)


def extract_dispatch(scenario: FleetScenario, network: GridNetwork,
                     solution: Solution, include_reactive: bool = True) -> DispatchSolution:
    T = scenario.time.horizon_steps
    n_evs = scenario.n_evs
    vals = solution.values
    p = np.zeros((n_evs, T))
    soc = np.zeros((n_evs, T + 1))
    plug = np.full((n_evs, T), "", dtype="<U1")
    for idx, ev in enumerate(scenario.evs):
        for t in range(T):
            p[idx, t] = vals[p_var(ev.id, t)]
            if vals[xf_var(ev.id, t)] > 0.5:
                plug[idx, t] = "f"
            elif vals[xs_var(ev.id, t)] > 0.5:
                plug[idx, t] = "s"
        for k in range(T + 1):
            soc[idx, k] = vals[soc_var(ev.id, k)]
    bus_ids = tuple(network.bus_ids)
    p_net = np.zeros((len(bus_ids), T))
    q_net = np.zeros((len(bus_ids), T)) if include_reactive else None
    v = np.zeros((len(bus_ids), T))
    theta = np.zeros((len(bus_ids), T))
    for b, n in enumerate(bus_ids):
        for t in range(T):
            p_net[b, t] = vals[pnet_var(n, t)]
            v[b, t] = vals[v_var(n, t)]
            theta[b, t] = vals[th_var(n, t)]
            if q_net is not None:
                q_net[b, t] = vals[qnet_var(n, t)]
    terminal = tuple(terminal_fencepost_index(scenario, ev.id) for ev in scenario.evs)
    j_cum, j_term = objective_parts(scenario, soc, terminal)
    return DispatchSolution(
        status=solution.status,
        objective=solution.objective,
        achieved_gap=solution.achieved_gap,
        j_cum=j_cum,
        j_term=j_term,
        ev_ids=tuple(ev.id for ev in scenario.evs),
        p_kw=p,
        soc=soc,
        plug=plug,
        bus_ids=bus_ids,
        p_net=p_net,
        q_net=q_net,
        v=v,
        theta=theta,
        terminal_fencepost=terminal,
        values=dict(vals),
    )


def uniform_redistribute(plan: InfrastructurePlan, network: GridNetwork) -> InfrastructurePlan:
    """Spread each type's total count evenly over all consumer buses.

    Every bus gets floor(total / n_buses); the remainder goes one unit per
    bus in ascending bus-id order. Per-type totals are preserved exactly.
    """
    if plan.is_empty():
        raise DispatchError("cannot redistribute an empty plan")
    consumers = sorted(network.consumer_ids)
    if not consumers:
        raise DispatchError("network has no consumer buses")
    counts: dict[tuple[int, str], int] = {}
    for type_id, total in plan.type_totals().items():
        base, remainder = divmod(total, len(consumers))
        for rank, bus in enumerate(consumers):
            c = base + (1 if rank < remainder else 0)
            if c:
                counts[(bus, type_id)] = c
    return InfrastructurePlan(counts)


def ev_series_csv(solution: DispatchSolution, scenario: FleetScenario) -> str:
    """Per-EV dispatch series: (ev, t, p_kw, soc_after, state, node)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema_version", 1])
    writer.writerow(["ev", "t", "p_kw", "soc_after", "state", "node"])
    for idx, ev in enumerate(scenario.evs):
        for t in range(scenario.time.horizon_steps):
            node = scenario.availability(ev.id, t)
            state = solution.plug[idx, t] or ("away" if node is None else "idle")
            writer.writerow([
                ev.id, t,
                repr(float(solution.p_kw[idx, t])),
                repr(float(solution.soc[idx, t + 1])),
                state,
                "" if node is None else node,
            ])
    return buf.getvalue()


def node_series_csv(solution: DispatchSolution) -> str:
    """Per-node network series: (node, t, p_net_pu, v_pu, theta_rad)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema_version", 1])
    writer.writerow(["node", "t", "p_net_pu", "v_pu", "theta_rad"])
    for b, n in enumerate(solution.bus_ids):
        for t in range(solution.p_net.shape[1]):
            writer.writerow([
                n, t,
                repr(float(solution.p_net[b, t])),
                repr(float(solution.v[b, t])),
                repr(float(solution.theta[b, t])),
            ])
    return buf.getvalue()
