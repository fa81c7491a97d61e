"""Shared MIP construction for both planning and dispatch stages.

Both stages use the identical physical constraint structure; they differ only
in whether charger counts are free integer variables (plan mode) or fixed
parameters (dispatch mode), and in the objective the caller attaches
afterwards.

Variables per EV i and step t: plug binaries ``xf``/``xs`` (fast/slow
connection), charge binaries ``yf``/``ys``, charging power ``p`` (kW), and
SOC fenceposts ``soc[i,k]`` for k = 0..T (``soc[i,t+1]`` is the state after
charging during step t). Per bus n and step t: net injections ``Pnet``/
``Qnet``, voltage ``V`` (p.u.) and angle ``th`` (rad), with slack buses
pinned to V = 1, th = 0 through fixed bounds.

Constraint families (stable row-name prefixes, part of the export contract):

==================== =====================================================
soc_dynamics         SOC transition soc[k+1] = soc[k] + eff*dt/E * p, plus
                     the fixed initial state
plug_exclusivity     at most one plug type per EV and step
charge_implies_plug  charging binary dominated by its plug binary
power_cap_by_type    p <= Pfast*yf + Pslow*ys (class per-port ratings)
away_disconnect      both plug binaries forced to 0 while the EV is away
p_balance            nodal active balance in p.u. with EV load in kW scaled
                     by 1/base_kva (slack rows intentionally absent)
q_balance            nodal reactive balance (base load only, EV q = 0)
flow_linear          linearized injection/state coupling over branches
state_limits         voltage and angle box on non-slack buses
nodal_ev_power       sum of EV power <= installed nodal capacity
transformer_limit    base load + EV load <= transformer rating
port_limit           simultaneous connections <= installed ports
soc_bounds           SOC floor/ceiling at every fencepost
soc_terminal         SOC floor at each EV's final parking fencepost
==================== =====================================================

Units: EV power and loads are built in kW and scaled into p.u. inside row
coefficients, never post hoc. Feasibility tolerance 1e-6 and integrality
tolerance 1e-5 are shared constants in :mod:`evgridplan.milp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .chargers import (
    FAST,
    SLOW,
    ChargerType,
    InfrastructurePlan,
    catalog_by_id,
    class_port_power,
    nodal_capacity,
)
from .fleet import FleetScenario
from .grid import GridNetwork, nodal_admittance
from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel

PLAN = "plan"
DISPATCH = "dispatch"

# Loose structural boxes; the physical limits live in state_limits rows.
V_SAFETY_BOUNDS = (0.5, 1.5)
THETA_SAFETY_BOUNDS = (-math.pi, math.pi)


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class BuildMode:
    """Plan mode frees N[n,j] as integers; dispatch mode fixes them."""

    kind: str
    plan: Optional[InfrastructurePlan] = None
    max_units_per_type: Optional[int] = None

    @classmethod
    def plan_mode(cls, max_units_per_type: Optional[int] = None) -> "BuildMode":
        return cls(kind=PLAN, max_units_per_type=max_units_per_type)

    @classmethod
    def dispatch_mode(cls, plan: InfrastructurePlan) -> "BuildMode":
        if plan is None:
            raise BuildError("dispatch mode requires an infrastructure plan")
        return cls(kind=DISPATCH, plan=plan)


@dataclass(frozen=True)
class BuildConfig:
    soc_floor: float = 0.05
    soc_terminal_min: float = 0.05
    include_reactive: bool = True
    enforce_capacity_constraints: bool = True  # ablation switch for nodal EV power


def n_var(n: int, type_id: str) -> str:
    return f"N[{n},{type_id}]"


def xf_var(i: int, t: int) -> str:
    return f"xf[{i},{t}]"


def xs_var(i: int, t: int) -> str:
    return f"xs[{i},{t}]"


def yf_var(i: int, t: int) -> str:
    return f"yf[{i},{t}]"


def ys_var(i: int, t: int) -> str:
    return f"ys[{i},{t}]"


def p_var(i: int, t: int) -> str:
    return f"p[{i},{t}]"


def soc_var(i: int, k: int) -> str:
    return f"soc[{i},{k}]"


def pnet_var(n: int, t: int) -> str:
    return f"Pnet[{n},{t}]"


def qnet_var(n: int, t: int) -> str:
    return f"Qnet[{n},{t}]"


def v_var(n: int, t: int) -> str:
    return f"V[{n},{t}]"


def th_var(n: int, t: int) -> str:
    return f"th[{n},{t}]"


def build(
    scenario: FleetScenario,
    network: GridNetwork,
    catalog: Iterable[ChargerType],
    mode: BuildMode,
    config: BuildConfig = BuildConfig(),
) -> MilpModel:
    """Assemble the stage-shared model; the caller attaches the objective.

    The returned model is not frozen so the planning or dispatch layer can
    still set its objective; freeze before handing it to a solver.
    """
    catalog = list(catalog)
    if not catalog:
        raise BuildError("catalog must not be empty")
    types = catalog_by_id(catalog)
    consumer_ids = list(network.consumer_ids)
    bus_ids = network.bus_ids
    for ev in scenario.evs:
        for node in (ev.home_node, ev.work_node):
            if node not in consumer_ids:
                raise BuildError(f"EV {ev.id}: node {node} is not a consumer bus of the network")
    if mode.kind == DISPATCH:
        for (bus, type_id) in mode.plan.counts:
            if bus not in consumer_ids:
                raise BuildError(f"plan places chargers on non-consumer bus {bus}")
            if type_id not in types:
                raise BuildError(f"plan references unknown charger type {type_id!r}")
    elif mode.kind != PLAN:
        raise BuildError(f"unknown build mode {mode.kind!r}")

    T = scenario.time.horizon_steps
    dt = scenario.time.step_hours
    base_kva = network.base_kva
    p_fast = class_port_power(catalog, FAST)
    p_slow = class_port_power(catalog, SLOW)
    p_cap = max(p_fast, p_slow)

    avail: dict[tuple[int, int], Optional[int]] = {}
    for ev in scenario.evs:
        for t in range(T):
            avail[(ev.id, t)] = scenario.availability(ev.id, t)
    evs_at: dict[tuple[int, int], list[int]] = {}
    for (i, t), node in avail.items():
        if node is not None:
            evs_at.setdefault((node, t), []).append(i)

    model = MilpModel("evgridplan")

    # Variables, declaration order: N (plan mode), per-EV binaries and power,
    # SOC fenceposts, then node-level state. The brute-force oracle walks
    # integer variables in this order.
    if mode.kind == PLAN:
        # One port per EV is always enough, so |V| units of any type bounds
        # the optimum. Tighter per-type bounds measured slower in HiGHS.
        n_max = mode.max_units_per_type
        if n_max is None:
            n_max = len(scenario.evs)
        for n in consumer_ids:
            for ct in catalog:
                model.add_variable(n_var(n, ct.id), INTEGER, 0, n_max)

    for ev in scenario.evs:
        for t in range(T):
            model.add_variable(xf_var(ev.id, t), BINARY)
            model.add_variable(xs_var(ev.id, t), BINARY)
            model.add_variable(yf_var(ev.id, t), BINARY)
            model.add_variable(ys_var(ev.id, t), BINARY)
            model.add_variable(p_var(ev.id, t), CONTINUOUS, 0.0, p_cap)
        for k in range(T + 1):
            model.add_variable(soc_var(ev.id, k), CONTINUOUS, 0.0, 1.0)

    slack_set = set(network.slack_ids)
    for n in bus_ids:
        is_slack = n in slack_set
        for t in range(T):
            model.add_variable(pnet_var(n, t), CONTINUOUS, -math.inf, math.inf)
            if config.include_reactive:
                model.add_variable(qnet_var(n, t), CONTINUOUS, -math.inf, math.inf)
            if is_slack:
                model.add_variable(v_var(n, t), CONTINUOUS, 1.0, 1.0)
                model.add_variable(th_var(n, t), CONTINUOUS, 0.0, 0.0)
            else:
                model.add_variable(v_var(n, t), CONTINUOUS, *V_SAFETY_BOUNDS)
                model.add_variable(th_var(n, t), CONTINUOUS, *THETA_SAFETY_BOUNDS)

    # -- EV-level families ---------------------------------------------------
    for ev in scenario.evs:
        i = ev.id
        model.add_constraint(
            f"soc_dynamics[init,{i}]", {soc_var(i, 0): 1.0}, EQ, ev.initial_soc
        )
        gain = ev.efficiency * dt / ev.battery_kwh
        for t in range(T):
            model.add_constraint(
                f"soc_dynamics[{i},{t}]",
                {soc_var(i, t + 1): 1.0, soc_var(i, t): -1.0, p_var(i, t): -gain},
                EQ,
                0.0,
            )
            model.add_constraint(
                f"plug_exclusivity[{i},{t}]",
                {xf_var(i, t): 1.0, xs_var(i, t): 1.0},
                LE,
                1.0,
            )
            model.add_constraint(
                f"charge_implies_plug[f,{i},{t}]",
                {yf_var(i, t): 1.0, xf_var(i, t): -1.0},
                LE,
                0.0,
            )
            model.add_constraint(
                f"charge_implies_plug[s,{i},{t}]",
                {ys_var(i, t): 1.0, xs_var(i, t): -1.0},
                LE,
                0.0,
            )
            model.add_constraint(
                f"power_cap_by_type[{i},{t}]",
                {p_var(i, t): 1.0, yf_var(i, t): -p_fast, ys_var(i, t): -p_slow},
                LE,
                0.0,
            )
            if avail[(i, t)] is None:
                model.add_constraint(
                    f"away_disconnect[{i},{t}]",
                    {xf_var(i, t): 1.0, xs_var(i, t): 1.0},
                    EQ,
                    0.0,
                )

    # -- node-level families ---------------------------------------------------
    for n in bus_ids:
        is_slack = n in slack_set
        is_consumer = n in consumer_ids
        for t in range(T):
            if not is_slack:
                p_load = q_load = 0.0
                if is_consumer:
                    p_load, q_load = scenario.base_load(n, t)
                coeffs = {pnet_var(n, t): 1.0}
                for i in evs_at.get((n, t), ()):
                    coeffs[p_var(i, t)] = 1.0 / base_kva
                model.add_constraint(f"p_balance[{n},{t}]", coeffs, EQ, -p_load / base_kva)
                if config.include_reactive:
                    model.add_constraint(
                        f"q_balance[{n},{t}]",
                        {qnet_var(n, t): 1.0},
                        EQ,
                        -q_load / base_kva,
                    )

            p_coeffs = {pnet_var(n, t): 1.0}
            q_coeffs = {qnet_var(n, t): 1.0} if config.include_reactive else None
            for m in network.neighbors(n):
                g, b = nodal_admittance(network, n, m)
                p_coeffs[v_var(n, t)] = p_coeffs.get(v_var(n, t), 0.0) - g
                p_coeffs[v_var(m, t)] = p_coeffs.get(v_var(m, t), 0.0) + g
                p_coeffs[th_var(n, t)] = p_coeffs.get(th_var(n, t), 0.0) + b
                p_coeffs[th_var(m, t)] = p_coeffs.get(th_var(m, t), 0.0) - b
                if q_coeffs is not None:
                    q_coeffs[v_var(n, t)] = q_coeffs.get(v_var(n, t), 0.0) + b
                    q_coeffs[v_var(m, t)] = q_coeffs.get(v_var(m, t), 0.0) - b
                    q_coeffs[th_var(n, t)] = q_coeffs.get(th_var(n, t), 0.0) + g
                    q_coeffs[th_var(m, t)] = q_coeffs.get(th_var(m, t), 0.0) - g
            model.add_constraint(f"flow_linear[p,{n},{t}]", p_coeffs, EQ, 0.0)
            if q_coeffs is not None:
                model.add_constraint(f"flow_linear[q,{n},{t}]", q_coeffs, EQ, 0.0)

            if not is_slack:
                model.add_constraint(
                    f"state_limits[vlo,{n},{t}]", {v_var(n, t): 1.0}, GE, network.v_min
                )
                model.add_constraint(
                    f"state_limits[vhi,{n},{t}]", {v_var(n, t): 1.0}, LE, network.v_max
                )
                model.add_constraint(
                    f"state_limits[tlo,{n},{t}]", {th_var(n, t): 1.0}, GE, network.theta_min
                )
                model.add_constraint(
                    f"state_limits[thi,{n},{t}]", {th_var(n, t): 1.0}, LE, network.theta_max
                )

    # -- infrastructure coupling ------------------------------------------------
    for n in consumer_ids:
        if mode.kind == DISPATCH:
            p_max_n, ports_n = nodal_capacity(mode.plan, catalog, n)
        s_tr = network.bus(n).transformer_kva
        for t in range(T):
            here = evs_at.get((n, t), ())
            p_load, _ = scenario.base_load(n, t)

            if config.enforce_capacity_constraints:
                coeffs = {p_var(i, t): 1.0 for i in here}
                if mode.kind == PLAN:
                    for ct in catalog:
                        coeffs[n_var(n, ct.id)] = (
                            -ct.rated_power_per_port_kw * ct.port_multiplier
                        )
                    rhs = 0.0
                else:
                    rhs = p_max_n
                model.add_constraint(f"nodal_ev_power[{n},{t}]", coeffs, LE, rhs)

            model.add_constraint(
                f"transformer_limit[{n},{t}]",
                {p_var(i, t): 1.0 for i in here},
                LE,
                s_tr - p_load,
            )

            coeffs = {}
            for i in here:
                coeffs[xf_var(i, t)] = 1.0
                coeffs[xs_var(i, t)] = 1.0
            if mode.kind == PLAN:
                for ct in catalog:
                    coeffs[n_var(n, ct.id)] = -float(ct.port_multiplier)
                rhs = 0.0
            else:
                rhs = float(ports_n)
            model.add_constraint(f"port_limit[{n},{t}]", coeffs, LE, rhs)

    # -- SOC box and terminal floor ------------------------------------------------
    for ev in scenario.evs:
        i = ev.id
        for k in range(T + 1):
            model.add_constraint(
                f"soc_bounds[lo,{i},{k}]", {soc_var(i, k): 1.0}, GE, config.soc_floor
            )
            model.add_constraint(
                f"soc_bounds[hi,{i},{k}]", {soc_var(i, k): 1.0}, LE, 1.0
            )
        t_final = scenario.terminal_step(i)
        if t_final is not None:
            model.add_constraint(
                f"soc_terminal[{i}]",
                {soc_var(i, t_final + 1): 1.0},
                GE,
                config.soc_terminal_min,
            )

    return model


def terminal_fencepost(scenario: FleetScenario, ev_id: int) -> int:
    """SOC fencepost index holding the EV's end-of-final-session state."""
    t_final = scenario.terminal_step(ev_id)
    if t_final is None:
        return scenario.time.horizon_steps
    return t_final + 1
