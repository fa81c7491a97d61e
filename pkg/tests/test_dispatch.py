import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evgridplan.builder import BuildConfig, BuildMode, build
from evgridplan.chargers import InfrastructurePlan, default_catalog
from evgridplan.dispatch import (
    DispatchError,
    DispatchWeights,
    dispatch,
    ev_series_csv,
    node_series_csv,
    stage2_objective,
    uniform_redistribute,
)
from evgridplan.fleet import generate_fleet
from evgridplan.solver import SolveOptions, brute_force_oracle

from conftest import micro_scenario, slow_only, tiny_network

GAP0 = SolveOptions(relative_gap=0.0, time_limit=120.0)


def test_weights_validation():
    with pytest.raises(DispatchError):
        DispatchWeights(w1=2.0, w2=1.0)
    with pytest.raises(DispatchError):
        DispatchWeights(w1=-1.0, w2=1.0)
    assert DispatchWeights(w1=0.0, w2=1.0).w2 == 1.0


def test_already_charged_ev_zero_objective():
    net = tiny_network(2)
    scen = micro_scenario(net, [{"home": 1, "work": 2, "initial": 1.0, "target": 1.0}],
                          horizon=2)
    plan = InfrastructurePlan({(1, "slow_single"): 1, (2, "slow_single"): 1})
    result = dispatch(scen, net, plan, slow_only(), solve_options=GAP0)
    assert result.status == "optimal"
    assert result.j_cum == pytest.approx(0.0, abs=1e-9)
    assert result.j_term == pytest.approx(0.0, abs=1e-9)


def test_single_ev_closed_form(cigre):
    # >= 8 plugged hours on one slow port: 0.10 + 0.85*7.5*8/40 caps at 1.0
    scen = generate_fleet(1, 40.0, cigre, seed=4, soc_init_range=(0.10, 0.10))
    home = scen.evs[0].home_node
    plan = InfrastructurePlan({(home, "slow_single"): 1})
    result = dispatch(scen, cigre, plan, default_catalog(), solve_options=GAP0)
    assert result.status == "optimal"
    assert result.final_soc(0) == pytest.approx(1.0, abs=1e-6)
    assert len(scen.available_steps(0)) >= 8


def test_micro_dispatch_matches_oracle():
    net = tiny_network(2)
    scen = micro_scenario(
        net,
        [
            {"home": 1, "work": 2, "initial": 0.10, "battery": 40.0},
            {"home": 2, "work": 1, "initial": 0.30, "battery": 40.0},
        ],
        horizon=2,
    )
    plan = InfrastructurePlan({(1, "slow_single"): 1})
    catalog = slow_only()
    result = dispatch(scen, net, plan, catalog, solve_options=GAP0)
    assert result.status == "optimal"

    model = build(scen, net, catalog, BuildMode.dispatch_mode(plan), BuildConfig())
    coeffs, constant = stage2_objective(scen, DispatchWeights())
    model.set_objective(coeffs, constant=constant)
    model.freeze()
    oracle = brute_force_oracle(model)
    assert oracle.status == "optimal"
    assert result.objective == pytest.approx(oracle.objective, abs=1e-6)


def test_superset_plan_never_hurts():
    net = tiny_network(2)
    scen = micro_scenario(
        net,
        [
            {"home": 1, "work": 2, "initial": 0.10, "battery": 40.0},
            {"home": 1, "work": 2, "initial": 0.20, "battery": 40.0},
        ],
        horizon=2,
    )
    catalog = slow_only()
    small = InfrastructurePlan({(1, "slow_single"): 1})
    large = InfrastructurePlan({(1, "slow_single"): 1, (2, "slow_single"): 1})
    objs = {}
    for tag, plan in (("small", small), ("large", large)):
        model = build(scen, net, catalog, BuildMode.dispatch_mode(plan), BuildConfig())
        coeffs, constant = stage2_objective(scen, DispatchWeights())
        model.set_objective(coeffs, constant=constant)
        model.freeze()
        oracle = brute_force_oracle(model)
        assert oracle.status == "optimal"
        objs[tag] = oracle.objective
    assert objs["large"] <= objs["small"] + 1e-9


def test_terminal_objective_dominance():
    """With w2/w1 >= T*|V|, terminal SOC matches the terminal-only optimum."""
    net = tiny_network(2)
    evs = [
        {"home": 1, "work": 2, "initial": 0.10, "battery": 40.0},
        {"home": 1, "work": 2, "initial": 0.15, "battery": 40.0},
    ]
    scen = micro_scenario(net, evs, horizon=2)
    plan = InfrastructurePlan({(1, "slow_single"): 1})
    catalog = slow_only()
    bound = scen.time.horizon_steps * scen.n_evs  # T * |V| = 4
    mixed = dispatch(scen, net, plan, catalog,
                     DispatchWeights(w1=1.0, w2=float(bound)), GAP0)
    terminal_only = dispatch(scen, net, plan, catalog,
                             DispatchWeights(w1=0.0, w2=1.0), GAP0)
    assert mixed.status == "optimal" and terminal_only.status == "optimal"
    assert mixed.j_term == pytest.approx(terminal_only.j_term, abs=1e-6)


def test_dispatch_infeasible_status(cigre, catalog):
    scen = generate_fleet(1, 40.0, cigre, seed=4,
                          peak_fraction=1.0, base_profile=[1.0] * 24)
    plan = InfrastructurePlan({(scen.evs[0].home_node, "slow_single"): 1})
    result = dispatch(scen, cigre, plan, catalog, solve_options=GAP0,
                      soc_min_terminal=0.80)
    assert result.status == "infeasible"
    assert not result.feasible


def test_dispatch_without_reactive_rows(cigre, catalog):
    scen = generate_fleet(1, 40.0, cigre, seed=4)
    plan = InfrastructurePlan({(scen.evs[0].home_node, "slow_single"): 1})
    result = dispatch(scen, cigre, plan, catalog, solve_options=GAP0,
                      include_reactive=False)
    assert result.status == "optimal"
    assert result.q_net is None
    assert result.final_soc(0) == pytest.approx(1.0, abs=1e-6)


def test_uniform_redistribute_exact_division():
    net = tiny_network(5)
    plan = InfrastructurePlan({(1, "slow_single"): 10})
    uniform = uniform_redistribute(plan, net)
    assert uniform.counts == {(n, "slow_single"): 2 for n in (1, 2, 3, 4, 5)}


def test_uniform_redistribute_remainder_rule():
    from evgridplan.grid import Branch, Bus, GridNetwork
    import math

    buses = (Bus(0, True, 1000.0, False), Bus(1, False, 1000.0, True),
             Bus(3, False, 1000.0, True), Bus(5, False, 1000.0, True))
    branches = (Branch(0, 1, 10.0, -20.0), Branch(1, 3, 10.0, -20.0),
                Branch(3, 5, 10.0, -20.0))
    net = GridNetwork(buses, branches, 0.95, 1.05, -math.pi / 6, math.pi / 6,
                      20.0, 1000.0)
    plan = InfrastructurePlan({(1, "slow_single"): 7})
    uniform = uniform_redistribute(plan, net)
    assert uniform.counts == {
        (1, "slow_single"): 3, (3, "slow_single"): 2, (5, "slow_single"): 2,
    }


def test_uniform_redistribute_preserves_table_row_totals(cigre):
    row_600_20 = InfrastructurePlan({
        (7, "slow_single"): 12, (8, "fast_multi"): 2, (9, "slow_multi"): 25,
    })
    uniform = uniform_redistribute(row_600_20, cigre)
    assert uniform.type_totals() == row_600_20.type_totals()
    assert set(uniform.buses()) <= set(cigre.consumer_ids)


def test_uniform_redistribute_empty_plan(cigre):
    with pytest.raises(DispatchError, match="empty"):
        uniform_redistribute(InfrastructurePlan({}), cigre)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(
    st.tuples(st.sampled_from([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13]),
              st.sampled_from(["slow_single", "slow_multi", "fast_single", "fast_multi"])),
    st.integers(0, 40),
    min_size=1,
))
def test_uniform_redistribute_conserves_totals(counts):
    from evgridplan.grid import load_bundled_network

    net = load_bundled_network()
    plan = InfrastructurePlan(counts)
    if plan.is_empty():
        return
    uniform = uniform_redistribute(plan, net)
    assert uniform.type_totals() == plan.type_totals()
    for bus, _ in uniform.counts:
        assert bus in net.consumer_ids
    # even spread: per-type max and min bus counts differ by at most one
    for type_id, total in plan.type_totals().items():
        per_bus = [uniform.count(n, type_id) for n in net.consumer_ids]
        assert max(per_bus) - min(per_bus) <= 1
        assert sum(per_bus) == total


def test_series_csv_schemas(cigre, catalog):
    scen = generate_fleet(1, 40.0, cigre, seed=4)
    plan = InfrastructurePlan({(scen.evs[0].home_node, "slow_single"): 1})
    result = dispatch(scen, cigre, plan, catalog, solve_options=GAP0)
    ev_csv = ev_series_csv(result, scen)
    assert ev_csv.splitlines()[1] == "ev,t,p_kw,soc_after,state,node"
    assert len(ev_csv.splitlines()) == 2 + 24
    node_csv = node_series_csv(result)
    assert node_csv.splitlines()[1] == "node,t,p_net_pu,v_pu,theta_rad"
    assert len(node_csv.splitlines()) == 2 + 14 * 24
