import math
import os
import stat
import sys
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from evgridplan.milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    MilpModel,
)
from evgridplan.solver import (
    BackendUnavailable,
    ExternalMipBackend,
    GlpkBackend,
    HighsBackend,
    OracleLimitError,
    SolveOptions,
    SolverError,
    brute_force_oracle,
    export_model,
    get_backend,
    parse_cbc_solution,
    read_mps,
    solve,
)

GAP0 = SolveOptions(relative_gap=0.0, time_limit=60.0)


def one_var_model():
    m = MilpModel("one")
    m.add_variable("x", CONTINUOUS, 0.0, math.inf)
    m.add_constraint("floor[0]", {"x": 1.0}, GE, 3.0)
    m.set_objective({"x": 1.0})
    return m.freeze()


def contradictory_model():
    m = MilpModel("bad")
    m.add_variable("x", CONTINUOUS, 0.0, math.inf)
    m.add_constraint("lo[0]", {"x": 1.0}, GE, 1.0)
    m.add_constraint("hi[0]", {"x": 1.0}, LE, 0.0)
    m.set_objective({"x": 1.0})
    return m.freeze()


@pytest.mark.parametrize("backend", [HighsBackend(), GlpkBackend()])
def test_one_variable_lp(backend):
    sol = backend.solve(one_var_model(), GAP0)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0)
    assert sol.values["x"] == pytest.approx(3.0)


@pytest.mark.parametrize("backend", [HighsBackend(), GlpkBackend()])
def test_contradictory_rows_infeasible(backend):
    sol = backend.solve(contradictory_model(), GAP0)
    assert sol.status == "infeasible"
    assert sol.values == {}


def test_solve_requires_frozen():
    m = MilpModel("m")
    m.add_variable("x")
    with pytest.raises(SolverError, match="frozen"):
        solve(m)


def test_export_empty_model():
    m = MilpModel("empty").freeze()
    mps = export_model(m, "mps")
    assert "ROWS" in mps and "ENDATA" in mps
    lp = export_model(m, "lp")
    assert lp.splitlines()[-1] == "End"


def test_export_deterministic():
    m = one_var_model()
    assert export_model(m, "mps") == export_model(m, "mps")
    assert export_model(m, "lp") == export_model(m, "lp")


def test_export_requires_frozen():
    m = MilpModel("m")
    m.add_variable("x")
    with pytest.raises(SolverError, match="frozen"):
        export_model(m, "mps")


def test_mps_round_trip_hand_model():
    m = MilpModel("rt")
    m.add_variable("b", BINARY)
    m.add_variable("k", INTEGER, -2, 7)
    m.add_variable("u", CONTINUOUS, -math.inf, math.inf)
    m.add_variable("w", CONTINUOUS, 0.5, 0.5)
    m.add_variable("lonely", CONTINUOUS, 0.0, 4.0)  # appears in no row
    m.add_constraint("mix[0]", {"b": 2.0, "k": -1.5, "u": 0.25}, LE, 3.75)
    m.add_constraint("tie[0]", {"u": 1.0, "w": -1.0}, EQ, 0.0)
    m.add_constraint("deep[0]", {"k": 1.0}, GE, -1.0)
    m.set_objective({"b": 1.0, "k": 0.125, "u": -1.0}, constant=2.5)
    m.freeze()
    text = export_model(m, "mps")
    again = read_mps(text)
    assert export_model(again, "mps") == text
    assert [v.name for v in again.variables] == [v.name for v in m.variables]
    for v1, v2 in zip(m.variables, again.variables):
        assert (v1.kind, v1.lower, v1.upper) == (v2.kind, v2.lower, v2.upper)
    for r1, r2 in zip(m.rows, again.rows):
        assert (r1.name, dict(r1.coeffs), r1.sense, r1.rhs) == (
            r2.name, dict(r2.coeffs), r2.sense, r2.rhs)
    assert again.objective_constant == m.objective_constant


def test_maximize_round_trip_and_solve():
    m = MilpModel("mx")
    m.add_variable("x", CONTINUOUS, 0.0, 5.0)
    m.add_constraint("cap[0]", {"x": 2.0}, LE, 6.0)
    m.set_objective({"x": 1.0}, sense="max")
    m.freeze()
    sol = HighsBackend().solve(m, GAP0)
    assert sol.objective == pytest.approx(3.0)
    again = read_mps(export_model(m, "mps"))
    assert again.objective_sense == "max"
    sol2 = HighsBackend().solve(again, GAP0)
    assert sol2.objective == pytest.approx(3.0)


def test_name_mangling_collision():
    m = MilpModel("clash")
    m.add_variable("a b")
    m.add_variable("a_b")
    m.freeze()
    with pytest.raises(SolverError, match="collision"):
        export_model(m, "mps")


# -- random micro models: oracle vs both backends ---------------------------


@st.composite
def micro_milp(draw):
    """Small bounded MILP with a guaranteed feasible point (all-zeros)."""
    m = MilpModel("hyp")
    n_bin = draw(st.integers(1, 4))
    n_int = draw(st.integers(0, 2))
    n_cont = draw(st.integers(0, 2))
    names = []
    for j in range(n_bin):
        names.append(m.add_variable(f"b{j}", BINARY))
    for j in range(n_int):
        names.append(m.add_variable(f"k{j}", INTEGER, 0, draw(st.integers(1, 3))))
    for j in range(n_cont):
        names.append(m.add_variable(f"c{j}", CONTINUOUS, 0.0, draw(st.integers(1, 5))))
    coef = st.integers(-4, 4).map(float)
    n_rows = draw(st.integers(1, 5))
    for r in range(n_rows):
        support = draw(st.lists(st.sampled_from(names), min_size=1, max_size=4,
                                unique=True))
        coeffs = {v: draw(coef) for v in support}
        # keep the all-zeros point feasible so instances are never vacuous
        rhs = draw(st.integers(0, 6).map(float))
        m.add_constraint(f"r[{r}]", coeffs, LE, rhs)
    m.set_objective({v: draw(coef) for v in names})
    return m.freeze()


@settings(max_examples=40, deadline=None)
@given(micro_milp())
def test_oracle_matches_backends(model):
    oracle = brute_force_oracle(model)
    assert oracle.status == "optimal"
    highs = HighsBackend().solve(model, GAP0)
    assert highs.status == "optimal"
    assert highs.objective == pytest.approx(oracle.objective, abs=1e-6)
    glpk = GlpkBackend().solve(model, GAP0)
    assert glpk.objective == pytest.approx(oracle.objective, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(micro_milp())
def test_mps_round_trip_random(model):
    text = export_model(model, "mps")
    assert export_model(read_mps(text), "mps") == text


@settings(max_examples=15, deadline=None)
@given(micro_milp())
def test_oracle_dominance_at_nonzero_gap(model):
    """A feasible incumbent can never beat the enumerated optimum."""
    oracle = brute_force_oracle(model)
    sol = HighsBackend().solve(model, SolveOptions(relative_gap=0.05, time_limit=60))
    assert sol.feasible
    assert sol.objective >= oracle.objective - 1e-9
    assert sol.achieved_gap <= 0.05 + 1e-12


def test_highs_timeout_maps_to_status():
    # random dense knapsack-style instance; tiny limit forces a timeout unless
    # HiGHS happens to finish in presolve, in which case there is nothing to test
    import numpy as np

    rng = np.random.default_rng(0)
    m = MilpModel("slow")
    names = [m.add_variable(f"b{j}", BINARY) for j in range(60)]
    for r in range(30):
        support = rng.choice(60, size=12, replace=False)
        coeffs = {names[j]: float(rng.integers(1, 9)) for j in support}
        m.add_constraint(f"r[{r}]", coeffs, LE, float(rng.integers(10, 30)))
    m.set_objective({n: -float(rng.integers(1, 9)) for n in names})
    m.freeze()
    sol = HighsBackend().solve(m, SolveOptions(relative_gap=0.0, time_limit=0.05))
    if sol.status == "optimal":
        pytest.skip("instance solved inside the time limit")
    assert sol.status == "timeout"


def test_oracle_all_fixed_variables():
    m = MilpModel("fixed")
    m.add_variable("x", INTEGER, 2, 2)
    m.add_variable("y", CONTINUOUS, 1.5, 1.5)
    m.add_constraint("r[0]", {"x": 1.0, "y": 2.0}, LE, 6.0)
    m.set_objective({"x": 3.0, "y": -2.0}, constant=1.0)
    m.freeze()
    sol = brute_force_oracle(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3 * 2 - 2 * 1.5 + 1.0)


def test_oracle_detects_infeasibility():
    sol = brute_force_oracle(contradictory_model())
    assert sol.status == "infeasible"


def test_oracle_detects_constant_row_infeasibility():
    # empty coefficient sets occur naturally (e.g. capacity rows with no
    # chargeable EVs); a negative rhs must still mean infeasible
    m = MilpModel("const")
    m.add_variable("x", BINARY)
    m.add_constraint("ghost[0]", {}, LE, -5.0)
    m.set_objective({"x": 1.0})
    m.freeze()
    assert brute_force_oracle(m).status == "infeasible"
    assert HighsBackend().solve(m, GAP0).status == "infeasible"


def test_oracle_limit():
    m = MilpModel("big")
    for j in range(30):
        m.add_variable(f"b{j}", BINARY)
    m.set_objective({})
    m.freeze()
    with pytest.raises(OracleLimitError):
        brute_force_oracle(m, integer_enumeration_limit=2 ** 20)


def test_oracle_respects_integrality_over_lp_relaxation():
    # LP relaxation would take x = 1.5; the true optimum needs x integral
    m = MilpModel("gap")
    m.add_variable("x", INTEGER, 0, 10)
    m.add_constraint("lo[0]", {"x": 2.0}, GE, 3.0)
    m.set_objective({"x": 1.0})
    m.freeze()
    sol = brute_force_oracle(m)
    assert sol.objective == pytest.approx(2.0)
    assert HighsBackend().solve(m, GAP0).objective == pytest.approx(2.0)


# -- external process backend ------------------------------------------------


FAKE_SOLVER = textwrap.dedent(
    """\
    #!__PYTHON__
    # CBC-workalike test stub: reads an MPS model, solves in-process, writes a
    # CBC-format solution file. Argument layout mirrors the real CBC CLI.
    import sys

    sys.path[:0] = __PATH__
    from evgridplan.solver import HighsBackend, SolveOptions, read_mps

    args = sys.argv[1:]
    model_path = args[0]
    sol_path = args[args.index("solution") + 1]
    gap = float(args[args.index("-ratioGap") + 1])
    model = read_mps(open(model_path).read())
    sol = HighsBackend().solve(model, SolveOptions(relative_gap=gap, time_limit=60))
    with open(sol_path, "w") as fh:
        if sol.status == "infeasible":
            fh.write("Infeasible - objective value 0.00000000\\n")
        else:
            head = "Optimal" if sol.status == "optimal" else "Stopped on gap"
            fh.write("%s - objective value %.17g\\n" % (head, sol.objective))
            for idx, (name, value) in enumerate(sol.values.items()):
                fh.write("%7d %s %.17g 0\\n" % (idx, name, value))
    """
)


@pytest.fixture()
def fake_cbc(tmp_path):
    script = tmp_path / "fakecbc.py"
    body = FAKE_SOLVER.replace("__PYTHON__", sys.executable).replace(
        "__PATH__", repr([p for p in sys.path if p])
    )
    script.write_text(body, encoding="utf-8")
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return str(script)


def test_external_backend_round_trip(fake_cbc):
    backend = ExternalMipBackend(executable=fake_cbc)
    m = MilpModel("ext")
    m.add_variable("x", INTEGER, 0, 9)
    m.add_variable("y", CONTINUOUS, 0.0, 4.0)
    m.add_constraint("need[0]", {"x": 1.0, "y": 1.0}, GE, 5.5)
    m.set_objective({"x": 2.0, "y": 1.0})
    m.freeze()
    sol = backend.solve(m, GAP0)
    assert sol.status == "optimal"
    oracle = brute_force_oracle(m)
    assert sol.objective == pytest.approx(oracle.objective, abs=1e-6)


def test_external_backend_infeasible(fake_cbc):
    backend = ExternalMipBackend(executable=fake_cbc)
    sol = backend.solve(contradictory_model(), GAP0)
    assert sol.status == "infeasible"


def test_external_backend_unconfigured(monkeypatch):
    monkeypatch.delenv("EVGRIDPLAN_CBC", raising=False)
    backend = ExternalMipBackend()
    with pytest.raises(BackendUnavailable):
        backend.solve(one_var_model(), GAP0)


def test_parse_cbc_solution_statuses():
    m = one_var_model()
    sol = parse_cbc_solution("Optimal - objective value 3.0\n 0 x 3.0 0\n", m)
    assert sol.status == "optimal" and sol.values["x"] == 3.0
    sol = parse_cbc_solution("Stopped on time - objective value 3.0\n 0 x 3.0 0\n", m)
    assert sol.status == "timeout"
    sol = parse_cbc_solution("Stopped on gap - objective value 3.0\n 0 x 3.0 0\n", m)
    assert sol.status == "gap_feasible"
    sol = parse_cbc_solution("Infeasible - objective value 0\n", m)
    assert sol.status == "infeasible"
    with pytest.raises(SolverError, match="unrecognized"):
        parse_cbc_solution("Howdy\n", m)


def test_get_backend_selection(monkeypatch):
    assert isinstance(get_backend("highs"), HighsBackend)
    assert isinstance(get_backend("glpk"), GlpkBackend)
    assert isinstance(get_backend("cbc"), ExternalMipBackend)
    monkeypatch.setenv("EVGRIDPLAN_BACKEND", "glpk")
    assert isinstance(get_backend(), GlpkBackend)
    monkeypatch.delenv("EVGRIDPLAN_BACKEND")
    assert isinstance(get_backend(), HighsBackend)
    with pytest.raises(BackendUnavailable):
        get_backend("copperfield")


def test_solution_feasibility_recheck_property():
    model = one_var_model()
    for backend in (HighsBackend(), GlpkBackend()):
        sol = backend.solve(model, GAP0)
        assert model.check_solution(sol.values) == []
