"""Solving layer: model export, pluggable MIP backends, brute-force oracle.

Backends share one contract: ``backend.solve(model, options) -> Solution``.

* :class:`HighsBackend` — in-process HiGHS through ``scipy.optimize.milp``;
  the default here because this environment ships no standalone MIP binary.
* :class:`GlpkBackend` — exact in-process GLPK through cvxopt, used for
  independent cross-checks (ignores the gap option, always solves to
  optimality).
* :class:`ExternalMipBackend` — the process-external route: writes the model
  to an MPS file, invokes a CBC-compatible command, parses the solution
  file. Configure the executable via the ``EVGRIDPLAN_CBC`` env var or the
  constructor.

``brute_force_oracle`` enumerates every integer/binary assignment (depth
first, with sound interval pruning that can only discard provably infeasible
subtrees) and solves the remaining continuous LP per assignment. It is the
reference optimum for micro-instances and is deliberately independent of the
backend code paths.

Exports are canonical: declaration order, ``%.17g`` floats, byte-identical
across runs. ``read_mps`` parses the emitted dialect back into a model.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    FEASIBILITY_TOL,
    GE,
    INTEGER,
    INTEGRALITY_TOL,
    LE,
    MilpModel,
    total_assignments,
)

OPTIMAL = "optimal"
GAP_FEASIBLE = "gap_feasible"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout"

BACKEND_ENV = "EVGRIDPLAN_BACKEND"
CBC_PATH_ENV = "EVGRIDPLAN_CBC"

DEFAULT_CBC_TEMPLATE = (
    "{exe} {model} -seconds {time_limit} -ratioGap {gap} -threads {threads} "
    "-printingOptions all solve solution {solution}"
)


class SolverError(RuntimeError):
    pass


class BackendUnavailable(SolverError):
    pass


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    relative_gap: float = 0.05
    time_limit: float = 600.0
    threads: int = 1

    def __post_init__(self):
        if self.relative_gap < 0:
            raise ValueError("relative_gap must be nonnegative")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")


@dataclass(frozen=True)
class Solution:
    status: str
    values: Mapping[str, float] = field(default_factory=dict)
    objective: float = math.nan
    achieved_gap: float = math.nan

    @property
    def feasible(self) -> bool:
        return self.status in (OPTIMAL, GAP_FEASIBLE)

    def value(self, name: str) -> float:
        return self.values[name]


# ---------------------------------------------------------------------------
# canonical text export
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    if x == math.inf:
        return "+inf"
    if x == -math.inf:
        return "-inf"
    return f"{x:.17g}"


def _mangle_names(names: Iterable[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    seen: dict[str, str] = {}
    for name in names:
        mangled = "".join("_" if ch.isspace() else ch for ch in name)
        if mangled in seen and seen[mangled] != name:
            raise SolverError(f"name collision after format mangling: {mangled!r}")
        seen[mangled] = name
        out[name] = mangled
    return out


def export_model(model: MilpModel, format: str = "lp") -> str:
    """Serialize a frozen model to canonical LP or free-MPS text."""
    if not model.frozen:
        raise SolverError("model must be frozen before export")
    if format == "lp":
        return _export_lp(model)
    if format == "mps":
        return _export_mps(model)
    raise SolverError(f"unknown export format {format!r}")


def _lp_expr(coeffs: Mapping[str, float], names: Mapping[str, str]) -> str:
    if not coeffs:
        return "0"
    parts = []
    for var, coef in coeffs.items():
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(coef))} {names[var]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _export_lp(model: MilpModel) -> str:
    names = _mangle_names(
        [v.name for v in model.variables] + [r.name for r in model.rows]
    )
    lines = [f"\\ {model.name}"]
    lines.append("Minimize" if model.objective_sense == "min" else "Maximize")
    obj = _lp_expr(model.objective, names)
    if model.objective_constant:
        obj += f" + {_fmt(model.objective_constant)}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    sense_txt = {LE: "<=", GE: ">=", EQ: "="}
    for row in model.rows:
        lines.append(
            f" {names[row.name]}: {_lp_expr(row.coeffs, names)} "
            f"{sense_txt[row.sense]} {_fmt(row.rhs)}"
        )
    lines.append("Bounds")
    for var in model.variables:
        vn = names[var.name]
        if var.kind == BINARY:
            continue
        if var.lower == var.upper:
            lines.append(f" {vn} = {_fmt(var.lower)}")
        elif var.lower == -math.inf and var.upper == math.inf:
            lines.append(f" {vn} free")
        else:
            lines.append(f" {_fmt(var.lower)} <= {vn} <= {_fmt(var.upper)}")
    generals = [names[v.name] for v in model.variables if v.kind == INTEGER]
    if generals:
        lines.append("Generals")
        lines.extend(f" {g}" for g in generals)
    binaries = [names[v.name] for v in model.variables if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {b}" for b in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def _export_mps(model: MilpModel) -> str:
    names = _mangle_names(
        [v.name for v in model.variables] + [r.name for r in model.rows]
    )
    title = "".join("_" if ch.isspace() else ch for ch in model.name) or "model"
    lines = [f"NAME {title}"]
    if model.objective_sense == "max":
        lines.append("OBJSENSE")
        lines.append(" MAX")
    lines.append("ROWS")
    lines.append(" N obj")
    sense_letter = {LE: "L", GE: "G", EQ: "E"}
    for row in model.rows:
        lines.append(f" {sense_letter[row.sense]} {names[row.name]}")
    # column-major entries in variable declaration order
    entries: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for var, coef in model.objective.items():
        entries[var].append(("obj", coef))
    for row in model.rows:
        for var, coef in row.coeffs.items():
            entries[var].append((names[row.name], coef))
    lines.append("COLUMNS")
    in_integer = False
    marker = 0
    for var in model.variables:
        want_integer = var.kind in (INTEGER, BINARY)
        if want_integer != in_integer:
            tag = "INTORG" if want_integer else "INTEND"
            lines.append(f" MARKER{marker} 'MARKER' '{tag}'")
            marker += 1
            in_integer = want_integer
        rows_for_var = entries[var.name] or [("obj", 0.0)]
        for row_name, coef in rows_for_var:
            lines.append(f" {names[var.name]} {row_name} {_fmt(coef)}")
    if in_integer:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    if model.objective_constant:
        lines.append(f" RHS obj {_fmt(-model.objective_constant)}")
    for row in model.rows:
        if row.rhs:
            lines.append(f" RHS {names[row.name]} {_fmt(row.rhs)}")
    lines.append("BOUNDS")
    for var in model.variables:
        vn = names[var.name]
        if var.kind == BINARY:
            lines.append(f" BV BND {vn}")
            continue
        lo, hi = var.lower, var.upper
        if lo == hi:
            lines.append(f" FX BND {vn} {_fmt(lo)}")
            continue
        if lo == -math.inf and hi == math.inf:
            lines.append(f" FR BND {vn}")
            continue
        if lo == -math.inf:
            lines.append(f" MI BND {vn}")
        elif lo != 0.0 or var.kind == INTEGER:
            tag = "LI" if var.kind == INTEGER else "LO"
            lines.append(f" {tag} BND {vn} {_fmt(lo)}")
        if hi != math.inf:
            tag = "UI" if var.kind == INTEGER else "UP"
            lines.append(f" {tag} BND {vn} {_fmt(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def read_mps(text: str) -> MilpModel:
    """Parse the free-MPS dialect emitted by :func:`export_model`.

    Implemented independently of the writer (token-level parse, no shared
    state) so export/import round-trips are a real check.
    """
    section = None
    name = "model"
    sense = "min"
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, float]]] = {}
    col_integer: dict[str, bool] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list[tuple[str, float]]] = {}
    in_integer = False
    letter_to_sense = {"L": LE, "G": GE, "E": EQ}

    for raw in text.splitlines():
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        tokens = line.split()
        if is_header:
            section = tokens[0].upper()
            if section == "NAME" and len(tokens) > 1:
                name = tokens[1]
            if section == "ENDATA":
                break
            continue
        if section == "OBJSENSE":
            sense = "max" if tokens[0].upper().startswith("MAX") else "min"
        elif section == "ROWS":
            letter, row_name = tokens[0].upper(), tokens[1]
            if letter == "N":
                continue
            row_sense[row_name] = letter_to_sense[letter]
            row_order.append(row_name)
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                in_integer = tokens[2] == "'INTORG'"
                continue
            col = tokens[0]
            if col not in col_entries:
                col_entries[col] = []
                col_order.append(col)
                col_integer[col] = in_integer
            pairs = tokens[1:]
            for j in range(0, len(pairs), 2):
                col_entries[col].append((pairs[j], float(pairs[j + 1])))
        elif section == "RHS":
            # first token is the rhs-set name
            pairs = tokens[1:]
            for j in range(0, len(pairs), 2):
                rhs[pairs[j]] = float(pairs[j + 1])
        elif section == "RANGES":
            raise SolverError("RANGES section not supported by this reader")
        elif section == "BOUNDS":
            tag = tokens[0].upper()
            var = tokens[2]
            val = float(tokens[3]) if len(tokens) > 3 else math.nan
            bounds.setdefault(var, []).append((tag, val))

    model = MilpModel(name)
    for col in col_order:
        lo, hi = 0.0, math.inf
        kind = INTEGER if col_integer[col] else CONTINUOUS
        for tag, val in bounds.get(col, []):
            if tag == "BV":
                kind, lo, hi = BINARY, 0.0, 1.0
            elif tag == "FX":
                lo = hi = val
            elif tag == "FR":
                lo, hi = -math.inf, math.inf
            elif tag == "MI":
                lo = -math.inf
            elif tag in ("LO", "LI"):
                lo = val
            elif tag in ("UP", "UI"):
                hi = val
            else:
                raise SolverError(f"unsupported bound tag {tag}")
        model.add_variable(col, kind, lo, hi)

    obj_coeffs: dict[str, float] = {}
    row_coeffs: dict[str, dict[str, float]] = {r: {} for r in row_order}
    for col in col_order:
        for row_name, coef in col_entries[col]:
            if row_name == "obj":
                if coef:
                    obj_coeffs[col] = obj_coeffs.get(col, 0.0) + coef
            else:
                row_coeffs[row_name][col] = row_coeffs[row_name].get(col, 0.0) + coef
    for row_name in row_order:
        model.add_constraint(
            row_name, row_coeffs[row_name], row_sense[row_name], rhs.get(row_name, 0.0)
        )
    model.set_objective(obj_coeffs, sense=sense, constant=-rhs.get("obj", 0.0))
    return model.freeze()


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


def _verify(model: MilpModel, values: Mapping[str, float]):
    problems = model.check_solution(values, FEASIBILITY_TOL, INTEGRALITY_TOL)
    if problems:
        head = "; ".join(problems[:5])
        raise SolverError(f"backend returned an infeasible point: {head}")


class HighsBackend:
    """In-process HiGHS via scipy.optimize.milp. Deterministic, single thread."""

    name = "highs"

    def solve(self, model: MilpModel, options: SolveOptions = SolveOptions()) -> Solution:
        names, c, integrality, lb, ub, A, row_lo, row_hi, (sign, const) = model.to_arrays()
        if not names:
            return Solution(OPTIMAL, {}, model.objective_constant, 0.0)
        constraints = []
        if A.shape[0]:
            constraints.append(LinearConstraint(A, row_lo, row_hi))
        res = milp(
            c=c,
            constraints=constraints,
            integrality=integrality,
            bounds=Bounds(lb, ub),
            options={
                "mip_rel_gap": options.relative_gap,
                "time_limit": options.time_limit,
                "disp": False,
            },
        )
        if res.status == 2:
            return Solution(INFEASIBLE)
        if res.status == 3:
            raise SolverError("model is unbounded")
        if res.status == 1 and res.x is None:
            return Solution(TIMEOUT)
        if res.x is None:
            raise SolverError(f"HiGHS failed: {res.message}")
        values = {n: float(x) for n, x in zip(names, res.x)}
        objective = model.evaluate_objective(values)
        gap = res.mip_gap if res.mip_gap is not None else 0.0
        if res.status == 1:
            return Solution(TIMEOUT, values, objective, gap)
        status = OPTIMAL if gap <= 1e-9 else GAP_FEASIBLE
        _verify(model, values)
        return Solution(status, values, objective, float(gap))


class GlpkBackend:
    """Exact in-process GLPK via cvxopt; ignores the gap option."""

    name = "glpk"

    def solve(self, model: MilpModel, options: SolveOptions = SolveOptions()) -> Solution:
        try:
            from cvxopt import glpk, matrix, spmatrix
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise BackendUnavailable("cvxopt is not installed") from exc

        names, c, integrality, lb, ub, A, row_lo, row_hi, (sign, const) = model.to_arrays()
        if not names:
            return Solution(OPTIMAL, {}, model.objective_constant, 0.0)
        g_rows: list[tuple[np.ndarray, float]] = []
        eq_rows: list[tuple[np.ndarray, float]] = []
        A_dense = A.toarray() if A.shape[0] else np.zeros((0, len(names)))
        for i in range(A_dense.shape[0]):
            if row_lo[i] == row_hi[i]:
                eq_rows.append((A_dense[i], row_lo[i]))
                continue
            if np.isfinite(row_hi[i]):
                g_rows.append((A_dense[i], row_hi[i]))
            if np.isfinite(row_lo[i]):
                g_rows.append((-A_dense[i], -row_lo[i]))
        for j, name in enumerate(names):
            if integrality[j] and model.variable(name).kind == BINARY:
                continue  # glpk pins binaries itself
            e = np.zeros(len(names))
            e[j] = 1.0
            if lb[j] == ub[j]:
                eq_rows.append((e, lb[j]))
                continue
            if np.isfinite(ub[j]):
                g_rows.append((e, ub[j]))
            if np.isfinite(lb[j]):
                g_rows.append((-e, -lb[j]))

        G = matrix(np.array([r for r, _ in g_rows])) if g_rows else matrix(
            np.zeros((1, len(names)))
        )
        h = matrix(np.array([v for _, v in g_rows])) if g_rows else matrix([0.0])
        ints = {
            j for j in range(len(names))
            if integrality[j] and model.variable(names[j]).kind == INTEGER
        }
        bins = {
            j for j in range(len(names))
            if integrality[j] and model.variable(names[j]).kind == BINARY
        }
        kwargs = dict(
            c=matrix(c),
            G=G,
            h=h,
            I=ints,
            B=bins,
            options={"msg_lev": "GLP_MSG_OFF", "tm_lim": int(options.time_limit * 1000)},
        )
        if eq_rows:
            kwargs["A"] = matrix(np.array([r for r, _ in eq_rows]))
            kwargs["b"] = matrix(np.array([v for _, v in eq_rows]))
        status, x = glpk.ilp(**kwargs)
        if status != "optimal":
            if "infeasible" in status or status == "undefined":
                return Solution(INFEASIBLE)
            if "unknown" in status:
                return Solution(TIMEOUT)
            raise SolverError(f"GLPK returned status {status!r}")
        values = {n: float(x[j]) for j, n in enumerate(names)}
        objective = model.evaluate_objective(values)
        _verify(model, values)
        return Solution(OPTIMAL, values, objective, 0.0)


def parse_cbc_solution(text: str, model: MilpModel) -> Solution:
    """Parse a CBC ``solution`` file (first line status, then value rows)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SolverError("empty solver solution file")
    header = lines[0].strip()
    lowered = header.lower()
    if lowered.startswith("infeasible") or "integer infeasible" in lowered:
        return Solution(INFEASIBLE)
    if lowered.startswith("unbounded"):
        raise SolverError("model is unbounded")
    if lowered.startswith("stopped on time"):
        status = TIMEOUT
    elif lowered.startswith("stopped on gap"):
        status = GAP_FEASIBLE
    elif lowered.startswith("optimal"):
        status = OPTIMAL
    else:
        raise SolverError(f"unrecognized solver status line: {header!r}")

    mangled_to_name = {
        "".join("_" if ch.isspace() else ch for ch in v.name): v.name
        for v in model.variables
    }
    values = {v.name: 0.0 for v in model.variables}
    for line in lines[1:]:
        tokens = line.replace("**", " ").split()
        if len(tokens) < 3:
            continue
        var = mangled_to_name.get(tokens[1])
        if var is not None:
            values[var] = float(tokens[2])
    objective = model.evaluate_objective(values)
    return Solution(status, values, objective, math.nan)


class ExternalMipBackend:
    """Process-external backend: MPS file in, CBC-format solution file out.

    The command template receives {exe}, {model}, {solution}, {gap},
    {time_limit}, {threads}. The executable comes from the constructor or the
    ``EVGRIDPLAN_CBC`` environment variable.
    """

    name = "cbc"

    def __init__(self, executable: Optional[str] = None,
                 command_template: str = DEFAULT_CBC_TEMPLATE):
        self.executable = executable or os.environ.get(CBC_PATH_ENV)
        self.command_template = command_template

    def solve(self, model: MilpModel, options: SolveOptions = SolveOptions()) -> Solution:
        if not self.executable:
            raise BackendUnavailable(
                f"no external solver configured; set {CBC_PATH_ENV} or pass executable"
            )
        with tempfile.TemporaryDirectory(prefix="evgridplan_") as tmp:
            model_path = Path(tmp) / "model.mps"
            solution_path = Path(tmp) / "model.sol"
            model_path.write_text(export_model(model, "mps"), encoding="utf-8")
            command = self.command_template.format(
                exe=self.executable,
                model=model_path,
                solution=solution_path,
                gap=options.relative_gap,
                time_limit=options.time_limit,
                threads=options.threads,
            )
            try:
                proc = subprocess.run(
                    shlex.split(command),
                    capture_output=True,
                    text=True,
                    timeout=options.time_limit + 120,
                )
            except FileNotFoundError as exc:
                raise BackendUnavailable(f"solver executable not found: {exc}") from exc
            except subprocess.TimeoutExpired:
                return Solution(TIMEOUT)
            if not solution_path.exists():
                raise SolverError(
                    f"solver produced no solution file (exit {proc.returncode}): "
                    f"{proc.stderr[-500:] or proc.stdout[-500:]}"
                )
            solution = parse_cbc_solution(
                solution_path.read_text(encoding="utf-8"), model
            )
        if solution.status in (OPTIMAL, GAP_FEASIBLE):
            _verify(model, solution.values)
            gap = 0.0 if solution.status == OPTIMAL else options.relative_gap
            return Solution(solution.status, solution.values, solution.objective, gap)
        return solution


_BACKENDS = {
    "highs": HighsBackend,
    "glpk": GlpkBackend,
    "cbc": ExternalMipBackend,
}


def get_backend(name: Optional[str] = None):
    """Resolve a backend by name, the env var, or the default (highs)."""
    chosen = name or os.environ.get(BACKEND_ENV) or "highs"
    if chosen not in _BACKENDS:
        raise BackendUnavailable(
            f"unknown backend {chosen!r}; available: {sorted(_BACKENDS)}"
        )
    return _BACKENDS[chosen]()


def solve(model: MilpModel, options: SolveOptions = SolveOptions(),
          backend=None) -> Solution:
    """Solve a frozen model with the selected backend."""
    if not model.frozen:
        raise SolverError("model must be frozen before solving")
    backend = backend or get_backend()
    return backend.solve(model, options)


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------


def brute_force_oracle(model: MilpModel, integer_enumeration_limit: int = 2 ** 20) -> Solution:
    """True optimum by exhaustive enumeration of integer/binary assignments.

    Walks the integer variables in declaration order, pruning a partial
    assignment only when interval arithmetic over the remaining variable
    bounds proves some row unsatisfiable (sound: never discards a feasible
    completion). Each complete assignment leaves a pure LP over the
    continuous variables, solved exactly for these micro sizes.
    """
    int_vars = model.integer_like()
    raw_count = total_assignments(int_vars)
    if raw_count > integer_enumeration_limit:
        raise OracleLimitError(
            f"{raw_count:.3g} integer assignments exceed the limit "
            f"{integer_enumeration_limit}"
        )

    names = [v.name for v in model.variables]
    index = {n: j for j, n in enumerate(names)}
    kinds = [v.kind for v in model.variables]
    lb = np.array([v.lower for v in model.variables], dtype=float)
    ub = np.array([v.upper for v in model.variables], dtype=float)
    int_idx = [index[v.name] for v in int_vars]
    cont_idx = [j for j, k in enumerate(kinds) if k == CONTINUOUS]
    cont_pos = {j: p for p, j in enumerate(cont_idx)}

    minimize = model.objective_sense == "min"
    obj = np.zeros(len(names))
    for var, coef in model.objective.items():
        obj[index[var]] = coef
    if not minimize:
        obj = -obj

    rows = model.rows
    nrows = len(rows)
    row_vars: list[list[tuple[int, float]]] = []
    senses = []
    rhs = np.zeros(nrows)
    for r, row in enumerate(rows):
        row_vars.append([(index[v], c) for v, c in row.coeffs.items()])
        senses.append(row.sense)
        rhs[r] = row.rhs

    # interval state: lo/hi achievable LHS per row given current fixings
    row_min = np.zeros(nrows)
    row_max = np.zeros(nrows)
    for r, terms in enumerate(row_vars):
        for j, c in terms:
            a, b = c * lb[j], c * ub[j]
            row_min[r] += min(a, b)
            row_max[r] += max(a, b)

    touch: dict[int, list[tuple[int, float]]] = {}
    for r, terms in enumerate(row_vars):
        for j, c in terms:
            touch.setdefault(j, []).append((r, c))

    # continuous LP skeleton (rows that involve at least one continuous var)
    lp_rows = [r for r in range(nrows) if any(j in cont_pos for j, _ in row_vars[r])]
    ncont = len(cont_idx)
    A_ub_rows, A_eq_rows = [], []
    ub_meta, eq_meta = [], []  # (row index, sign) pairs composing b at the leaf
    for r in lp_rows:
        dense = np.zeros(ncont)
        for j, c in row_vars[r]:
            if j in cont_pos:
                dense[cont_pos[j]] = c
        if senses[r] == EQ:
            A_eq_rows.append(dense)
            eq_meta.append(r)
        elif senses[r] == LE:
            A_ub_rows.append(dense)
            ub_meta.append((r, 1.0))
        else:
            A_ub_rows.append(-dense)
            ub_meta.append((r, -1.0))
    A_ub = np.array(A_ub_rows) if A_ub_rows else None
    A_eq = np.array(A_eq_rows) if A_eq_rows else None
    c_cont = obj[cont_idx]
    cont_bounds = [(lb[j], ub[j]) for j in cont_idx]

    # integer-part contribution per row, updated during the walk
    int_part = np.zeros(nrows)
    assignment = np.zeros(len(names))
    tol = FEASIBILITY_TOL

    # root infeasibility: covers rows no assignment can repair, including
    # constant rows with empty coefficient sets
    for r in range(nrows):
        if senses[r] in (LE, EQ) and row_min[r] > rhs[r] + tol:
            return Solution(INFEASIBLE)
        if senses[r] in (GE, EQ) and row_max[r] < rhs[r] - tol:
            return Solution(INFEASIBLE)

    best = {"value": math.inf, "x": None}

    def leaf():
        const = float(sum(obj[j] * assignment[j] for j in int_idx))
        if ncont == 0:
            cand = const
            if cand < best["value"] - 1e-12:
                best["value"] = cand
                best["x"] = assignment.copy()
            return
        b_ub = np.array([sign * (rhs[r] - int_part[r]) for r, sign in ub_meta]) \
            if ub_meta else None
        b_eq = np.array([rhs[r] - int_part[r] for r in eq_meta]) if eq_meta else None
        res = linprog(
            c_cont,
            A_ub=A_ub, b_ub=b_ub,
            A_eq=A_eq, b_eq=b_eq,
            bounds=cont_bounds,
            method="highs",
        )
        if res.status != 0:
            return
        cand = const + float(res.fun)
        if cand < best["value"] - 1e-12:
            best["value"] = cand
            x = assignment.copy()
            for p, j in enumerate(cont_idx):
                x[j] = res.x[p]
            best["x"] = x

    def fix(j: int, val: float) -> list[tuple[int, float, float]]:
        undo = []
        for r, c in touch.get(j, ()):
            a, b = c * lb[j], c * ub[j]
            d_min = c * val - min(a, b)
            d_max = c * val - max(a, b)
            undo.append((r, d_min, d_max))
            row_min[r] += d_min
            row_max[r] += d_max
            int_part[r] += c * val
        return undo

    def unfix(j: int, val: float, undo) -> None:
        for r, d_min, d_max in undo:
            row_min[r] -= d_min
            row_max[r] -= d_max
        for r, c in touch.get(j, ()):
            int_part[r] -= c * val

    def violated(undo) -> bool:
        for r, _, _ in undo:
            s = senses[r]
            if s in (LE, EQ) and row_min[r] > rhs[r] + tol:
                return True
            if s in (GE, EQ) and row_max[r] < rhs[r] - tol:
                return True
        return False

    def walk(depth: int):
        if depth == len(int_idx):
            leaf()
            return
        j = int_idx[depth]
        for val in range(int(math.ceil(lb[j])), int(math.floor(ub[j])) + 1):
            assignment[j] = val
            undo = fix(j, float(val))
            if not violated(undo):
                walk(depth + 1)
            unfix(j, float(val), undo)
        assignment[j] = 0.0

    walk(0)

    if best["x"] is None:
        return Solution(INFEASIBLE)
    values = {n: float(best["x"][index[n]]) for n in names}
    objective = model.evaluate_objective(values)
    return Solution(OPTIMAL, values, objective, 0.0)
