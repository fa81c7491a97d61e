"""Solver-agnostic mixed-integer linear model container.

Variables, rows, and the objective are plain named records kept in
declaration order; backends consume the matrix view, exporters the text view.
A model is mutable only while being built and is frozen before it reaches a
solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"

LE = "<="
GE = ">="
EQ = "=="

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-5


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lower: float
    upper: float


@dataclass(frozen=True)
class LinearRow:
    name: str
    coeffs: Mapping[str, float]
    sense: str
    rhs: float

    @property
    def group(self) -> str:
        return self.name.split("[", 1)[0]


class MilpModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self._vars: dict[str, Variable] = {}
        self._rows: dict[str, LinearRow] = {}
        self.objective_sense = "min"
        self.objective: dict[str, float] = {}
        self.objective_constant = 0.0
        self._frozen = False

    # -- construction -----------------------------------------------------

    def _check_mutable(self):
        if self._frozen:
            raise ModelError("model is frozen")

    def add_variable(self, name: str, kind: str = CONTINUOUS,
                     lower: float = 0.0, upper: float = math.inf) -> str:
        self._check_mutable()
        if name in self._vars:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind not in (CONTINUOUS, INTEGER, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if lower > upper:
            raise ModelError(f"{name}: lower bound exceeds upper bound")
        self._vars[name] = Variable(name, kind, float(lower), float(upper))
        return name

    def add_constraint(self, name: str, coeffs: Mapping[str, float],
                       sense: str, rhs: float):
        self._check_mutable()
        if name in self._rows:
            raise ModelError(f"duplicate constraint name {name!r}")
        if sense not in (LE, GE, EQ):
            raise ModelError(f"unknown sense {sense!r}")
        for var in coeffs:
            if var not in self._vars:
                raise ModelError(f"row {name!r} references undeclared variable {var!r}")
        clean = {v: float(c) for v, c in coeffs.items() if c != 0.0}
        self._rows[name] = LinearRow(name, clean, sense, float(rhs))

    def set_objective(self, coeffs: Mapping[str, float], sense: str = "min",
                      constant: float = 0.0):
        self._check_mutable()
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got {sense!r}")
        for var in coeffs:
            if var not in self._vars:
                raise ModelError(f"objective references undeclared variable {var!r}")
        self.objective_sense = sense
        self.objective = {v: float(c) for v, c in coeffs.items() if c != 0.0}
        self.objective_constant = float(constant)

    def freeze(self) -> "MilpModel":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- inspection --------------------------------------------------------

    @property
    def variables(self) -> list[Variable]:
        return list(self._vars.values())

    @property
    def rows(self) -> list[LinearRow]:
        return list(self._rows.values())

    def variable(self, name: str) -> Variable:
        return self._vars[name]

    def has_variable(self, name: str) -> bool:
        return name in self._vars

    def row(self, name: str) -> LinearRow:
        return self._rows[name]

    def group_rows(self, group: str) -> list[LinearRow]:
        return [r for r in self._rows.values() if r.group == group]

    def group_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self._rows.values():
            seen.setdefault(r.group, None)
        return list(seen)

    def integer_like(self) -> list[Variable]:
        return [v for v in self._vars.values() if v.kind in (INTEGER, BINARY)]

    # -- evaluation --------------------------------------------------------

    def evaluate_objective(self, values: Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in self.objective.items()) + self.objective_constant

    def evaluate_row(self, row: LinearRow, values: Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in row.coeffs.items())

    def check_solution(self, values: Mapping[str, float],
                       tol: float = FEASIBILITY_TOL,
                       int_tol: float = INTEGRALITY_TOL) -> list[str]:
        """List every constraint/bound/integrality violation beyond tolerance."""
        problems = []
        for var in self._vars.values():
            if var.name not in values:
                problems.append(f"missing value for {var.name}")
                continue
            x = values[var.name]
            if x < var.lower - tol or x > var.upper + tol:
                problems.append(f"{var.name}={x} outside bounds [{var.lower}, {var.upper}]")
            if var.kind in (INTEGER, BINARY) and abs(x - round(x)) > int_tol:
                problems.append(f"{var.name}={x} not integral")
        if problems:
            return problems
        for row in self._rows.values():
            lhs = self.evaluate_row(row, values)
            if row.sense == LE and lhs > row.rhs + tol:
                problems.append(f"{row.name}: {lhs} > {row.rhs}")
            elif row.sense == GE and lhs < row.rhs - tol:
                problems.append(f"{row.name}: {lhs} < {row.rhs}")
            elif row.sense == EQ and abs(lhs - row.rhs) > tol:
                problems.append(f"{row.name}: {lhs} != {row.rhs}")
        return problems

    # -- matrix view ---------------------------------------------------------

    def to_arrays(self):
        """(names, c, integrality, lb, ub, A, row_lo, row_hi, sense_const).

        Objective coefficients are sign-flipped for "max" so backends always
        minimize; ``sense_const`` is (+1, constant) for min and (-1, constant)
        for max, letting callers map the solver optimum back to the model's
        objective value.
        """
        names = list(self._vars)
        index = {n: i for i, n in enumerate(names)}
        nvar = len(names)
        c = np.zeros(nvar)
        for v, coef in self.objective.items():
            c[index[v]] = coef
        sign = 1.0
        if self.objective_sense == "max":
            c = -c
            sign = -1.0
        integrality = np.array(
            [0 if v.kind == CONTINUOUS else 1 for v in self._vars.values()],
            dtype=np.int64,
        )
        lb = np.array([v.lower for v in self._vars.values()])
        ub = np.array([v.upper for v in self._vars.values()])
        rows = list(self._rows.values())
        data, ridx, cidx = [], [], []
        row_lo = np.full(len(rows), -np.inf)
        row_hi = np.full(len(rows), np.inf)
        for i, row in enumerate(rows):
            for v, coef in row.coeffs.items():
                ridx.append(i)
                cidx.append(index[v])
                data.append(coef)
            if row.sense in (GE, EQ):
                row_lo[i] = row.rhs
            if row.sense in (LE, EQ):
                row_hi[i] = row.rhs
        A = sp.csr_matrix((data, (ridx, cidx)), shape=(len(rows), nvar))
        return names, c, integrality, lb, ub, A, row_lo, row_hi, (sign, self.objective_constant)


def total_assignments(variables: Iterable[Variable]) -> float:
    """Raw count of integer/binary assignments (product of domain sizes)."""
    total = 1.0
    for v in variables:
        if v.kind == CONTINUOUS:
            continue
        if math.isinf(v.lower) or math.isinf(v.upper):
            return math.inf
        total *= math.floor(v.upper) - math.ceil(v.lower) + 1
    return total
