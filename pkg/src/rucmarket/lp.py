"""Thin LP/MILP layer over scipy's HiGHS bindings.

Dual sign convention (minimisation): for a ``<=`` row the dual is
``-d(obj)/d(rhs) >= 0``; for an ``==`` row it is ``d(obj)/d(rhs)``. This is the
multiplier that appears with a ``+`` sign against the violation
``(a.x - b)`` in the Lagrangian, so duals plug straight into price formulas.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import csr_matrix

LE = "<="
EQ = "=="

TIME_LIMIT_ENV = "RUCMARKET_TIME_LIMIT"


class SolverError(RuntimeError):
    pass


class LinearProgram:
    """Minimisation problem assembled row by row.

    Variables and rows are addressed by integer index; names are kept only for
    export and debugging.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.integer: list[bool] = []
        self.row_names: list[str] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._rows: list[tuple] = []
        self.obj_constant = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def is_mip(self) -> bool:
        return any(self.integer)

    def add_var(self, name, lb=0.0, ub=np.inf, cost=0.0, integer=False) -> int:
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        self.integer.append(bool(integer))
        return len(self.var_names) - 1

    def add_binary(self, name, cost=0.0) -> int:
        return self.add_var(name, 0.0, 1.0, cost, integer=True)

    def add_row(self, coeffs: dict, sense: str, rhs: float, name: str = "") -> int:
        if sense not in (LE, EQ):
            raise ValueError(f"unknown sense {sense!r}; write >= rows as negated <=")
        cols = np.fromiter(coeffs.keys(), dtype=int, count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ValueError(f"row {name!r} references an undeclared variable")
        self._rows.append((cols, vals))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.row_names)}")
        return len(self.row_names) - 1

    def matrix(self) -> csr_matrix:
        indptr = [0]
        cols, vals = [], []
        for c, v in self._rows:
            cols.append(c)
            vals.append(v)
            indptr.append(indptr[-1] + len(c))
        data = np.concatenate(vals) if vals else np.zeros(0)
        idx = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        return csr_matrix((data, idx, np.asarray(indptr)), shape=(self.n_rows, self.n_vars))

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ x

    def to_lp_format(self) -> str:
        """CPLEX LP text, for inspection with any external solver."""

        def expr(pairs):
            parts = []
            for j, v in pairs:
                if v == 0:
                    continue
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.12g} {self.var_names[j]}")
            s = " ".join(parts) or "0"
            return s[2:] if s.startswith("+ ") else s

        out = [f"\\ {self.name}", "Minimize", " obj: " + expr(enumerate(self.cost)), "Subject To"]
        for r, (c, v) in enumerate(self._rows):
            op = "<=" if self.senses[r] == LE else "="
            out.append(f" {self.row_names[r]}: {expr(zip(c, v))} {op} {self.rhs[r]:.12g}")
        out.append("Bounds")
        for j, name in enumerate(self.var_names):
            lo, hi = self.lb[j], self.ub[j]
            lo_s = "-inf" if np.isneginf(lo) else f"{lo:.12g}"
            hi_s = "+inf" if np.isposinf(hi) else f"{hi:.12g}"
            out.append(f" {lo_s} <= {name} <= {hi_s}")
        ints = [n for n, b in zip(self.var_names, self.integer) if b]
        if ints:
            out.append("General")
            out.extend(f" {n}" for n in ints)
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | iteration-limit | error
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


_LINPROG_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded", 4: "error"}
_MILP_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded", 4: "error"}


def _time_limit(time_limit):
    if time_limit is None and os.environ.get(TIME_LIMIT_ENV):
        time_limit = float(os.environ[TIME_LIMIT_ENV])
    return time_limit


def solve_lp(lp: LinearProgram, time_limit: float | None = None) -> SolveResult:
    if lp.is_mip:
        raise ValueError("solve_lp called on a problem with integer variables")
    a = lp.matrix()
    senses = np.asarray(lp.senses)
    rhs = np.asarray(lp.rhs)
    ub_rows = np.flatnonzero(senses == LE)
    eq_rows = np.flatnonzero(senses == EQ)
    options = {"presolve": True}
    tl = _time_limit(time_limit)
    if tl is not None:
        options["time_limit"] = tl
    res = linprog(
        c=np.asarray(lp.cost),
        A_ub=a[ub_rows] if ub_rows.size else None,
        b_ub=rhs[ub_rows] if ub_rows.size else None,
        A_eq=a[eq_rows] if eq_rows.size else None,
        b_eq=rhs[eq_rows] if eq_rows.size else None,
        bounds=list(zip(lp.lb, [None if np.isposinf(u) else u for u in lp.ub])),
        method="highs",
        options=options,
    )
    status = _LINPROG_STATUS.get(res.status, "error")
    if status != "optimal":
        return SolveResult(status, None, None, None, res.message)
    duals = np.zeros(lp.n_rows)
    if ub_rows.size:
        duals[ub_rows] = -res.ineqlin.marginals
    if eq_rows.size:
        duals[eq_rows] = res.eqlin.marginals
    return SolveResult(status, res.x, float(res.fun) + lp.obj_constant, duals, res.message)


def solve_milp(lp: LinearProgram, mip_rel_gap: float = 1e-6,
               time_limit: float | None = None) -> SolveResult:
    a = lp.matrix()
    senses = np.asarray(lp.senses)
    rhs = np.asarray(lp.rhs)
    lower = np.where(senses == EQ, rhs, -np.inf)
    constraints = [LinearConstraint(a, lower, rhs)] if lp.n_rows else []
    options = {"mip_rel_gap": mip_rel_gap}
    tl = _time_limit(time_limit)
    if tl is not None:
        options["time_limit"] = tl
    lb = np.asarray(lp.lb)
    ub = np.asarray(lp.ub)
    res = milp(
        c=np.asarray(lp.cost),
        constraints=constraints,
        integrality=np.asarray(lp.integer, dtype=int),
        bounds=Bounds(lb, ub),
        options=options,
    )
    status = _MILP_STATUS.get(res.status, "error")
    if res.x is None or status != "optimal":
        return SolveResult(status, None, None, None, res.message)
    x = np.asarray(res.x, dtype=float)
    ints = np.asarray(lp.integer)
    x[ints] = np.round(x[ints])
    return SolveResult(status, x, float(res.fun) + lp.obj_constant, None, res.message)


def solve(lp: LinearProgram, **kw) -> SolveResult:
    return solve_milp(lp, **kw) if lp.is_mip else solve_lp(lp, **kw)


def require_optimal(res: SolveResult, what: str) -> SolveResult:
    if not res.ok:
        raise SolverError(f"{what}: solver status {res.status} ({res.message})")
    return res
