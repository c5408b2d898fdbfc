"""Worst-case uncertainty search over the box + budget set.

The recourse violation (minimum total slack needed to follow a deviation) is
the optimal value of an LP whose right-hand side is affine in the deviation,
hence convex in it; its maximum over the polytope is attained at a vertex.
Vertex enumeration is therefore exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import block_diag, csr_matrix

from .case import CaseSystem, UncertaintySpec
from .lp import SolverError
from .ucmodel import BaseDispatch, CommitmentSolution

DEFAULT_DELTA = 1e-4
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ViolationReport:
    total: float
    per_hour: np.ndarray  # (T,)
    point: np.ndarray  # (N, T), per-hour maximising vertex


def effective_budget(spec: UncertaintySpec) -> float:
    """Budget on sum |eps| / u_bar, under the configured denominator convention."""
    if spec.budget_denominator == "scaled":
        return spec.lam * spec.lam_budget
    return spec.lam_budget


def _normalized_vertices(n: int, cap: float, budget: float) -> list[tuple]:
    """Vertices of {z in R^n : |z_m| <= cap, sum |z_m| <= budget} in a fixed order:
    support (combinations order), position of the residual entry, then signs
    with + before -."""
    if n == 0 or budget <= 0 or cap <= 0:
        return [tuple([0.0] * n)]
    full = math.floor(budget / cap + 1e-12)
    resid = budget - full * cap
    if resid < 1e-12 * max(cap, 1.0):
        resid = 0.0
    if full >= n:
        sizes, resid = n, 0.0
    else:
        sizes = full + (1 if resid > 0 else 0)

    out, seen = [], set()
    for support in itertools.combinations(range(n), sizes):
        resid_slots = support if resid > 0 else (None,)
        for slot in resid_slots:
            mags = [resid if m == slot else cap for m in support]
            for signs in itertools.product((1.0, -1.0), repeat=len(support)):
                z = [0.0] * n
                for m, mag, sg in zip(support, mags, signs):
                    z[m] = sg * mag
                key = tuple(z)
                if key not in seen:
                    seen.add(key)
                    out.append(key)
    return out


def enumerate_vertices(spec: UncertaintySpec, t: int) -> list[np.ndarray]:
    """All vertices of the hour-t slice of the uncertainty set, in MW per bus."""
    bounds = np.asarray(spec.bounds)[:, t]
    active = np.flatnonzero(bounds > 0)
    verts = []
    for z in _normalized_vertices(active.size, spec.lam, effective_budget(spec)):
        eps = np.zeros(bounds.size)
        eps[active] = np.asarray(z) * bounds[active]
        verts.append(eps)
    return verts


def sample_uncertainty(spec: UncertaintySpec, rng: np.random.Generator) -> np.ndarray:
    """One random (N, T) point of the set: uniform direction in the box, then
    shrunk radially if the hourly budget is exceeded."""
    bounds = np.asarray(spec.bounds)
    n, horizon = bounds.shape
    z = rng.uniform(-spec.lam, spec.lam, size=(n, horizon))
    z[bounds <= 0] = 0.0
    budget = effective_budget(spec)
    used = np.abs(z).sum(axis=0)
    scale = np.where(used > budget, budget / np.maximum(used, 1e-300), 1.0)
    return z * scale * bounds


class RecourseOracle:
    """Per-hour recourse LPs for a fixed commitment and base dispatch.

    Variables per hour: unit re-dispatch, storage re-dispatch, and non-negative
    slack pairs at every bus. Only the right-hand side depends on the deviation,
    so the matrices are built once.
    """

    def __init__(self, case: CaseSystem, commitment: CommitmentSolution, dispatch: BaseDispatch,
                 include_network: bool = True):
        self.case = case
        self.include_network = include_network
        G, S, N, T = case.n_gens, len(case.storages), case.n_buses, case.horizon
        self.sizes = (G, S, N)
        ptdf = case.ptdf().entries if include_network and case.n_lines else np.zeros((0, N))
        self.ptdf = ptdf
        gb = case.gen_bus_matrix()
        sb = case.storage_bus_matrix()
        on = np.asarray(commitment.on, dtype=float)
        y = np.asarray(commitment.startup, dtype=float)
        z_next = commitment.shutdown_next()
        p = np.asarray(dispatch.p, dtype=float)
        g_inj = dispatch.storage_injection if S else np.zeros((0, T))

        lo = np.maximum(on * np.array([g.p_min for g in case.generators])[:, None] - p,
                        -np.array([g.ramp_unc_down for g in case.generators])[:, None] * (1 - z_next))
        hi = np.minimum(on * np.array([g.p_max for g in case.generators])[:, None] - p,
                        np.array([g.ramp_unc_up for g in case.generators])[:, None] * (1 - y))
        lo = np.minimum(lo, hi)
        if S:
            s_lo = -np.array([s.rate_charge for s in case.storages])[:, None] - g_inj
            s_hi = np.array([s.rate_discharge for s in case.storages])[:, None] - g_inj
        else:
            s_lo = s_hi = np.zeros((0, T))
        self.lo = np.vstack([lo, s_lo])
        self.hi = np.vstack([hi, s_hi])

        self.nvar = G + S + 2 * N
        self.cost = np.concatenate([np.zeros(G + S), np.ones(2 * N)])
        self.a_eq = np.concatenate([np.ones(G + S), -np.ones(N), np.ones(N)])[None, :]
        inj = gb @ p - case.demand()
        if S:
            inj = inj + sb @ g_inj
        self.base_flow = ptdf @ inj  # (L, T)
        row = np.hstack([ptdf @ gb, ptdf @ sb, -ptdf, ptdf])
        self.a_ub = np.vstack([row, -row])
        self.capacity = np.array([ln.capacity for ln in case.lines]) if ptdf.shape[0] else np.zeros(0)

    def _rhs(self, eps_t: np.ndarray, t: int):
        b_eq = np.array([eps_t.sum()])
        if self.ptdf.shape[0]:
            ge = self.ptdf @ eps_t
            b_ub = np.concatenate([self.capacity - self.base_flow[:, t] + ge,
                                   self.capacity + self.base_flow[:, t] - ge])
        else:
            b_ub = np.zeros(0)
        return b_eq, b_ub

    def _bounds(self, t: int):
        G, S, N = self.sizes
        return np.concatenate([self.lo[:, t], np.zeros(2 * N)]), np.concatenate([self.hi[:, t], np.full(2 * N, np.inf)])

    def violation(self, eps_t: np.ndarray, t: int) -> float:
        """Minimum total slack (MW) needed to follow deviation ``eps_t`` at hour t."""
        b_eq, b_ub = self._rhs(np.asarray(eps_t, dtype=float), t)
        lo, hi = self._bounds(t)
        res = linprog(self.cost, A_ub=self.a_ub if b_ub.size else None, b_ub=b_ub if b_ub.size else None,
                      A_eq=self.a_eq, b_eq=b_eq, bounds=np.column_stack([lo, hi]), method="highs")
        if res.status != 0:
            raise SolverError(f"recourse LP at hour {t}: {res.message}")
        return max(float(res.fun), 0.0)

    def violation_horizon(self, eps: np.ndarray) -> float:
        """Total violation of a full (N, T) deviation, solved as one block LP."""
        T = self.case.horizon
        eqs, ubs, los, his = [], [], [], []
        for t in range(T):
            b_eq, b_ub = self._rhs(eps[:, t], t)
            lo, hi = self._bounds(t)
            eqs.append(b_eq)
            ubs.append(b_ub)
            los.append(lo)
            his.append(hi)
        a_eq = block_diag([csr_matrix(self.a_eq)] * T, format="csr")
        b_ub = np.concatenate(ubs)
        a_ub = block_diag([csr_matrix(self.a_ub)] * T, format="csr") if b_ub.size else None
        res = linprog(np.tile(self.cost, T), A_ub=a_ub, b_ub=b_ub if b_ub.size else None,
                      A_eq=a_eq, b_eq=np.concatenate(eqs),
                      bounds=np.column_stack([np.concatenate(los), np.concatenate(his)]), method="highs")
        if res.status != 0:
            raise SolverError(f"horizon recourse LP: {res.message}")
        return max(float(res.fun), 0.0)


def recourse_feasibility(case: CaseSystem, commitment: CommitmentSolution, dispatch: BaseDispatch,
                         eps_t: np.ndarray, t: int, include_network: bool = True) -> float:
    return RecourseOracle(case, commitment, dispatch, include_network).violation(eps_t, t)


def find_worst(case: CaseSystem, commitment: CommitmentSolution, dispatch: BaseDispatch,
               include_network: bool = True) -> ViolationReport:
    """Per hour, the vertex with the largest recourse violation.

    Ties (within 1e-9 MW) go to the earliest vertex in enumeration order.
    """
    oracle = RecourseOracle(case, commitment, dispatch, include_network)
    T = case.horizon
    per_hour = np.zeros(T)
    point = np.zeros((case.n_buses, T))
    for t in range(T):
        best, best_v = None, -np.inf
        for eps in enumerate_vertices(case.uncertainty, t):
            v = oracle.violation(eps, t)
            if v > best_v + _TIE_TOL:
                best, best_v = eps, v
        per_hour[t] = best_v
        point[:, t] = best
    return ViolationReport(float(per_hour.sum()), per_hour, point)
