"""Price-taking profit maximization per unit, to verify the market outcome is
a competitive equilibrium: no unit gains by deviating from its ISO schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case import CaseSystem, Generator, build_cost_curve
from .lp import LE, EQ, LinearProgram, SolverError, solve_lp
from .pricing import PriceSet, compute_reserves
from .ucmodel import BaseDispatch, CommitmentSolution


@dataclass(frozen=True)
class UnitSchedule:
    p: np.ndarray  # (T,)
    q_up: np.ndarray
    q_down: np.ndarray


@dataclass
class ProfitReport:
    units: list  # names
    profit_at_dispatch: np.ndarray  # (G,)
    profit_max: np.ndarray
    tol: float = 0.01
    schedules: list = field(default_factory=list)

    @property
    def gap(self) -> np.ndarray:
        return self.profit_max - self.profit_at_dispatch

    @property
    def verified(self) -> bool:
        return bool(np.all(self.gap <= self.tolerances()))

    def tolerances(self) -> np.ndarray:
        return np.maximum(1e-6 * np.abs(self.profit_at_dispatch), self.tol)

    def to_dict(self) -> dict:
        return {
            "verified": self.verified,
            "units": [
                {"name": n, "profit_at_dispatch": float(a), "profit_max": float(b), "gap": float(b - a)}
                for n, a, b in zip(self.units, self.profit_at_dispatch, self.profit_max)
            ],
        }


def _energy_cost(curve, p: np.ndarray, on: np.ndarray, no_load_excluded: float) -> float:
    """Piecewise production cost over the horizon, the constant c left out."""
    return float(sum(curve.cost(pt) - no_load_excluded for pt, u in zip(p, on) if u > 0.5))


def unit_profit(gen: Generator, curve, bus_prices: dict, p, q_up, q_down, on) -> float:
    revenue = (bus_prices["energy"] * p + bus_prices["up"] * q_up + bus_prices["down"] * q_down).sum()
    return float(revenue) - _energy_cost(curve, np.asarray(p), np.asarray(on), gen.cost_c)


def solve_pmp(case: CaseSystem, unit: int, prices: PriceSet,
              commitment: CommitmentSolution) -> tuple[UnitSchedule, float]:
    """Maximize energy plus reserve revenue minus production cost for one unit,
    commitment fixed. Reserve quantities are epigraph variables bounded by both
    terms of their min/max definitions; with up prices >= 0 >= down prices the
    bounds bind exactly where the definitions say."""
    gen = case.generators[unit]
    curve = build_cost_curve(gen, case.n_blocks)
    T = case.horizon
    on = np.asarray(commitment.on[unit], dtype=float)
    y = np.asarray(commitment.startup[unit], dtype=float)
    z_next = commitment.shutdown_next()[unit]
    pe = prices.energy[gen.bus]
    pu = prices.ump_up[gen.bus]
    pd = prices.ump_down[gen.bus]

    lp = LinearProgram(f"pmp_{gen.name}")
    p = [lp.add_var(f"p_{t}", 0.0, gen.p_max * on[t], -pe[t]) for t in range(T)]
    qu = [lp.add_var(f"qup_{t}", -np.inf, np.inf, -pu[t]) for t in range(T)]
    qd = [lp.add_var(f"qdn_{t}", -np.inf, np.inf, -pd[t]) for t in range(T)]
    for t in range(T):
        coeffs = {p[t]: 1.0}
        for b, (w, mc) in enumerate(zip(curve.widths, curve.marginals)):
            coeffs[lp.add_var(f"blk_{t}_{b}", 0.0, w * on[t], mc)] = -1.0
        lp.add_row(coeffs, EQ, gen.p_min * on[t], f"pdef_{t}")
        lp.add_row({p[t]: -1.0}, LE, -gen.p_min * on[t], f"pmin_{t}")
        lp.add_row({qu[t]: 1.0, p[t]: 1.0}, LE, gen.p_max * on[t], f"qup_cap_{t}")
        lp.add_row({qu[t]: 1.0}, LE, gen.ramp_unc_up * (1 - y[t]), f"qup_ramp_{t}")
        lp.add_row({qd[t]: -1.0, p[t]: -1.0}, LE, -gen.p_min * on[t], f"qdn_cap_{t}")
        lp.add_row({qd[t]: -1.0}, LE, gen.ramp_unc_down * (1 - z_next[t]), f"qdn_ramp_{t}")
        # inter-hour ramps with start-up / shut-down relaxation
        z_t = commitment.shutdown[unit][t]
        up_rhs = gen.ramp_hourly_up * (1 - y[t]) + gen.p_min * y[t]
        dn_rhs = gen.ramp_hourly_down * (1 - z_t) + gen.p_min * z_t
        if t > 0:
            lp.add_row({p[t]: 1.0, p[t - 1]: -1.0}, LE, up_rhs, f"ramp_up_{t}")
            lp.add_row({p[t]: -1.0, p[t - 1]: 1.0}, LE, dn_rhs, f"ramp_dn_{t}")
        else:
            p_prev = gen.p0 if gen.initially_on else 0.0
            lp.add_row({p[t]: 1.0}, LE, up_rhs + p_prev, "ramp_up_0")
            lp.add_row({p[t]: -1.0}, LE, dn_rhs - p_prev, "ramp_dn_0")
    res = solve_lp(lp)
    if not res.ok:
        raise SolverError(f"profit maximization for {gen.name}: {res.status}")
    sched = UnitSchedule(res.x[p], res.x[qu], res.x[qd])
    fixed = sum(gen.cost_a * gen.p_min ** 2 + gen.cost_b * gen.p_min for t in range(T) if on[t] > 0.5)
    return sched, -(res.objective + fixed)


def verify_equilibrium(case: CaseSystem, prices: PriceSet, dispatch: BaseDispatch,
                       commitment: CommitmentSolution, tol: float = 0.01) -> ProfitReport:
    reserves = compute_reserves(case, commitment, dispatch)
    at, best, scheds = [], [], []
    for i, gen in enumerate(case.generators):
        curve = build_cost_curve(gen, case.n_blocks)
        bp = {"energy": prices.energy[gen.bus], "up": prices.ump_up[gen.bus], "down": prices.ump_down[gen.bus]}
        at.append(unit_profit(gen, curve, bp, dispatch.p[i], reserves.q_up[i], reserves.q_down[i],
                              commitment.on[i]))
        sched, prof = solve_pmp(case, i, prices, commitment)
        best.append(prof)
        scheds.append(sched)
    return ProfitReport([g.name for g in case.generators], np.array(at), np.array(best), tol, scheds)
