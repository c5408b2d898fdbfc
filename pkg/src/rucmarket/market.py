"""End-to-end clearing pipelines: robust clearing, traditional reserve UC, and
the side-by-side comparison of the two."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case import CaseSystem
from .ccg import CcgResult, run_ccg
from .equilibrium import ProfitReport, verify_equilibrium
from .lp import require_optimal, solve_lp, solve_milp
from .pricing import (AuditItem, PriceSet, RedSolution, ReserveQuantities, audit_dual_signs, audit_kkt,
                      audit_ump_signs, audit_reserve_binding, audit_lmp_decomposition, compute_reserves,
                      extract_prices, solve_red)
from .settlement import FtrPortfolio, SettlementLedger, build_ledger
from .ucmodel import BaseDispatch, CommitmentSolution, build_traditional_uc
from .worstcase import DEFAULT_DELTA, effective_budget, enumerate_vertices


@dataclass
class MarketResult:
    case: CaseSystem
    include_network: bool
    ccg: CcgResult
    red: RedSolution
    prices: PriceSet
    reserves: ReserveQuantities
    ledger: SettlementLedger

    @property
    def commitment(self) -> CommitmentSolution:
        return self.ccg.commitment

    @property
    def dispatch(self) -> BaseDispatch:
        return self.red.dispatch

    @property
    def points(self) -> list:
        return self.ccg.points

    def audits(self) -> list[AuditItem]:
        d = self.red.duals
        return [audit_kkt(self.case, d, self.include_network), audit_dual_signs(d),
                audit_ump_signs(self.prices, self.points),
                *audit_reserve_binding(self.case, self.prices, d, self.red.recourse, self.reserves, self.commitment),
                audit_lmp_decomposition(self.case, d, self.prices, self.include_network)]

    def equilibrium(self) -> ProfitReport:
        return verify_equilibrium(self.case, self.prices, self.dispatch, self.commitment)


def clear_market(case: CaseSystem, delta: float = DEFAULT_DELTA, include_network: bool = True,
                 max_iterations: int = 50, portfolio: FtrPortfolio | None = None) -> MarketResult:
    """CCG for the commitment, then the fixed-commitment dispatch LP for prices.

    Dispatch and recourse come from the LP, whose optimum coincides with the
    final master's up to alternative optima.
    """
    ccg = run_ccg(case, delta, max_iterations, include_network)
    red = solve_red(case, ccg.commitment, ccg.points, include_network)
    prices = extract_prices(case, red.duals, include_network)
    reserves = compute_reserves(case, ccg.commitment, red.dispatch)
    ledger = build_ledger(case, prices, red.duals, red.dispatch, reserves, ccg.points,
                          red.recourse, red.storage_recourse, portfolio)
    return MarketResult(case, include_network, ccg, red, prices, reserves, ledger)


def reserve_requirements(case: CaseSystem, reading: str) -> np.ndarray:
    """System reserve requirement per hour (MW, used for both directions).

    ``box``: sum of the effective per-bus bounds lam * u_bar.
    ``budget``: the largest total deviation in the budget set (vertex maximum).
    """
    u = case.uncertainty
    if reading == "box":
        return (u.lam * np.asarray(u.bounds)).sum(axis=0)
    if reading == "budget":
        return np.array([max(float(v.sum()) for v in enumerate_vertices(u, t)) for t in range(case.horizon)])
    raise ValueError(f"unknown reserve reading {reading!r}")


@dataclass
class TraditionalResult:
    objective: float
    commitment: CommitmentSolution
    dispatch: BaseDispatch
    energy_price: np.ndarray  # (N, T)
    reserve_price_up: np.ndarray  # (T,) >= 0
    reserve_price_down: np.ndarray  # (T,) <= 0
    requirement: np.ndarray


def solve_traditional(case: CaseSystem, requirement: np.ndarray, include_network: bool = False) -> TraditionalResult:
    """UC with zonal reserve rows; prices from the fixed-commitment LP re-solve."""
    milp = build_traditional_uc(case, requirement, requirement, include_network)
    res = require_optimal(solve_milp(milp.lp), "traditional UC")
    com = milp.commitment_from(res.x)
    fixed = build_traditional_uc(case, requirement, requirement, include_network, commitment=com)
    lp = require_optimal(solve_lp(fixed.lp), "traditional dispatch")
    r = fixed.rows
    lam = lp.duals[r["balance"]]
    if include_network and case.n_lines:
        gamma = case.ptdf().entries
        eta = np.where(r["flow_up"] >= 0, lp.duals[r["flow_up"]], 0.0) - np.where(
            r["flow_dn"] >= 0, lp.duals[r["flow_dn"]], 0.0)
        energy = lam[None, :] - gamma.T @ eta
    else:
        energy = np.broadcast_to(lam, (case.n_buses, case.horizon)).copy()
    return TraditionalResult(res.objective, com, fixed.dispatch_from(lp.x), energy,
                             lp.duals[r["reserve_up"]] + 0.0, -lp.duals[r["reserve_dn"]] + 0.0, requirement)


@dataclass
class ComparisonReport:
    ruc_objective: float
    readings: dict  # reading -> dict of metrics
    tol_rel: float = 1e-4
    tol_price: float = 0.01

    def matching_readings(self) -> list:
        return [k for k, v in self.readings.items() if v["objective_match"] and v["price_match"]]

    @property
    def passed(self) -> bool:
        return bool(self.matching_readings())

    def to_dict(self) -> dict:
        return {"ruc_objective": self.ruc_objective, "readings": self.readings,
                "matching_readings": self.matching_readings(), "passed": self.passed}


def compare_with_traditional(case: CaseSystem, delta: float = DEFAULT_DELTA) -> tuple[MarketResult, ComparisonReport]:
    """Robust clearing versus explicit-reserve UC, both without network rows.

    Uncertainty prices are bus-uniform without a network, so they are compared
    hour by hour with the up (>= 0) and down (<= 0) reserve prices.
    """
    robust = clear_market(case, delta, include_network=False)
    report = ComparisonReport(robust.red.objective, {})
    up = robust.prices.ump_up.max(axis=0)
    down = robust.prices.ump_down.min(axis=0)
    for reading in ("box", "budget"):
        req = reserve_requirements(case, reading)
        trad = solve_traditional(case, req, include_network=False)
        obj_gap = abs(trad.objective - robust.red.objective) / max(abs(robust.red.objective), 1.0)
        dev_up = float(np.abs(trad.reserve_price_up - up).max())
        dev_dn = float(np.abs(trad.reserve_price_down - down).max())
        dev_lmp = float(np.abs(trad.energy_price - robust.prices.energy).max())
        report.readings[reading] = {
            "requirement_mw": req.tolist(),
            "objective": trad.objective,
            "objective_rel_gap": obj_gap,
            "objective_match": obj_gap <= report.tol_rel,
            "same_commitment": bool(np.array_equal(trad.commitment.on, robust.commitment.on)),
            "max_dispatch_diff_mw": float(np.abs(trad.dispatch.p - robust.dispatch.p).max()),
            "max_price_dev_up": dev_up,
            "max_price_dev_down": dev_dn,
            "max_lmp_dev": dev_lmp,
            "price_match": max(dev_up, dev_dn) <= report.tol_price,
            "reserve_price_up": trad.reserve_price_up.tolist(),
            "reserve_price_down": trad.reserve_price_down.tolist(),
        }
    return robust, report


def budget_summary(case: CaseSystem) -> dict:
    u = case.uncertainty
    return {"lambda": u.lam, "lambda_budget": u.lam_budget, "budget_denominator": u.budget_denominator,
            "effective_budget": effective_budget(u)}
