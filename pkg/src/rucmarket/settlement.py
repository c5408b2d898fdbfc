"""Market settlement, FTR credits and revenue-adequacy audits."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .case import CaseSystem
from .pricing import AuditItem, DualBundle, PriceSet, ReserveQuantities
from .ucmodel import BaseDispatch


class FtrError(ValueError):
    pass


def money_tol(scale: float) -> float:
    """Tolerance for monetary identities: max(1e-6 relative, one cent)."""
    return max(1e-6 * abs(scale), 0.01)


def uncertainty_charge(prices: PriceSet, points) -> np.ndarray:
    """Psi[m, t] = sum_k pi_u[k, m, t] * eps_k[m, t]."""
    if not len(points):
        return np.zeros(prices.energy.shape)
    return np.einsum("kmt,kmt->mt", prices.ump_k, np.asarray(points))


def uncertainty_charge_budget(prices: PriceSet, bounds: np.ndarray) -> np.ndarray:
    """Closed form of the charge when every point sits on the effective bound:
    pi_up * u - pi_down * u per bus. Agrees with ``uncertainty_charge`` whenever
    each positive UMP multiplies +u and each negative one multiplies -u."""
    return (prices.ump_up - prices.ump_down) * bounds


def _unit_prices(case: CaseSystem, arr: np.ndarray, storage: bool = False) -> np.ndarray:
    units = case.storages if storage else case.generators
    return arr[[u.bus for u in units], :] if units else np.zeros((0, arr.shape[1]))


@dataclass(frozen=True)
class ReserveCredit:
    units: np.ndarray  # (G, T), aggregated-price form
    storages: np.ndarray  # (S, T)
    units_pointwise: np.ndarray  # (G, T), sum_k pi_k * dP_k
    storages_pointwise: np.ndarray
    mismatch: float  # max abs difference between the two forms
    consistent: bool


def reserve_credit(case: CaseSystem, prices: PriceSet, reserves: ReserveQuantities,
                   recourse: np.ndarray | None = None, storage_recourse: np.ndarray | None = None) -> ReserveCredit:
    """Theta_G = pi_up Q_up + pi_down Q_down per unit-hour, cross-checked
    against sum_k pi_k dP_k when the recourse schedule is supplied."""
    up, dn = _unit_prices(case, prices.ump_up), _unit_prices(case, prices.ump_down)
    theta = up * reserves.q_up + dn * reserves.q_down
    s_up, s_dn = _unit_prices(case, prices.ump_up, True), _unit_prices(case, prices.ump_down, True)
    s_theta = s_up * reserves.s_q_up + s_dn * reserves.s_q_down
    if recourse is None:
        return ReserveCredit(theta, s_theta, theta, s_theta, 0.0, True)
    buses = [g.bus for g in case.generators]
    point = np.einsum("kgt,kgt->gt", prices.ump_k[:, buses, :], recourse) if len(recourse) else np.zeros_like(theta)
    if case.storages and storage_recourse is not None and len(storage_recourse):
        sb = [s.bus for s in case.storages]
        s_point = np.einsum("kst,kst->st", prices.ump_k[:, sb, :], storage_recourse)
    else:
        s_point = s_theta.copy()
    mismatch = float(max(np.abs(point - theta).max(initial=0.0), np.abs(s_point - s_theta).max(initial=0.0)))
    scale = float(np.abs(theta).sum() + np.abs(s_theta).sum())
    return ReserveCredit(theta, s_theta, point, s_point, mismatch, mismatch <= money_tol(scale))


def transmission_reserve_credit(duals: DualBundle, reserves: ReserveQuantities) -> np.ndarray:
    """Theta_T[l, t] = sum_k (eta_up_k df_pos + eta_dn_k df_neg)."""
    if duals.n_points == 0:
        return np.zeros(reserves.df_pos.shape)
    return (duals.eta_up_k.sum(axis=0) * reserves.df_pos + duals.eta_dn_k.sum(axis=0) * reserves.df_neg)


@dataclass(frozen=True)
class EnergySettlement:
    load_payment: np.ndarray  # (T,)
    generator_credit: np.ndarray  # (T,) units plus storage
    congestion_cost: np.ndarray  # (T,)


def net_injection(case: CaseSystem, dispatch: BaseDispatch) -> np.ndarray:
    inj = case.gen_bus_matrix() @ dispatch.p - case.demand()
    if case.storages:
        inj = inj + case.storage_bus_matrix() @ dispatch.storage_injection
    return inj


def energy_settlement(prices: PriceSet, case: CaseSystem, dispatch: BaseDispatch) -> EnergySettlement:
    """Load pays pi_e d; units (and storage) are credited pi_e P; the ISO keeps
    the difference, -sum_m pi_e[m] Pinj[m], as congestion rent."""
    pe = prices.energy
    payment = (pe * case.demand()).sum(axis=0)
    supply = case.gen_bus_matrix() @ dispatch.p
    if case.storages:
        supply = supply + case.storage_bus_matrix() @ dispatch.storage_injection
    credit = (pe * supply).sum(axis=0)
    return EnergySettlement(payment, credit, -(pe * net_injection(case, dispatch)).sum(axis=0))


@dataclass(frozen=True)
class FtrPortfolio:
    injections: np.ndarray  # (N,) MW, + = source

    def __post_init__(self):
        inj = np.asarray(self.injections, dtype=float)
        if abs(inj.sum()) > 1e-6:
            raise FtrError(f"FTR portfolio is not balanced (net {inj.sum():.6g} MW)")
        object.__setattr__(self, "injections", inj)

    @classmethod
    def from_pairs(cls, pairs, n_buses: int) -> "FtrPortfolio":
        """Net a list of (source, sink, MW) point-to-point rights to bus injections."""
        inj = np.zeros(n_buses)
        for src, snk, mw in pairs:
            inj[int(src)] += mw
            inj[int(snk)] -= mw
        return cls(inj)

    def to_dict(self) -> dict:
        return {"injections": self.injections.tolist()}


@dataclass(frozen=True)
class FtrCheck:
    sft_ok: bool
    flows: np.ndarray  # (L,)
    credit: np.ndarray  # (T,)


def ftr_check_and_credit(portfolio: FtrPortfolio, case: CaseSystem, prices: PriceSet,
                         tol: float = 1e-3) -> FtrCheck:
    """SFT on the portfolio's flows and hourly credit -sum_m pi_e[m] f[m].

    The default 1e-3 MW flow tolerance absorbs portfolios quoted to four decimals.
    """
    flows = case.ptdf().entries @ portfolio.injections if case.n_lines else np.zeros(0)
    cap = np.array([ln.capacity for ln in case.lines])
    ok = bool(np.all(np.abs(flows) <= cap + tol))
    credit = -(prices.energy * portfolio.injections[:, None]).sum(axis=0)
    return FtrCheck(ok, flows, credit)


@dataclass
class SettlementLedger:
    load_payment: np.ndarray  # (T,)
    generator_credit: np.ndarray  # (T,)
    congestion_cost: np.ndarray  # (T,)
    psi: np.ndarray  # (N, T)
    theta_g: np.ndarray  # (G, T)
    theta_g_storage: np.ndarray  # (S, T)
    theta_t: np.ndarray  # (L, T)
    ftr_credit: np.ndarray | None = None  # (T,)
    reserve_mismatch: float = 0.0

    @property
    def horizon(self) -> int:
        return self.load_payment.size

    def hourly(self) -> dict:
        out = {
            "load_payment": self.load_payment,
            "generator_credit": self.generator_credit,
            "congestion_cost": self.congestion_cost,
            "uncertainty_charge": self.psi.sum(axis=0),
            "generation_reserve_credit": self.theta_g.sum(axis=0) + self.theta_g_storage.sum(axis=0),
            "transmission_reserve_credit": self.theta_t.sum(axis=0),
        }
        out["uncertainty_residual"] = (out["uncertainty_charge"] - out["generation_reserve_credit"]
                                       - out["transmission_reserve_credit"])
        if self.ftr_credit is not None:
            out["ftr_credit"] = self.ftr_credit
            out["ftr_underfunding"] = self.ftr_credit - self.congestion_cost
        return out

    def to_dict(self) -> dict:
        d = {k: np.asarray(v).tolist() for k, v in vars(self).items() if v is not None}
        d["reserve_mismatch"] = float(self.reserve_mismatch)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SettlementLedger":
        T = len(d["load_payment"])
        matrices = ("psi", "theta_g", "theta_g_storage", "theta_t")
        kw = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in d.items()}
        for k in matrices:
            kw[k] = kw[k].reshape(-1, T)  # empty blocks come back from JSON as []
        return cls(**kw)

    def to_csv(self) -> str:
        """One row per hour, $ columns."""
        h = self.hourly()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(h)
        w.writerow(["hour"] + [f"{k}_usd" for k in keys])
        for t in range(self.horizon):
            w.writerow([t + 1] + [repr(float(h[k][t])) for k in keys])
        return buf.getvalue()


def build_ledger(case: CaseSystem, prices: PriceSet, duals: DualBundle, dispatch: BaseDispatch,
                 reserves: ReserveQuantities, points, recourse=None, storage_recourse=None,
                 portfolio: FtrPortfolio | None = None) -> SettlementLedger:
    es = energy_settlement(prices, case, dispatch)
    rc = reserve_credit(case, prices, reserves, recourse, storage_recourse)
    ftr = ftr_check_and_credit(portfolio, case, prices).credit if portfolio is not None else None
    return SettlementLedger(es.load_payment, es.generator_credit, es.congestion_cost,
                            uncertainty_charge(prices, points), rc.units, rc.storages,
                            transmission_reserve_credit(duals, reserves), ftr, rc.mismatch)


@dataclass
class AdequacyReport:
    items: list = field(default_factory=list)
    money_flow: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "items": [it.to_dict() for it in self.items],
                "money_flow": self.money_flow}


def revenue_adequacy_report(ledger: SettlementLedger) -> AdequacyReport:
    h = ledger.hourly()
    psi = float(ledger.psi.sum())
    theta_g = float(h["generation_reserve_credit"].sum())
    theta_t = float(h["transmission_reserve_credit"].sum())
    rep = AdequacyReport()
    resid = psi - theta_g - theta_t
    tol = money_tol(max(abs(psi), abs(theta_g) + abs(theta_t)))
    rep.items.append(AuditItem("uncertainty payment covers reserve credits", abs(resid) <= tol, resid,
                               f"psi={psi:.2f} theta_g={theta_g:.2f} theta_t={theta_t:.2f}"))
    worst_hour = int(np.argmax(np.abs(h["uncertainty_residual"])))
    hres = float(h["uncertainty_residual"][worst_hour])
    rep.items.append(AuditItem("hourly uncertainty balance", abs(hres) <= money_tol(
        float(h["uncertainty_charge"][worst_hour])), hres, f"worst hour {worst_hour + 1}"))
    rep.items.append(AuditItem("pointwise vs aggregated reserve credit", ledger.reserve_mismatch <= 0.01,
                               ledger.reserve_mismatch, "max per unit-hour difference"))
    if ledger.ftr_credit is not None:
        excess = h["ftr_underfunding"] - h["transmission_reserve_credit"]
        t = int(np.argmax(excess))
        tol_t = money_tol(float(ledger.ftr_credit[t]))
        rep.items.append(AuditItem("ftr underfunding bounded by transmission reserve credit",
                                   bool(np.all(excess <= [money_tol(x) for x in ledger.ftr_credit])),
                                   float(excess[t]),
                                   f"worst hour {t + 1}: underfunding {h['ftr_underfunding'][t]:.2f}, "
                                   f"transmission credit {h['transmission_reserve_credit'][t]:.2f} (tol {tol_t:.2f})"))
        collected = float(ledger.load_payment.sum() + psi)
        # the transmission reserve credit is paid to FTR holders, inside their FTR credit
        paid = float(ledger.generator_credit.sum() + theta_g + ledger.ftr_credit.sum())
        rep.items.append(AuditItem("overall revenue adequacy", collected - paid >= -money_tol(collected),
                                   collected - paid, "collected minus distributed"))
    rep.money_flow = {
        "load_payment": float(ledger.load_payment.sum()),
        "uncertainty_payment": psi,
        "generator_energy_credit": float(ledger.generator_credit.sum()),
        "generation_reserve_credit": theta_g,
        "transmission_reserve_credit": theta_t,
        "congestion_cost": float(ledger.congestion_cost.sum()),
    }
    if ledger.ftr_credit is not None:
        rep.money_flow["ftr_credit"] = float(ledger.ftr_credit.sum())
        rep.money_flow["iso_residual"] = (rep.money_flow["load_payment"] + psi
                                          - rep.money_flow["generator_energy_credit"] - theta_g
                                          - rep.money_flow["ftr_credit"])
    return rep
