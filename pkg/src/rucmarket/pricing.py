"""Robust economic dispatch (commitment fixed) and dual-based prices.

Sign conventions follow ``lp``: ``<=`` row duals are non-negative, equality
duals are d(cost)/d(rhs). With the rows written as in ``ucmodel``:

* energy price   pi_e[m]   = lam - sum_l G[l,m] (eta_up - eta_dn) - sum_k sum_l G[l,m] (eta_up_k - eta_dn_k)
* per-point UMP  pi_u[k,m] = lam_k - sum_l G[l,m] (eta_up_k - eta_dn_k)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case import CaseSystem
from .lp import SolverError, require_optimal, solve_lp
from .ucmodel import BaseDispatch, CommitmentSolution, UCModel, build_model

KKT_TOL = 1e-6


def _pick(duals: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Duals for a row-index array; absent rows (-1) read as 0."""
    idx = np.asarray(idx)
    out = np.zeros(idx.shape)
    mask = idx >= 0
    out[mask] = duals[idx[mask]]
    return out


@dataclass(frozen=True)
class DualBundle:
    lam: np.ndarray  # (T,)
    lam_k: np.ndarray  # (K, T)
    beta_up: np.ndarray  # (G, T) capacity
    beta_dn: np.ndarray
    alpha_up: np.ndarray  # (G, T) hourly ramp
    alpha_dn: np.ndarray
    eta_up: np.ndarray  # (L, T)
    eta_dn: np.ndarray
    beta_up_k: np.ndarray  # (K, G, T)
    beta_dn_k: np.ndarray
    alpha_up_k: np.ndarray  # (K, G, T) recourse ramp caps
    alpha_dn_k: np.ndarray
    eta_up_k: np.ndarray  # (K, L, T)
    eta_dn_k: np.ndarray
    sigma_up_k: np.ndarray  # (K, S, T) storage post-recourse rate limits
    sigma_dn_k: np.ndarray

    @property
    def n_points(self) -> int:
        return self.lam_k.shape[0]

    @classmethod
    def from_model(cls, model: UCModel, duals: np.ndarray) -> "DualBundle":
        r = model.rows
        names = ["balance", "balance_k", "cap_up", "cap_dn", "ramp_up", "ramp_dn", "flow_up", "flow_dn",
                 "cap_up_k", "cap_dn_k", "rec_up_k", "rec_dn_k", "flow_up_k", "flow_dn_k",
                 "s_cap_up_k", "s_cap_dn_k"]
        v = [_pick(duals, r[n]) for n in names]
        return cls(*v)

    def to_dict(self) -> dict:
        return {k: np.asarray(x).tolist() for k, x in vars(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DualBundle":
        """Inverse of to_dict. Empty blocks (no points, lines or storage) lose
        their shape in JSON, so dimensions are recovered from the non-empty fields."""
        a = {k: np.asarray(x, dtype=float) for k, x in d.items()}
        T = a["lam"].size
        G = a["beta_up"].size // max(T, 1)
        L = a["eta_up"].size // max(T, 1)
        K = a["lam_k"].size // max(T, 1)
        S = a["sigma_up_k"].size // max(K * T, 1)
        shapes = {"lam": (T,), "lam_k": (K, T), "eta_up": (L, T), "eta_dn": (L, T),
                  "eta_up_k": (K, L, T), "eta_dn_k": (K, L, T), "sigma_up_k": (K, S, T), "sigma_dn_k": (K, S, T)}
        return cls(**{k: x.reshape(shapes.get(k, (K, G, T) if k.endswith("_k") else (G, T)))
                      for k, x in a.items()})


@dataclass(frozen=True)
class PriceSet:
    energy: np.ndarray  # (N, T) $/MWh
    ump_k: np.ndarray  # (K, N, T)
    ump_up: np.ndarray  # (N, T) >= 0
    ump_down: np.ndarray  # (N, T) <= 0

    def to_dict(self) -> dict:
        return {k: np.asarray(x).tolist() for k, x in vars(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriceSet":
        energy = np.asarray(d["energy"], dtype=float)
        ump_k = np.asarray(d["ump_k"], dtype=float).reshape(-1, *energy.shape)
        return cls(energy, ump_k, np.asarray(d["ump_up"], dtype=float), np.asarray(d["ump_down"], dtype=float))


@dataclass(frozen=True)
class ReserveQuantities:
    q_up: np.ndarray  # (G, T)
    q_down: np.ndarray
    s_q_up: np.ndarray  # (S, T) storage
    s_q_down: np.ndarray
    df_pos: np.ndarray  # (L, T)
    df_neg: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(x).tolist() for k, x in vars(self).items()}


@dataclass
class RedSolution:
    model: UCModel
    objective: float
    dispatch: BaseDispatch
    recourse: np.ndarray  # (K, G, T)
    storage_recourse: np.ndarray  # (K, S, T)
    duals: DualBundle
    raw_duals: np.ndarray
    x: np.ndarray


def build_red(case: CaseSystem, commitment: CommitmentSolution, points, include_network: bool = True) -> UCModel:
    return build_model(case, list(points), commitment, include_network, name=f"red_k{len(points)}")


def solve_red(case: CaseSystem, commitment: CommitmentSolution, points,
              include_network: bool = True) -> RedSolution:
    model = build_red(case, commitment, points, include_network)
    res = require_optimal(solve_lp(model.lp), "robust economic dispatch")
    dp, ds = model.recourse_from(res.x)
    return RedSolution(model, res.objective, model.dispatch_from(res.x), dp, ds,
                       DualBundle.from_model(model, res.duals), res.duals, res.x)


def extract_prices(case: CaseSystem, duals: DualBundle, include_network: bool = True) -> PriceSet:
    gamma = case.ptdf().entries if include_network and case.n_lines else np.zeros((case.n_lines, case.n_buses))
    N, T = case.n_buses, case.horizon
    cong_k = np.einsum("lm,klt->kmt", gamma, duals.eta_up_k - duals.eta_dn_k)
    ump_k = duals.lam_k[:, None, :] - cong_k
    energy = np.broadcast_to(duals.lam, (N, T)) - gamma.T @ (duals.eta_up - duals.eta_dn) - cong_k.sum(axis=0)
    up = np.where(ump_k >= 0, ump_k, 0.0).sum(axis=0)
    down = np.where(ump_k < 0, ump_k, 0.0).sum(axis=0)
    return PriceSet(np.array(energy), ump_k, up + 0.0, down + 0.0)


def base_flows(case: CaseSystem, dispatch: BaseDispatch) -> np.ndarray:
    inj = case.gen_bus_matrix() @ dispatch.p - case.demand()
    if case.storages:
        inj = inj + case.storage_bus_matrix() @ dispatch.storage_injection
    return case.ptdf().entries @ inj if case.n_lines else np.zeros((0, case.horizon))


def compute_reserves(case: CaseSystem, commitment: CommitmentSolution, dispatch: BaseDispatch) -> ReserveQuantities:
    gens = case.generators
    on = np.asarray(commitment.on, dtype=float)
    p = np.asarray(dispatch.p, dtype=float)
    pmax = np.array([g.p_max for g in gens])[:, None]
    pmin = np.array([g.p_min for g in gens])[:, None]
    ru = np.array([g.ramp_unc_up for g in gens])[:, None]
    rd = np.array([g.ramp_unc_down for g in gens])[:, None]
    q_up = np.minimum(on * pmax - p, ru * (1 - np.asarray(commitment.startup)))
    q_dn = np.maximum(on * pmin - p, -rd * (1 - commitment.shutdown_next()))
    if case.storages:
        g = dispatch.storage_injection
        s_up = np.array([s.rate_discharge for s in case.storages])[:, None] - g
        s_dn = -np.array([s.rate_charge for s in case.storages])[:, None] - g
    else:
        s_up = s_dn = np.zeros((0, case.horizon))
    flow = base_flows(case, dispatch)
    cap = np.array([ln.capacity for ln in case.lines])[:, None] if case.n_lines else np.zeros((0, 1))
    return ReserveQuantities(q_up + 0.0, q_dn + 0.0, s_up, s_dn, cap - flow, cap + flow)


# ---------------------------------------------------------------- audits

@dataclass
class AuditItem:
    name: str
    passed: bool
    worst: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "worst": float(self.worst), "detail": self.detail}


def _gamma(case, include_network):
    if include_network and case.n_lines:
        return case.ptdf().entries
    return np.zeros((case.n_lines, case.n_buses))


def kkt_residuals(case: CaseSystem, duals: DualBundle, include_network: bool = True) -> np.ndarray:
    """Stationarity of the Lagrangian in each recourse variable, shape (K, G, T).

    beta_up - beta_dn + alpha_up - alpha_dn - lam_k + sum_l G[l, m_i] (eta_up_k - eta_dn_k) = 0
    """
    gamma = _gamma(case, include_network)
    buses = [g.bus for g in case.generators]
    cong = np.einsum("lm,klt->kmt", gamma, duals.eta_up_k - duals.eta_dn_k)[:, buses, :]
    return (duals.beta_up_k - duals.beta_dn_k + duals.alpha_up_k - duals.alpha_dn_k
            - duals.lam_k[:, None, :] + cong)


def storage_kkt_residuals(case: CaseSystem, duals: DualBundle, include_network: bool = True) -> np.ndarray:
    gamma = _gamma(case, include_network)
    buses = [s.bus for s in case.storages]
    cong = np.einsum("lm,klt->kmt", gamma, duals.eta_up_k - duals.eta_dn_k)[:, buses, :]
    return duals.sigma_up_k - duals.sigma_dn_k - duals.lam_k[:, None, :] + cong


def audit_kkt(case, duals, include_network=True, tol=KKT_TOL) -> AuditItem:
    res = kkt_residuals(case, duals, include_network)
    sres = storage_kkt_residuals(case, duals, include_network)
    worst = max(float(np.abs(res).max(initial=0.0)), float(np.abs(sres).max(initial=0.0)))
    return AuditItem("kkt stationarity", worst <= tol, worst, "max |residual| over units, hours, points")


def audit_dual_signs(duals: DualBundle, tol: float = 1e-9) -> AuditItem:
    worst = 0.0
    for name, arr in vars(duals).items():
        if name in ("lam", "lam_k"):
            continue
        worst = max(worst, float(-np.min(arr, initial=0.0)))
    return AuditItem("dual signs", worst <= tol, worst, "most negative inequality multiplier")


def audit_ump_signs(prices: PriceSet, points, tol: float = 1e-6) -> AuditItem:
    """Sign consistency: a positive deviation never carries a negative UMP and vice versa."""
    worst = 0.0
    for k, eps in enumerate(points):
        u = prices.ump_k[k]
        worst = max(worst, float(np.max(np.where(eps > 0, -u, 0.0), initial=0.0)),
                    float(np.max(np.where(eps < 0, u, 0.0), initial=0.0)))
    return AuditItem("price property: sign consistency", worst <= tol, worst, "largest wrong-signed UMP")


def audit_reserve_binding(case: CaseSystem, prices: PriceSet, duals: DualBundle, recourse: np.ndarray,
                 reserves: ReserveQuantities, commitment: CommitmentSolution,
                 tol_price: float = 1e-6, tol_mw: float = 1e-5) -> list[AuditItem]:
    """UMP equals the unit's capacity plus recourse-ramp multipliers, and a
    strictly signed UMP pins the unit's recourse at its reserve quantity."""
    buses = [g.bus for g in case.generators]
    on = np.asarray(commitment.on) > 0.5
    ump_at_unit = prices.ump_k[:, buses, :]
    mult = duals.beta_up_k - duals.beta_dn_k + duals.alpha_up_k - duals.alpha_dn_k
    gap = np.abs(ump_at_unit - mult)[:, on] if on.any() else np.zeros(0)
    ident = float(gap.max(initial=0.0))
    bind = 0.0
    for k in range(prices.ump_k.shape[0]):
        pos = (ump_at_unit[k] > tol_price) & on
        neg = (ump_at_unit[k] < -tol_price) & on
        if pos.any():
            bind = max(bind, float(np.abs(recourse[k][pos] - reserves.q_up[pos]).max()))
        if neg.any():
            bind = max(bind, float(np.abs(recourse[k][neg] - reserves.q_down[neg]).max()))
    return [AuditItem("price property: multiplier identity", ident <= tol_price, ident, "max |UMP - (beta + alpha)|"),
            AuditItem("price property: binding recourse", bind <= tol_mw, bind, "max |dP - Q| where UMP is signed")]


def audit_lmp_decomposition(case: CaseSystem, duals: DualBundle, prices: PriceSet,
                            include_network: bool = True, tol: float = 1e-9) -> AuditItem:
    """Recompute congestion components line by line and compare with pi_e - lam."""
    gamma = _gamma(case, include_network)
    N, T = prices.energy.shape
    worst = 0.0
    for t in range(T):
        for m in range(N):
            cong = 0.0
            for l in range(gamma.shape[0]):
                cong += gamma[l, m] * (duals.eta_up[l, t] - duals.eta_dn[l, t])
                for k in range(duals.n_points):
                    cong += gamma[l, m] * (duals.eta_up_k[k, l, t] - duals.eta_dn_k[k, l, t])
            worst = max(worst, abs((prices.energy[m, t] - duals.lam[t]) + cong))
    return AuditItem("lmp decomposition", worst <= tol, worst)


def finite_difference_prices(case: CaseSystem, red: RedSolution, bus: int, hour: int,
                             step: float = 0.1) -> tuple[float, float]:
    """(energy, per-point-summed uncertainty) price estimates by re-solving with
    +step MW of load, respectively +step MW of deviation in every point, at one bus-hour."""
    model = red.model
    gamma = _gamma(case, model.include_network)
    r = model.rows
    base = red.objective

    def resolve(shift_load: bool):
        lp = model.lp
        saved = list(lp.rhs)
        try:
            if shift_load:
                lp.rhs[r["balance"][hour]] += step
                for l in range(gamma.shape[0]):
                    if r["flow_up"][l, hour] >= 0:
                        lp.rhs[r["flow_up"][l, hour]] += gamma[l, bus] * step
                        lp.rhs[r["flow_dn"][l, hour]] -= gamma[l, bus] * step
            for k in range(model.n_points):
                if not shift_load:
                    lp.rhs[r["balance_k"][k, hour]] += step
                for l in range(gamma.shape[0]):
                    if r["flow_up_k"][k, l, hour] >= 0:
                        lp.rhs[r["flow_up_k"][k, l, hour]] += gamma[l, bus] * step
                        lp.rhs[r["flow_dn_k"][k, l, hour]] -= gamma[l, bus] * step
            res = solve_lp(lp)
            if not res.ok:
                raise SolverError(f"finite-difference re-solve: {res.status}")
            return (res.objective - base) / step
        finally:
            lp.rhs[:] = saved

    return resolve(True), resolve(False)
