"""Unit commitment / dispatch model builder.

One builder serves three problems:

* the CCG master MILP (commitment binaries are variables),
* the robust economic dispatch LP (commitment fixed, same rows otherwise),
* the traditional UC with explicit zonal reserve requirements.

Every row family is recorded in ``UCModel.rows`` as an integer array of row
indices (``-1`` where a row is absent) so duals can be read back by name.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case import CaseError, CaseSystem, validate_case
from .lp import EQ, LE, LinearProgram

GAMMA_EPS = 1e-12


@dataclass(frozen=True)
class CommitmentSolution:
    on: np.ndarray  # (G, T) in {0, 1}
    startup: np.ndarray
    shutdown: np.ndarray
    storage_discharging: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    storage_charging: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @classmethod
    def all_on(cls, case: CaseSystem) -> "CommitmentSolution":
        """Every unit on for the whole horizon, start-ups only where t0 < 0."""
        g, t = case.n_gens, case.horizon
        on = np.ones((g, t))
        startup = np.zeros((g, t))
        for i, gen in enumerate(case.generators):
            if not gen.initially_on:
                startup[i, 0] = 1
        s = len(case.storages)
        return cls(on, startup, np.zeros((g, t)), np.zeros((s, t)), np.zeros((s, t)))

    def shutdown_next(self) -> np.ndarray:
        """z_{i,t+1} with z beyond the horizon taken as 0."""
        nxt = np.zeros_like(self.shutdown)
        nxt[:, :-1] = self.shutdown[:, 1:]
        return nxt

    def to_dict(self) -> dict:
        return {k: np.asarray(v).astype(int).tolist() for k, v in vars(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CommitmentSolution":
        return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


@dataclass(frozen=True)
class BaseDispatch:
    p: np.ndarray  # (G, T)
    storage_energy: np.ndarray  # (S, T)
    storage_discharge: np.ndarray  # (S, T), <= 0
    storage_charge: np.ndarray  # (S, T), >= 0

    @property
    def storage_injection(self) -> np.ndarray:
        return -(self.storage_discharge + self.storage_charge)

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in vars(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "BaseDispatch":
        return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


@dataclass
class UCModel:
    lp: LinearProgram
    case: CaseSystem
    points: list
    commitment: CommitmentSolution | None
    include_network: bool
    var: dict
    rows: dict

    @property
    def n_points(self) -> int:
        return len(self.points)

    def commitment_from(self, x: np.ndarray) -> CommitmentSolution:
        if self.commitment is not None:
            return self.commitment
        pick = lambda key: np.round(x[self.var[key]]) + 0.0 if self.var[key].size else np.zeros(self.var[key].shape)
        return CommitmentSolution(pick("on"), pick("startup"), pick("shutdown"),
                                  pick("s_dis_on"), pick("s_ch_on"))

    def dispatch_from(self, x: np.ndarray) -> BaseDispatch:
        take = lambda key: x[self.var[key]] if self.var[key].size else np.zeros(self.var[key].shape)
        return BaseDispatch(take("p"), take("s_energy"), take("s_dis"), take("s_ch"))

    def recourse_from(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(dP, dS) with shapes (K, G, T) and (K, S, T)."""
        dp = x[self.var["dp"]] if self.var["dp"].size else np.zeros(self.var["dp"].shape)
        ds = x[self.var["ds"]] if self.var["ds"].size else np.zeros(self.var["ds"].shape)
        return dp, ds

    def reserves_from(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[self.var["q_up"]], x[self.var["q_dn"]]


class _Commit:
    """Commitment terms that are either MILP variables or fixed constants."""

    def __init__(self, lp, case, fixed: CommitmentSolution | None, relax=False):
        g, t, s = case.n_gens, case.horizon, len(case.storages)
        self.fixed = fixed
        if fixed is None:
            mk = (lambda n: lp.add_var(n, 0.0, 1.0)) if relax else lp.add_binary
            self.on = np.array([[mk(f"on_{i}_{h}") for h in range(t)] for i in range(g)], dtype=int).reshape(g, t)
            self.startup = np.array([[mk(f"y_{i}_{h}") for h in range(t)] for i in range(g)], dtype=int).reshape(g, t)
            self.shutdown = np.array([[mk(f"z_{i}_{h}") for h in range(t)] for i in range(g)], dtype=int).reshape(g, t)
            self.s_dis_on = np.array([[mk(f"sd_on_{j}_{h}") for h in range(t)] for j in range(s)], dtype=int).reshape(s, t)
            self.s_ch_on = np.array([[mk(f"sc_on_{j}_{h}") for h in range(t)] for j in range(s)], dtype=int).reshape(s, t)
        else:
            self.values = {
                "on": np.asarray(fixed.on, dtype=float),
                "startup": np.asarray(fixed.startup, dtype=float),
                "shutdown": np.asarray(fixed.shutdown, dtype=float),
                "s_dis_on": np.asarray(fixed.storage_discharging, dtype=float).reshape(s, t),
                "s_ch_on": np.asarray(fixed.storage_charging, dtype=float).reshape(s, t),
            }
            empty = np.full((g, t), -1, dtype=int)
            self.on = self.startup = self.shutdown = empty
            self.s_dis_on = self.s_ch_on = np.full((s, t), -1, dtype=int)

    def term(self, coeffs: dict, key: str, i: int, t: int, coef: float) -> float:
        """Add ``coef * key[i, t]`` to the row LHS; returns the amount to subtract from the RHS."""
        if coef == 0:
            return 0.0
        if self.fixed is not None:
            return coef * self.values[key][i, t]
        j = int(getattr(self, key)[i, t])
        coeffs[j] = coeffs.get(j, 0.0) + coef
        return 0.0

    def value(self, key, i, t):
        return self.values[key][i, t] if self.fixed is not None else None


def _rows(*shape):
    return np.full(shape, -1, dtype=int)


def build_model(case: CaseSystem, points=(), commitment: CommitmentSolution | None = None,
                include_network: bool = True, reserve_req=None, relax: bool = False,
                name: str = "uc") -> UCModel:
    """Assemble the UC/dispatch problem.

    Args:
        points: extreme points, each an (N, T) array of bus deviations.
        commitment: fixes the binaries (robust ED) when given.
        include_network: drop all line rows when False.
        reserve_req: optional ``(r_up, r_down)`` per-hour system requirements;
            adds explicit reserve variables and zonal rows.
        relax: continuous commitment (LP relaxation), for bounding only.
    """
    problems = validate_case(case)
    if problems:
        raise CaseError("invalid case: " + "; ".join(problems))
    points = [np.asarray(p, dtype=float) for p in points]

    lp = LinearProgram(name)
    gens, stors, lines = case.generators, case.storages, case.lines
    G, S, L, T, N = case.n_gens, len(stors), case.n_lines, case.horizon, case.n_buses
    K = len(points)
    d = case.demand()
    curves = case.cost_curves()
    nb = case.n_blocks
    ptdf = case.ptdf().entries if include_network and L else np.zeros((L, N))
    com = _Commit(lp, case, commitment, relax)

    var = {
        "p": np.zeros((G, T), dtype=int), "delta": np.zeros((G, T, nb), dtype=int),
        "on": com.on, "startup": com.startup, "shutdown": com.shutdown,
        "s_dis_on": com.s_dis_on, "s_ch_on": com.s_ch_on,
        "s_energy": np.zeros((S, T), dtype=int), "s_dis": np.zeros((S, T), dtype=int),
        "s_ch": np.zeros((S, T), dtype=int),
        "dp": np.zeros((K, G, T), dtype=int), "ds": np.zeros((K, S, T), dtype=int),
        "q_up": np.zeros((0, T), dtype=int), "q_dn": np.zeros((0, T), dtype=int),
        "sq_up": np.zeros((0, T), dtype=int), "sq_dn": np.zeros((0, T), dtype=int),
    }
    rows = {
        "balance": _rows(T), "pdef": _rows(G, T), "cap_up": _rows(G, T), "cap_dn": _rows(G, T),
        "ramp_up": _rows(G, T), "ramp_dn": _rows(G, T),
        "flow_up": _rows(L, T), "flow_dn": _rows(L, T),
        "balance_k": _rows(K, T), "cap_up_k": _rows(K, G, T), "cap_dn_k": _rows(K, G, T),
        "rec_up_k": _rows(K, G, T), "rec_dn_k": _rows(K, G, T),
        "s_cap_up_k": _rows(K, S, T), "s_cap_dn_k": _rows(K, S, T),
        "flow_up_k": _rows(K, L, T), "flow_dn_k": _rows(K, L, T),
        "reserve_up": _rows(T), "reserve_dn": _rows(T),
    }

    # objective: commitment-dependent fixed cost plus block energy cost
    for i, g in enumerate(gens):
        for t in range(T):
            for key, c in (("on", curves[i].no_load_cost), ("startup", g.startup_cost),
                           ("shutdown", g.shutdown_cost)):
                if com.fixed is None:
                    lp.cost[int(getattr(com, key)[i, t])] += c
                else:
                    lp.obj_constant += c * com.value(key, i, t)

    # unit output and blocks
    for i, g in enumerate(gens):
        widths = curves[i].widths
        mcs = curves[i].marginals
        for t in range(T):
            var["p"][i, t] = lp.add_var(f"p_{i}_{t}", 0.0, g.p_max)
            for b in range(nb):
                ub = widths[b] if com.fixed is None else widths[b] * com.value("on", i, t)
                var["delta"][i, t, b] = lp.add_var(f"blk_{i}_{t}_{b}", 0.0, ub, mcs[b])
            coeffs = {int(var["p"][i, t]): 1.0}
            for b in range(nb):
                coeffs[int(var["delta"][i, t, b])] = -1.0
            rhs = -com.term(coeffs, "on", i, t, -g.p_min)
            rows["pdef"][i, t] = lp.add_row(coeffs, EQ, rhs, f"pdef_{i}_{t}")
            if com.fixed is None:
                for b in range(nb):
                    c = {int(var["delta"][i, t, b]): 1.0}
                    com.term(c, "on", i, t, -widths[b])
                    lp.add_row(c, LE, 0.0, f"blk_on_{i}_{t}_{b}")

    # capacity (26a / 6b-6c) and inter-hour ramps (26b-c / 6d-6e)
    for i, g in enumerate(gens):
        p_prev0 = g.p0 if g.initially_on else 0.0
        for t in range(T):
            p = int(var["p"][i, t])
            c = {p: 1.0}
            rhs = -com.term(c, "on", i, t, -g.p_max)
            rows["cap_up"][i, t] = lp.add_row(c, LE, rhs, f"cap_up_{i}_{t}")
            c = {p: -1.0}
            rhs = -com.term(c, "on", i, t, g.p_min)
            rows["cap_dn"][i, t] = lp.add_row(c, LE, rhs, f"cap_dn_{i}_{t}")

            # P_t - P_{t-1} <= r_u (1 - y_t) + Pmin y_t
            c = {p: 1.0}
            rhs = g.ramp_hourly_up
            if t > 0:
                c[int(var["p"][i, t - 1])] = -1.0
            else:
                rhs += p_prev0
            rhs -= com.term(c, "startup", i, t, g.ramp_hourly_up - g.p_min)
            rows["ramp_up"][i, t] = lp.add_row(c, LE, rhs, f"ramp_up_{i}_{t}")
            c = {p: -1.0}
            rhs = g.ramp_hourly_down
            if t > 0:
                c[int(var["p"][i, t - 1])] = 1.0
            else:
                rhs -= p_prev0
            rhs -= com.term(c, "shutdown", i, t, g.ramp_hourly_down - g.p_min)
            rows["ramp_dn"][i, t] = lp.add_row(c, LE, rhs, f"ramp_dn_{i}_{t}")

    if com.fixed is None:
        _add_commitment_logic(lp, case, com)

    # storage
    for j, s in enumerate(stors):
        for t in range(T):
            var["s_energy"][j, t] = lp.add_var(f"se_{j}_{t}", 0.0, s.e_max)
            var["s_dis"][j, t] = lp.add_var(f"sd_{j}_{t}", -s.rate_discharge, 0.0)
            var["s_ch"][j, t] = lp.add_var(f"sc_{j}_{t}", 0.0, s.rate_charge)
        for t in range(T):
            sd, sc, se = int(var["s_dis"][j, t]), int(var["s_ch"][j, t]), int(var["s_energy"][j, t])
            c = {sd: -1.0}
            rhs = -com.term(c, "s_dis_on", j, t, -s.rate_discharge)
            lp.add_row(c, LE, rhs, f"sd_on_{j}_{t}")
            c = {sc: 1.0}
            rhs = -com.term(c, "s_ch_on", j, t, -s.rate_charge)
            lp.add_row(c, LE, rhs, f"sc_on_{j}_{t}")
            if com.fixed is None:
                c = {}
                com.term(c, "s_dis_on", j, t, 1.0)
                com.term(c, "s_ch_on", j, t, 1.0)
                lp.add_row(c, LE, 1.0, f"s_mode_{j}_{t}")
            c = {se: 1.0, sd: -s.eff_discharge, sc: -s.eff_charge}
            rhs = 0.0
            if t > 0:
                c[int(var["s_energy"][j, t - 1])] = -1.0
            else:
                rhs = s.e0
            lp.add_row(c, EQ, rhs, f"s_energy_{j}_{t}")
        lp.add_row({int(var["s_energy"][j, T - 1]): 1.0}, EQ, s.e0, f"s_terminal_{j}")

    def injection_coeffs(c, l, t, pvars, svars_dis, svars_ch, sign):
        for i, g in enumerate(gens):
            gam = ptdf[l, g.bus]
            if abs(gam) > GAMMA_EPS:
                for pv in pvars(i):
                    c[pv] = c.get(pv, 0.0) + sign * gam
        for j, s in enumerate(stors):
            gam = ptdf[l, s.bus]
            if abs(gam) > GAMMA_EPS:
                for sv in svars_dis(j) + svars_ch(j):
                    c[sv] = c.get(sv, 0.0) - sign * gam

    # base-case balance (25b / 6a) and network (25c / 6f-6g)
    for t in range(T):
        c = {int(var["p"][i, t]): 1.0 for i in range(G)}
        for j in range(S):
            c[int(var["s_dis"][j, t])] = -1.0
            c[int(var["s_ch"][j, t])] = -1.0
        rows["balance"][t] = lp.add_row(c, EQ, float(d[:, t].sum()), f"balance_{t}")
        if not include_network:
            continue
        load_flow = ptdf @ d[:, t]
        for l, ln in enumerate(lines):
            for sign, key in ((1.0, "flow_up"), (-1.0, "flow_dn")):
                c = {}
                injection_coeffs(c, l, t, lambda i: [int(var["p"][i, t])],
                                 lambda j: [int(var["s_dis"][j, t])], lambda j: [int(var["s_ch"][j, t])], sign)
                rows[key][l, t] = lp.add_row(c, LE, ln.capacity + sign * load_flow[l], f"{key}_{l}_{t}")

    # one recourse block per extreme point (28a-f / 7a-7g)
    for k, eps in enumerate(points):
        for i, g in enumerate(gens):
            for t in range(T):
                var["dp"][k, i, t] = lp.add_var(f"dp_{k}_{i}_{t}", -np.inf, np.inf)
        for j in range(S):
            for t in range(T):
                var["ds"][k, j, t] = lp.add_var(f"ds_{k}_{j}_{t}", -np.inf, np.inf)
        for t in range(T):
            c = {int(var["dp"][k, i, t]): 1.0 for i in range(G)}
            for j in range(S):
                c[int(var["ds"][k, j, t])] = 1.0
            rows["balance_k"][k, t] = lp.add_row(c, EQ, float(eps[:, t].sum()), f"balance_{k}_{t}")
            for i, g in enumerate(gens):
                p, dp = int(var["p"][i, t]), int(var["dp"][k, i, t])
                c = {p: 1.0, dp: 1.0}
                rhs = -com.term(c, "on", i, t, -g.p_max)
                rows["cap_up_k"][k, i, t] = lp.add_row(c, LE, rhs, f"cap_up_{k}_{i}_{t}")
                c = {p: -1.0, dp: -1.0}
                rhs = -com.term(c, "on", i, t, g.p_min)
                rows["cap_dn_k"][k, i, t] = lp.add_row(c, LE, rhs, f"cap_dn_{k}_{i}_{t}")
                c = {dp: 1.0}
                rhs = g.ramp_unc_up - com.term(c, "startup", i, t, g.ramp_unc_up)
                rows["rec_up_k"][k, i, t] = lp.add_row(c, LE, rhs, f"rec_up_{k}_{i}_{t}")
                c = {dp: -1.0}
                rhs = g.ramp_unc_down
                if t + 1 < T:
                    rhs -= com.term(c, "shutdown", i, t + 1, g.ramp_unc_down)
                rows["rec_dn_k"][k, i, t] = lp.add_row(c, LE, rhs, f"rec_dn_{k}_{i}_{t}")
            for j, s in enumerate(stors):
                sd, sc, ds = int(var["s_dis"][j, t]), int(var["s_ch"][j, t]), int(var["ds"][k, j, t])
                # post-recourse injection -(sd + sc) + ds within [-R_C, R_D]
                rows["s_cap_up_k"][k, j, t] = lp.add_row({sd: -1.0, sc: -1.0, ds: 1.0}, LE,
                                                         s.rate_discharge, f"s_cap_up_{k}_{j}_{t}")
                rows["s_cap_dn_k"][k, j, t] = lp.add_row({sd: 1.0, sc: 1.0, ds: -1.0}, LE,
                                                         s.rate_charge, f"s_cap_dn_{k}_{j}_{t}")
            if not include_network:
                continue
            flow_const = ptdf @ (d[:, t] + eps[:, t])
            for l, ln in enumerate(lines):
                for sign, key in ((1.0, "flow_up_k"), (-1.0, "flow_dn_k")):
                    c = {}
                    injection_coeffs(
                        c, l, t, lambda i: [int(var["p"][i, t]), int(var["dp"][k, i, t])],
                        lambda j: [int(var["s_dis"][j, t])], lambda j: [int(var["s_ch"][j, t])], sign)
                    for j, s in enumerate(stors):
                        gam = ptdf[l, s.bus]
                        if abs(gam) > GAMMA_EPS:
                            dsv = int(var["ds"][k, j, t])
                            c[dsv] = c.get(dsv, 0.0) + sign * gam
                    rows[key][k, l, t] = lp.add_row(c, LE, ln.capacity + sign * flow_const[l],
                                                    f"{key[:-2]}_{k}_{l}_{t}")

    if reserve_req is not None:
        _add_reserve_rows(lp, case, com, var, rows, reserve_req)

    return UCModel(lp, case, points, commitment, include_network, var, rows)


def _add_commitment_logic(lp, case, com):
    T = case.horizon
    for i, g in enumerate(case.generators):
        prev_on = 1.0 if g.initially_on else 0.0
        for t in range(T):
            on, y, z = int(com.on[i, t]), int(com.startup[i, t]), int(com.shutdown[i, t])
            c = {on: 1.0, y: -1.0, z: 1.0}
            rhs = 0.0
            if t > 0:
                c[int(com.on[i, t - 1])] = -1.0
            else:
                rhs = prev_on
            lp.add_row(c, EQ, rhs, f"logic_{i}_{t}")
            lp.add_row({y: 1.0, z: 1.0}, LE, 1.0, f"yz_{i}_{t}")
            # minimum up / down windows
            c = {int(com.startup[i, tau]): 1.0 for tau in range(max(0, t - g.min_on + 1), t + 1)}
            c[on] = c.get(on, 0.0) - 1.0
            lp.add_row(c, LE, 0.0, f"minup_{i}_{t}")
            c = {int(com.shutdown[i, tau]): 1.0 for tau in range(max(0, t - g.min_off + 1), t + 1)}
            c[on] = c.get(on, 0.0) + 1.0
            lp.add_row(c, LE, 1.0, f"mindn_{i}_{t}")
        # residual duration from the initial state
        if g.t0 > 0:
            must = min(T, max(0, g.min_on - g.t0))
            for t in range(must):
                lp.lb[int(com.on[i, t])] = 1.0
        else:
            must = min(T, max(0, g.min_off + g.t0))
            for t in range(must):
                lp.ub[int(com.on[i, t])] = 0.0


def _add_reserve_rows(lp, case, com, var, rows, reserve_req):
    r_up, r_dn = (np.broadcast_to(np.asarray(r, dtype=float), (case.horizon,)) for r in reserve_req)
    G, S, T = case.n_gens, len(case.storages), case.horizon
    var["q_up"] = np.zeros((G, T), dtype=int)
    var["q_dn"] = np.zeros((G, T), dtype=int)
    var["sq_up"] = np.zeros((S, T), dtype=int)
    var["sq_dn"] = np.zeros((S, T), dtype=int)
    for i, g in enumerate(case.generators):
        for t in range(T):
            qu = var["q_up"][i, t] = lp.add_var(f"qup_{i}_{t}", 0.0, np.inf)
            qd = var["q_dn"][i, t] = lp.add_var(f"qdn_{i}_{t}", -np.inf, 0.0)
            p = int(var["p"][i, t])
            # (24a) Q_up + P <= I Pmax ; I Pmin <= Q_dn + P
            c = {int(qu): 1.0, p: 1.0}
            lp.add_row(c, LE, -com.term(c, "on", i, t, -g.p_max), f"res_cap_up_{i}_{t}")
            c = {int(qd): -1.0, p: -1.0}
            lp.add_row(c, LE, -com.term(c, "on", i, t, g.p_min), f"res_cap_dn_{i}_{t}")
            # (24b) with dT = 1
            c = {int(qu): 1.0}
            lp.add_row(c, LE, -com.term(c, "on", i, t, -g.ramp_unc_up), f"res_ramp_up_{i}_{t}")
            c = {int(qd): -1.0}
            lp.add_row(c, LE, -com.term(c, "on", i, t, -g.ramp_unc_down), f"res_ramp_dn_{i}_{t}")
    for j, s in enumerate(case.storages):
        for t in range(T):
            qu = var["sq_up"][j, t] = lp.add_var(f"squp_{j}_{t}", 0.0, np.inf)
            qd = var["sq_dn"][j, t] = lp.add_var(f"sqdn_{j}_{t}", -np.inf, 0.0)
            sd, sc = int(var["s_dis"][j, t]), int(var["s_ch"][j, t])
            lp.add_row({int(qu): 1.0, sd: -1.0, sc: -1.0}, LE, s.rate_discharge, f"sres_up_{j}_{t}")
            lp.add_row({int(qd): -1.0, sd: 1.0, sc: 1.0}, LE, s.rate_charge, f"sres_dn_{j}_{t}")
    for t in range(T):
        c = {int(var["q_up"][i, t]): -1.0 for i in range(G)}
        c.update({int(var["sq_up"][j, t]): -1.0 for j in range(S)})
        rows["reserve_up"][t] = lp.add_row(c, LE, -r_up[t], f"reserve_up_{t}")
        c = {int(var["q_dn"][i, t]): 1.0 for i in range(G)}
        c.update({int(var["sq_dn"][j, t]): 1.0 for j in range(S)})
        rows["reserve_dn"][t] = lp.add_row(c, LE, -r_dn[t], f"reserve_dn_{t}")


def build_master(case: CaseSystem, points=(), include_network: bool = True) -> UCModel:
    """CCG master: base UC/dispatch plus one recourse block per extreme point."""
    return build_model(case, points, None, include_network, name=f"master_k{len(points)}")


def build_traditional_uc(case: CaseSystem, reserve_up, reserve_down, include_network: bool = False,
                         commitment: CommitmentSolution | None = None) -> UCModel:
    """Deterministic UC with explicit system reserve requirements.

    Both requirements are magnitudes (MW, >= 0): total upward reserve must reach
    ``reserve_up`` and total (signed, non-positive) downward reserve must reach
    ``-reserve_down``.
    """
    if np.any(np.asarray(reserve_up) < 0) or np.any(np.asarray(reserve_down) < 0):
        raise ValueError("reserve requirements must be >= 0")
    return build_model(case, (), commitment, include_network, reserve_req=(reserve_up, reserve_down),
                       name="traditional_uc")
