"""Power system instance: buses, lines, units, loads and the uncertainty budget.

Cases are plain frozen dataclasses. Arrays are numpy and indexed
``[bus, hour]`` / ``[unit, hour]`` / ``[line, bus]`` throughout the package.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class CaseError(ValueError):
    """Raised for malformed cases or networks PTDF cannot be built on."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float
    name: str = ""


@dataclass(frozen=True)
class Generator:
    name: str
    bus: int
    p_min: float
    p_max: float
    p0: float
    cost_a: float
    cost_b: float
    cost_c: float
    ramp_hourly_up: float
    ramp_hourly_down: float
    ramp_unc_up: float
    ramp_unc_down: float
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    min_on: int = 1
    min_off: int = 1
    t0: int = 1

    @property
    def initially_on(self) -> bool:
        return self.t0 > 0


@dataclass(frozen=True)
class StorageDevice:
    """Battery following E_t = E_{t-1} + eff_d * Pd_t + eff_c * Pc_t.

    ``Pd`` is the (non-positive) discharge rate and ``Pc`` the (non-negative)
    charge rate, so grid injection is ``-(Pd + Pc)``.
    """

    name: str
    bus: int
    e_max: float
    e0: float
    rate_discharge: float
    rate_charge: float
    eff_discharge: float = 1.0
    eff_charge: float = 1.0


@dataclass(frozen=True)
class LoadProfile:
    base_load: np.ndarray  # (T,)
    distribution: np.ndarray  # (N,)

    def demand(self) -> np.ndarray:
        """Per-bus demand, shape (N, T)."""
        return np.outer(self.distribution, self.base_load)


@dataclass(frozen=True)
class UncertaintySpec:
    bounds: np.ndarray  # (N, T), the raw forecast-error bound u_bar
    lam: float = 1.0
    lam_budget: float = 1.0
    # "bound": sum |eps|/u_bar <= budget; "scaled": sum |eps|/(lam*u_bar) <= budget
    budget_denominator: str = "bound"

    def effective_bounds(self) -> np.ndarray:
        return self.lam * self.bounds


@dataclass(frozen=True)
class PtdfMatrix:
    entries: np.ndarray  # (L, N)
    reference_bus: int

    def flows(self, injections: np.ndarray) -> np.ndarray:
        return self.entries @ injections


@dataclass(frozen=True)
class CostCurve:
    blocks: tuple  # ((p_from, p_to, marginal), ...)
    no_load_cost: float

    @property
    def widths(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi, _ in self.blocks])

    @property
    def marginals(self) -> np.ndarray:
        return np.array([mc for _, _, mc in self.blocks])

    def cost(self, p: float) -> float:
        """Piecewise cost of output ``p`` for a committed unit, no-load part included."""
        total = self.no_load_cost
        for lo, hi, mc in self.blocks:
            total += mc * min(max(p - lo, 0.0), hi - lo)
        return total


@dataclass(frozen=True)
class CaseSystem:
    buses: tuple
    lines: tuple
    generators: tuple
    loads: LoadProfile
    uncertainty: UncertaintySpec
    storages: tuple = ()
    name: str = "case"
    reference_bus: int = 0
    n_blocks: int = 5
    scenarios: dict = field(default_factory=dict)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @property
    def horizon(self) -> int:
        return len(self.loads.base_load)

    def demand(self) -> np.ndarray:
        return self.loads.demand()

    def ptdf(self) -> PtdfMatrix:
        return compute_ptdf(self.lines, self.n_buses, self.reference_bus)

    def cost_curves(self) -> list:
        return [build_cost_curve(g, self.n_blocks) for g in self.generators]

    def gen_bus_matrix(self) -> np.ndarray:
        """Incidence (N, G) mapping unit outputs to bus injections."""
        m = np.zeros((self.n_buses, self.n_gens))
        for i, g in enumerate(self.generators):
            m[g.bus, i] = 1.0
        return m

    def storage_bus_matrix(self) -> np.ndarray:
        m = np.zeros((self.n_buses, len(self.storages)))
        for s, dev in enumerate(self.storages):
            m[dev.bus, s] = 1.0
        return m

    def with_budget(self, lam=None, lam_budget=None, budget_denominator=None) -> "CaseSystem":
        unc = self.uncertainty
        unc = dataclasses.replace(
            unc,
            lam=unc.lam if lam is None else float(lam),
            lam_budget=unc.lam_budget if lam_budget is None else float(lam_budget),
            budget_denominator=(unc.budget_denominator if budget_denominator is None
                                else budget_denominator),
        )
        return dataclasses.replace(self, uncertainty=unc)

    def with_scenario(self, name: str) -> "CaseSystem":
        sc = self.scenarios[name]
        return self.with_budget(sc.get("lambda"), sc.get("lambda_budget"))

    def without_uncertainty(self) -> "CaseSystem":
        unc = dataclasses.replace(self.uncertainty, bounds=np.zeros_like(self.uncertainty.bounds))
        return dataclasses.replace(self, uncertainty=unc)


def compute_ptdf(lines, n_buses: int, reference_bus: int = 0) -> PtdfMatrix:
    """DC shift factors: row l is the flow on line l per MW injected at each bus
    and withdrawn at ``reference_bus``."""
    n_lines = len(lines)
    if not 0 <= reference_bus < n_buses:
        raise CaseError(f"reference bus {reference_bus} out of range")
    if any(ln.reactance <= 0 for ln in lines):
        raise CaseError("line reactances must be positive")
    if n_buses > 1:
        adj = csr_matrix(
            (np.ones(n_lines), ([ln.from_bus for ln in lines], [ln.to_bus for ln in lines])),
            shape=(n_buses, n_buses),
        )
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise CaseError(f"network is disconnected ({n_comp} islands)")

    incidence = np.zeros((n_lines, n_buses))
    for l, ln in enumerate(lines):
        incidence[l, ln.from_bus] = 1.0
        incidence[l, ln.to_bus] = -1.0
    b_line = np.diag([1.0 / ln.reactance for ln in lines])
    b_bus = incidence.T @ b_line @ incidence

    keep = [m for m in range(n_buses) if m != reference_bus]
    ptdf = np.zeros((n_lines, n_buses))
    if keep:
        reduced = b_bus[np.ix_(keep, keep)]
        if np.linalg.matrix_rank(reduced) < len(keep):
            raise CaseError("singular susceptance matrix")
        ptdf[:, keep] = b_line @ incidence[:, keep] @ np.linalg.inv(reduced)
    return PtdfMatrix(entries=ptdf, reference_bus=reference_bus)


def build_cost_curve(gen: Generator, n_blocks: int = 5) -> CostCurve:
    """Equal-width blocks over [p_min, p_max] priced at the quadratic's slope at
    each block midpoint.

    With midpoint slopes each block integral equals the exact quadratic
    increment, so the piecewise cost agrees with ``aP^2 + bP + c`` at every
    block edge.
    """
    if n_blocks < 1:
        raise CaseError("n_blocks must be >= 1")
    edges = np.linspace(gen.p_min, gen.p_max, n_blocks + 1)
    blocks = tuple(
        (float(lo), float(hi), float(2.0 * gen.cost_a * 0.5 * (lo + hi) + gen.cost_b))
        for lo, hi in zip(edges[:-1], edges[1:])
    )
    no_load = gen.cost_c + gen.cost_a * gen.p_min ** 2 + gen.cost_b * gen.p_min
    return CostCurve(blocks=blocks, no_load_cost=float(no_load))


def validate_case(case: CaseSystem) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out = []
    n = case.n_buses
    ids = [b.id for b in case.buses]
    if sorted(ids) != list(range(n)):
        out.append("Bus: ids must be dense and unique 0..N-1")

    for l, ln in enumerate(case.lines):
        for end in (ln.from_bus, ln.to_bus):
            if not 0 <= end < n:
                out.append(f"Line {l}: bus {end} does not exist")
        if ln.from_bus == ln.to_bus:
            out.append(f"Line {l}: from_bus equals to_bus")
        if ln.capacity <= 0:
            out.append(f"Line {l}: capacity must be positive")
        if ln.reactance <= 0:
            out.append(f"Line {l}: reactance must be positive")

    for g in case.generators:
        if not 0 <= g.bus < n:
            out.append(f"Generator {g.name}: bus {g.bus} does not exist")
        if not 0 <= g.p_min <= g.p_max:
            out.append(f"Generator {g.name}: need 0 <= p_min <= p_max")
        ramps = (g.ramp_hourly_up, g.ramp_hourly_down, g.ramp_unc_up, g.ramp_unc_down)
        if min(ramps) < 0:
            out.append(f"Generator {g.name}: ramp limits must be >= 0")
        if g.min_on < 1 or g.min_off < 1:
            out.append(f"Generator {g.name}: min on/off times must be >= 1")
        if g.t0 == 0:
            out.append(f"Generator {g.name}: t0 must be nonzero (+on / -off hours)")
        if g.t0 > 0 and not g.p_min <= g.p0 <= g.p_max:
            out.append(f"Generator {g.name}: initially on but p0 outside [p_min, p_max]")

    for s in case.storages:
        if not 0 <= s.bus < n:
            out.append(f"StorageDevice {s.name}: bus {s.bus} does not exist")
        if not 0 <= s.e0 <= s.e_max:
            out.append(f"StorageDevice {s.name}: need 0 <= e0 <= e_max")
        if s.rate_charge < 0 or s.rate_discharge < 0:
            out.append(f"StorageDevice {s.name}: rates must be >= 0")
        if not (0 < s.eff_charge <= 1 and 0 < s.eff_discharge <= 1):
            out.append(f"StorageDevice {s.name}: efficiencies must lie in (0, 1]")

    dist = np.asarray(case.loads.distribution)
    if dist.shape != (n,):
        out.append("LoadProfile: distribution must have one entry per bus")
    elif np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        out.append(f"LoadProfile: distribution must be >= 0 and sum to 1 (sums to {dist.sum():.6g})")
    if np.any(np.asarray(case.loads.base_load) < 0):
        out.append("LoadProfile: base_load must be >= 0")

    unc = case.uncertainty
    if np.shape(unc.bounds) != (n, case.horizon):
        out.append(f"UncertaintySpec: bounds must have shape ({n}, {case.horizon})")
    elif np.any(unc.bounds < 0):
        out.append("UncertaintySpec: bounds must be >= 0")
    if unc.lam <= 0 or unc.lam_budget < 0:
        out.append("UncertaintySpec: lambda must be > 0 and budget >= 0")
    if unc.budget_denominator not in ("bound", "scaled"):
        out.append("UncertaintySpec: budget_denominator must be 'bound' or 'scaled'")
    if not 0 <= case.reference_bus < max(n, 1):
        out.append("CaseSystem: reference bus does not exist")
    return out


# ---------------------------------------------------------------- JSON I/O

def _schema() -> dict:
    text = resources.files("rucmarket.data").joinpath("case.schema.json").read_text()
    return json.loads(text)


def case_from_dict(doc: dict) -> CaseSystem:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise CaseError(f"case file invalid at {where}: {e.message}") from None
    horizon = int(doc["horizon"])
    buses = tuple(Bus(id=int(b["id"]), name=b.get("name", f"Bus{b['id'] + 1}")) for b in doc["buses"])
    lines = tuple(
        Line(int(l["from_bus"]), int(l["to_bus"]), float(l["reactance"]), float(l["capacity"]),
             l.get("name", ""))
        for l in doc["lines"]
    )
    gens = []
    for g in doc["generators"]:
        ramp_u = float(g["ramp_unc_up"])
        ramp_d = float(g["ramp_unc_down"])
        gens.append(Generator(
            name=g["name"], bus=int(g["bus"]),
            p_min=float(g["p_min"]), p_max=float(g["p_max"]), p0=float(g["p0"]),
            cost_a=float(g["cost_a"]), cost_b=float(g["cost_b"]), cost_c=float(g["cost_c"]),
            ramp_hourly_up=float(g.get("ramp_hourly_up", ramp_u)),
            ramp_hourly_down=float(g.get("ramp_hourly_down", ramp_d)),
            ramp_unc_up=ramp_u, ramp_unc_down=ramp_d,
            startup_cost=float(g.get("startup_cost", 0.0)),
            shutdown_cost=float(g.get("shutdown_cost", 0.0)),
            min_on=int(g.get("min_on", 1)), min_off=int(g.get("min_off", 1)),
            t0=int(g.get("t0", 1)),
        ))
    storages = tuple(
        StorageDevice(
            name=s["name"], bus=int(s["bus"]), e_max=float(s["e_max"]), e0=float(s["e0"]),
            rate_discharge=float(s["rate_discharge"]), rate_charge=float(s["rate_charge"]),
            eff_discharge=float(s.get("eff_discharge", 1.0)),
            eff_charge=float(s.get("eff_charge", 1.0)),
        )
        for s in doc.get("storages", [])
    )
    loads = LoadProfile(
        base_load=np.asarray(doc["loads"]["base_load"], dtype=float),
        distribution=np.asarray(doc["loads"]["distribution"], dtype=float),
    )
    if loads.base_load.shape != (horizon,):
        raise CaseError(f"loads.base_load must have {horizon} entries")
    u = doc["uncertainty"]
    bounds = np.zeros((len(buses), horizon))
    for key, row in u.get("bounds", {}).items():
        bounds[int(key)] = np.asarray(row, dtype=float)
    unc = UncertaintySpec(
        bounds=bounds, lam=float(u.get("lambda", 1.0)),
        lam_budget=float(u.get("lambda_budget", 1.0)),
        budget_denominator=u.get("budget_denominator", "bound"),
    )
    return CaseSystem(
        buses=buses, lines=lines, generators=tuple(gens), loads=loads, uncertainty=unc,
        storages=storages, name=doc.get("name", "case"),
        reference_bus=int(doc.get("reference_bus", 0)),
        n_blocks=int(doc.get("n_blocks", 5)),
        scenarios=dict(doc.get("scenarios", {})),
    )


def case_to_dict(case: CaseSystem) -> dict:
    unc = case.uncertainty
    return {
        "name": case.name,
        "horizon": case.horizon,
        "reference_bus": case.reference_bus,
        "n_blocks": case.n_blocks,
        "buses": [{"id": b.id, "name": b.name} for b in case.buses],
        "lines": [dataclasses.asdict(l) for l in case.lines],
        "generators": [dataclasses.asdict(g) for g in case.generators],
        "storages": [dataclasses.asdict(s) for s in case.storages],
        "loads": {"base_load": case.loads.base_load.tolist(),
                  "distribution": case.loads.distribution.tolist()},
        "uncertainty": {
            "bounds": {str(m): unc.bounds[m].tolist() for m in range(case.n_buses)
                       if np.any(unc.bounds[m] > 0)},
            "lambda": unc.lam, "lambda_budget": unc.lam_budget,
            "budget_denominator": unc.budget_denominator,
        },
        "scenarios": case.scenarios,
    }


def load_case(path) -> CaseSystem:
    with open(path) as fh:
        return case_from_dict(json.load(fh))


def save_case(case: CaseSystem, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2) + "\n")


def sixbus_path() -> Path:
    return Path(str(resources.files("rucmarket.data").joinpath("sixbus.json")))


def load_sixbus(scenario: str | None = "robust") -> CaseSystem:
    """The bundled 6-bus case; ``scenario`` selects a stored (lambda, budget) pair."""
    case = load_case(sixbus_path())
    return case.with_scenario(scenario) if scenario else case
