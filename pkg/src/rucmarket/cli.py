"""Command-line interface: ``solve``, ``audit`` and ``heatmap``.

Exit codes: 0 success, 1 failed stage or audit, 2 missing input or artifacts.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import ArtifactError, read_json, write_heatmaps, write_json
from .case import CaseError, load_case, load_sixbus, save_case, validate_case
from .ccg import CcgError
from .equilibrium import verify_equilibrium
from .lp import SolverError
from .market import clear_market, compare_with_traditional, reserve_requirements, solve_traditional
from .pricing import (AuditItem, DualBundle, PriceSet, audit_dual_signs, audit_kkt, audit_ump_signs,
                      audit_reserve_binding, audit_lmp_decomposition, compute_reserves)
from .settlement import (FtrError, FtrPortfolio, SettlementLedger, build_ledger, ftr_check_and_credit,
                         revenue_adequacy_report)
from .ucmodel import BaseDispatch, CommitmentSolution
from .worstcase import DEFAULT_DELTA

log = logging.getLogger("rucmarket")

MODES = ("robust", "traditional", "compare")
EXIT_OK, EXIT_FAIL, EXIT_MISSING = 0, 1, 2


@dataclass
class RunConfig:
    case: Path | None = None
    scenario: str | None = None
    lam: float | None = None
    budget: float | None = None
    budget_denominator: str | None = None
    delta: float = DEFAULT_DELTA
    blocks: int | None = None
    reference_bus: int | None = None
    mode: str = "robust"
    network: bool = True
    reserve_reading: str = "budget"
    out: Path = Path("out")
    seed: int = 0
    max_iterations: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["case"] = str(self.case) if self.case else None
        d["out"] = str(self.out)
        return d


def load_config_case(cfg: RunConfig):
    if cfg.case is None:
        case = load_sixbus(cfg.scenario)
    else:
        if not Path(cfg.case).is_file():
            raise FileNotFoundError(f"case file not found: {cfg.case}")
        case = load_case(cfg.case)
        if cfg.scenario:
            case = case.with_scenario(cfg.scenario)
    case = case.with_budget(cfg.lam, cfg.budget, cfg.budget_denominator)
    changes = {}
    if cfg.blocks is not None:
        changes["n_blocks"] = cfg.blocks
    if cfg.reference_bus is not None:
        changes["reference_bus"] = cfg.reference_bus
    case = dataclasses.replace(case, **changes) if changes else case
    problems = validate_case(case)
    if problems:
        raise CaseError("; ".join(problems))
    return case


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_market_artifacts(out: Path, result) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "commitment.json": result.commitment.to_dict(),
        "dispatch.json": result.dispatch.to_dict(),
        "extreme_points.json": {"unit": "MW", "points": [np.asarray(p).tolist() for p in result.points]},
        "recourse.json": {"unit": "MW", "units": result.red.recourse.tolist(),
                          "storages": result.red.storage_recourse.tolist()},
        "duals.json": result.red.duals.to_dict(),
        "prices.json": {"unit": "$/MWh", **result.prices.to_dict()},
        "reserves.json": {"unit": "MW", **result.reserves.to_dict()},
        "ledger.json": {"unit": "$", **result.ledger.to_dict()},
        "objective.json": {"master": result.ccg.objective, "dispatch_lp": result.red.objective, "unit": "$"},
    }
    for name, body in files.items():
        write_json(out / name, body)
    trace = result.ccg.trace
    write_json(out / "trace.json", trace.to_dict(with_times=False),
               header={"written": _now(), "wall_time_s": [it.wall_time for it in trace.iterations]})
    (out / "ledger.csv").write_text(result.ledger.to_csv())
    save_case(result.case, out / "case.json")
    heat = write_heatmaps(out, result.prices.to_dict())
    return sorted(list(files) + ["trace.json", "ledger.csv", "case.json"] + [p.name for p in heat])


def cmd_solve(cfg: RunConfig) -> int:
    try:
        case = load_config_case(cfg)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (CaseError, KeyError, ValueError) as e:
        print(f"error: invalid case: {e}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        if cfg.mode == "robust":
            result = clear_market(case, cfg.delta, cfg.network, cfg.max_iterations)
            files = write_market_artifacts(out, result)
            print(f"converged in {len(result.ccg.trace.iterations)} iterations, |K| = {len(result.points)}, "
                  f"cost {result.red.objective:.2f} $")
        elif cfg.mode == "traditional":
            req = reserve_requirements(case, cfg.reserve_reading)
            trad = solve_traditional(case, req, cfg.network)
            write_json(out / "commitment.json", trad.commitment.to_dict())
            write_json(out / "dispatch.json", trad.dispatch.to_dict())
            write_json(out / "traditional.json", {
                "objective": trad.objective, "requirement_mw": req, "reserve_price_up": trad.reserve_price_up,
                "reserve_price_down": trad.reserve_price_down, "energy": trad.energy_price, "unit": "$/MWh"})
            save_case(case, out / "case.json")
            files = ["case.json", "commitment.json", "dispatch.json", "traditional.json"]
            print(f"traditional UC cost {trad.objective:.2f} $ ({cfg.reserve_reading} reserve reading)")
        else:
            cfg = dataclasses.replace(cfg, network=False)
            result, report = compare_with_traditional(case, cfg.delta)
            files = write_market_artifacts(out, result)
            write_json(out / "comparison.json", report.to_dict())
            files.append("comparison.json")
            for reading, r in report.readings.items():
                verdict = "match" if r["objective_match"] and r["price_match"] else "MISMATCH"
                print(f"{reading:>6} reading: cost gap {r['objective_rel_gap']:.2e}, "
                      f"reserve price deviation up {r['max_price_dev_up']:.4f} "
                      f"down {r['max_price_dev_down']:.4f} -> {verdict}")
            if not report.passed:
                status = EXIT_FAIL
    except (CcgError, SolverError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    write_json(out / "manifest.json", {"config": cfg.to_dict(), "files": sorted(files), "version": __version__},
               header={"written": _now(), "wall_time_s": time.perf_counter() - t0})
    return status


def _load_artifacts(d: Path):
    case = load_case(d / "case.json") if (d / "case.json").is_file() else None
    if case is None:
        raise ArtifactError(f"missing artifact: {d / 'case.json'}")
    G, T, S = case.n_gens, case.horizon, len(case.storages)
    commitment = CommitmentSolution.from_dict(read_json(d / "commitment.json"))
    if commitment.storage_discharging.size == 0:
        commitment = dataclasses.replace(commitment, storage_discharging=np.zeros((S, T)),
                                         storage_charging=np.zeros((S, T)))
    disp = read_json(d / "dispatch.json")
    dispatch = BaseDispatch(**{k: np.asarray(v, dtype=float).reshape(-1, T) for k, v in disp.items()})
    points = [np.asarray(p, dtype=float) for p in read_json(d / "extreme_points.json")["points"]]
    K = len(points)
    rec = read_json(d / "recourse.json")
    recourse = np.asarray(rec["units"], dtype=float).reshape(K, G, T)
    duals = DualBundle.from_dict(read_json(d / "duals.json"))
    pr = read_json(d / "prices.json")
    pr.pop("unit", None)
    prices = PriceSet.from_dict(pr)
    led = read_json(d / "ledger.json")
    led.pop("unit", None)
    ledger = SettlementLedger.from_dict(led)
    return case, commitment, dispatch, points, recourse, duals, prices, ledger


def load_ftr(path: Path, n_buses: int) -> FtrPortfolio:
    body = read_json(path)
    if "injections" in body:
        return FtrPortfolio(np.asarray(body["injections"], dtype=float))
    return FtrPortfolio.from_pairs(body["pairs"], n_buses)


def _print_items(items: list[AuditItem]) -> None:
    width = max(len(it.name) for it in items)
    for it in items:
        flag = "PASS" if it.passed else "FAIL"
        extra = f"  ({it.detail})" if it.detail else ""
        print(f"{flag}  {it.name:<{width}}  {it.worst: .3e}{extra}")


def cmd_audit(cfg: RunConfig, artifacts: Path, ftr_file: Path | None = None) -> int:
    artifacts = Path(artifacts)
    try:
        case, commitment, dispatch, points, recourse, duals, prices, ledger = _load_artifacts(artifacts)
        portfolio = load_ftr(Path(ftr_file), case.n_buses) if ftr_file else None
    except ArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except FtrError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    network = bool(read_json(artifacts / "manifest.json")["config"].get("network", True)) \
        if (artifacts / "manifest.json").is_file() else True
    if (artifacts / "comparison.json").is_file():
        network = False
    reserves = compute_reserves(case, commitment, dispatch)
    items = [audit_kkt(case, duals, network), audit_dual_signs(duals), audit_ump_signs(prices, points),
             *audit_reserve_binding(case, prices, duals, recourse, reserves, commitment),
             audit_lmp_decomposition(case, duals, prices, network)]

    fresh = build_ledger(case, prices, duals, dispatch, reserves, points, recourse)
    dev = max(float(np.abs(getattr(fresh, k) - getattr(ledger, k)).max(initial=0.0))
              for k in ("psi", "theta_g", "theta_t", "load_payment", "generator_credit", "congestion_cost"))
    items.append(AuditItem("ledger agrees with prices and dispatch", dev <= 0.01, dev))

    if portfolio is not None:
        chk = ftr_check_and_credit(portfolio, case, prices)
        items.append(AuditItem("ftr simultaneous feasibility", chk.sft_ok,
                               float(np.max(np.abs(chk.flows) - [ln.capacity for ln in case.lines])),
                               "max flow minus capacity, MW"))
        ledger = dataclasses.replace(ledger, ftr_credit=chk.credit)
    report = revenue_adequacy_report(ledger)
    items.extend(report.items)
    eq = verify_equilibrium(case, prices, dispatch, commitment)
    items.append(AuditItem("competitive equilibrium", eq.verified, float(eq.gap.max()), "largest profit gap, $"))
    _print_items(items)

    h = ledger.hourly()
    if portfolio is not None:
        print("hour  ftr_credit  congestion  underfunding  transmission_reserve_credit  [$]")
        for t in range(case.horizon):
            if abs(h["ftr_credit"][t]) > 0.005 or abs(h["congestion_cost"][t]) > 0.005:
                print(f"{t + 1:>4}  {h['ftr_credit'][t]:10.2f}  {h['congestion_cost'][t]:10.2f}  "
                      f"{h['ftr_underfunding'][t]:12.2f}  {h['transmission_reserve_credit'][t]:27.2f}")
    print("money flow [$]: " + ", ".join(f"{k} {v:.2f}" for k, v in report.money_flow.items()))
    write_json(artifacts / "audit.json", {"items": [it.to_dict() for it in items], "money_flow": report.money_flow,
                                           "equilibrium": eq.to_dict()})
    return EXIT_OK if all(it.passed for it in items) else EXIT_FAIL


def cmd_heatmap(artifacts: Path, out: Path | None = None) -> int:
    try:
        prices = read_json(Path(artifacts) / "prices.json")
    except ArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    out = Path(out) if out else Path(artifacts)
    out.mkdir(parents=True, exist_ok=True)
    for p in write_heatmaps(out, prices):
        print(p)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rucmarket", description="Robust day-ahead market clearing")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="clear the market and write artifacts")
    s.add_argument("--case", type=Path, help="case JSON (default: bundled 6-bus case)")
    s.add_argument("--scenario", help="named budget scenario stored in the case file")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--budget", type=float, help="hourly budget on the normalized 1-norm")
    s.add_argument("--budget-denominator", choices=("bound", "scaled"))
    s.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="violation tolerance, MW")
    s.add_argument("--blocks", type=int, help="cost blocks per unit")
    s.add_argument("--reference-bus", type=int)
    s.add_argument("--mode", choices=MODES, default="robust")
    s.add_argument("--no-network", dest="network", action="store_false")
    s.add_argument("--reserve-reading", choices=("box", "budget"), default="budget")
    s.add_argument("--max-iterations", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=Path("out"))

    a = sub.add_parser("audit", help="run settlement, FTR, price-property and equilibrium audits")
    a.add_argument("--artifacts", type=Path, required=True)
    a.add_argument("--ftr", type=Path, help="JSON with 'injections' or 'pairs' [[src, sink, MW], ...]")

    h = sub.add_parser("heatmap", help="write bus x hour price CSVs")
    h.add_argument("--artifacts", type=Path, required=True)
    h.add_argument("--out", type=Path)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        cfg = RunConfig(case=args.case, scenario=args.scenario, lam=args.lam, budget=args.budget,
                        budget_denominator=args.budget_denominator, delta=args.delta, blocks=args.blocks,
                        reference_bus=args.reference_bus, mode=args.mode, network=args.network,
                        reserve_reading=args.reserve_reading, out=args.out, seed=args.seed,
                        max_iterations=args.max_iterations)
        return cmd_solve(cfg)
    if args.command == "audit":
        return cmd_audit(RunConfig(), args.artifacts, args.ftr)
    return cmd_heatmap(args.artifacts, args.out)


if __name__ == "__main__":
    sys.exit(main())
