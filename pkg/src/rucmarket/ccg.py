"""Column-and-constraint generation for the two-stage robust UC."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .case import CaseSystem
from .lp import solve_milp
from .ucmodel import BaseDispatch, CommitmentSolution, build_master
from .worstcase import DEFAULT_DELTA, find_worst

log = logging.getLogger(__name__)


class CcgError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class CcgIteration:
    master_objective: float
    violation: float
    new_point: np.ndarray | None
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "master_objective": self.master_objective,
            "violation": self.violation,
            "new_point": None if self.new_point is None else self.new_point.tolist(),
            "wall_time": self.wall_time,
        }


@dataclass
class CcgTrace:
    iterations: list = field(default_factory=list)

    @property
    def objectives(self) -> list:
        return [it.master_objective for it in self.iterations]

    def to_dict(self, with_times: bool = True) -> dict:
        rows = []
        for it in self.iterations:
            d = it.to_dict()
            if not with_times:
                d.pop("wall_time")
            rows.append(d)
        return {"iterations": rows}


@dataclass
class CcgResult:
    commitment: CommitmentSolution
    dispatch: BaseDispatch
    points: list
    trace: CcgTrace
    objective: float


def run_ccg(case: CaseSystem, delta: float = DEFAULT_DELTA, max_iterations: int = 50,
            include_network: bool = True, mip_rel_gap: float = 1e-6) -> CcgResult:
    """Alternate master solves and worst-case searches until the violation is <= delta."""
    points: list[np.ndarray] = []
    trace = CcgTrace()
    for it in range(max_iterations):
        t0 = time.perf_counter()
        model = build_master(case, points, include_network)
        res = solve_milp(model.lp, mip_rel_gap=mip_rel_gap)
        if not res.ok:
            raise CcgError(f"master infeasible or unsolved at iteration {it + 1}: {res.status}", trace)
        commitment = model.commitment_from(res.x)
        dispatch = model.dispatch_from(res.x)
        report = find_worst(case, commitment, dispatch, include_network)
        converged = report.total <= delta
        trace.iterations.append(CcgIteration(
            res.objective, report.total, None if converged else report.point, time.perf_counter() - t0))
        log.info("ccg iter %d: master %.4f, violation %.6f", it + 1, res.objective, report.total)
        if converged:
            return CcgResult(commitment, dispatch, points, trace, res.objective)
        for old in points:
            if np.allclose(old, report.point, atol=1e-9):
                raise CcgError("worst-case search returned an extreme point already in the master "
                               "(solver tolerance trouble)", trace)
        points.append(report.point)
    raise CcgError(f"no convergence within {max_iterations} iterations", trace)
