import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import HalfspaceIntersection

from rucmarket.case import UncertaintySpec
from rucmarket.lp import solve_milp
from rucmarket.synthetic import random_case
from rucmarket.ucmodel import BaseDispatch, CommitmentSolution, build_master
from rucmarket.worstcase import (RecourseOracle, effective_budget, enumerate_vertices, find_worst,
                                 sample_uncertainty)
from conftest import HOUR21
from helpers import single_bus, two_bus_toy


def qhull_vertices(n, cap, budget):
    """Vertices of the box-plus-budget polytope via Qhull halfspace intersection."""
    hs = []
    for i in range(n):
        for sg in (1.0, -1.0):
            row = np.zeros(n + 1)
            row[i], row[-1] = sg, -cap
            hs.append(row)
    for signs in itertools.product((1.0, -1.0), repeat=n):
        hs.append(np.array([*signs, -budget]))
    pts = HalfspaceIntersection(np.array(hs), np.zeros(n)).intersections
    return {tuple(np.round(p, 7) + 0.0) for p in pts}


def spec_for(bounds, lam, budget, denominator="bound"):
    return UncertaintySpec(np.asarray(bounds, dtype=float)[:, None], lam, budget, denominator)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 4), lam=st.sampled_from([0.5, 0.8, 1.0]),
       budget=st.floats(0.05, 5.0), scale=st.lists(st.floats(1.0, 50.0), min_size=4, max_size=4))
def test_vertices_match_halfspace_intersection(n, lam, budget, scale):
    bounds = np.array(scale[:n])
    spec = spec_for(bounds, lam, budget)
    ours = {tuple(np.round(v / bounds, 7) + 0.0) for v in enumerate_vertices(spec, 0)}
    verts = enumerate_vertices(spec, 0)
    assert len(verts) == len(ours)  # no duplicates
    assert ours == qhull_vertices(n, lam, min(budget, n * lam))


def test_zero_budget_gives_origin_only():
    verts = enumerate_vertices(spec_for([10.0, 5.0], 1.0, 0.0), 0)
    assert len(verts) == 1 and np.all(verts[0] == 0)


def test_large_budget_gives_box_corners():
    verts = enumerate_vertices(spec_for([10.0, 5.0], 0.8, 2.0), 0)
    assert {tuple(v) for v in verts} == {(8.0, 4.0), (8.0, -4.0), (-8.0, 4.0), (-8.0, -4.0)}


def test_scaled_denominator_multiplies_budget():
    assert effective_budget(UncertaintySpec(np.zeros((1, 1)), 0.8, 2.0, "scaled")) == pytest.approx(1.6)
    verts = enumerate_vertices(spec_for([10.0, 5.0], 0.8, 1.2, "scaled"), 0)
    # budget 0.96 < cap 0.8 + 0.8 so vertices carry one full and one partial entry
    assert any(np.allclose(np.abs(v), [8.0, 0.8]) for v in verts)


def test_zero_bound_buses_stay_at_zero(sixbus):
    for v in enumerate_vertices(sixbus.uncertainty, HOUR21):
        assert np.all(v[[1, 3, 4, 5]] == 0)


def test_vertex_set_is_sign_symmetric(sixbus):
    verts = {tuple(v) for v in enumerate_vertices(sixbus.uncertainty, HOUR21)}
    assert all(tuple(-np.array(v) + 0.0) in verts for v in verts)


def test_enumeration_order_positive_first():
    verts = enumerate_vertices(spec_for([10.0, 5.0, 2.0], 1.0, 1.0), 0)
    assert np.allclose(verts[0], [10.0, 0, 0]) and np.allclose(verts[1], [-10.0, 0, 0])


def base_plan(case, include_network=True):
    model = build_master(case, include_network=include_network)
    res = solve_milp(model.lp)
    return model.commitment_from(res.x), model.dispatch_from(res.x)


def test_toy_worst_case_matches_grid_scan():
    case = two_bus_toy(bound=20.0, cap=50.0)
    com, disp = base_plan(case)
    assert disp.p[0, 0] == pytest.approx(40.0)
    # closed form: up-recourse is limited by the line (10 MW), down-recourse by the ramp (15 MW)
    grid = np.linspace(-20.0, 20.0, 4001)
    exact = np.maximum(grid - 10.0, 0) + np.maximum(-grid - 15.0, 0)
    rep = find_worst(case, com, disp)
    assert rep.total == pytest.approx(exact.max(), abs=1e-9)
    assert rep.point[1, 0] == pytest.approx(grid[exact.argmax()])
    oracle = RecourseOracle(case, com, disp)
    for e, v in zip(grid[::200], exact[::200]):
        assert oracle.violation(np.array([0.0, e]), 0) == pytest.approx(v, abs=1e-9)


def test_zero_deviation_is_free(sixbus):
    com, disp = base_plan(sixbus)
    oracle = RecourseOracle(sixbus, com, disp)
    assert all(oracle.violation(np.zeros(6), t) == 0.0 for t in range(sixbus.horizon))


def test_units_at_capacity_cannot_follow_upward_deviation():
    case = single_bus([100.0], [12.0], p_max=100.0)
    com = CommitmentSolution.all_on(case)
    disp = BaseDispatch(np.array([[100.0]]), np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 1)))
    oracle = RecourseOracle(case, com, disp, include_network=False)
    assert oracle.violation(np.array([12.0]), 0) == pytest.approx(12.0)
    assert oracle.violation(np.array([-12.0]), 0) == pytest.approx(0.0)


def test_first_iteration_worst_point_at_hour_21(sixbus):
    com, disp = base_plan(sixbus)
    rep = find_worst(sixbus, com, disp)
    np.testing.assert_allclose(rep.point[:, HOUR21], [31.15, 0, 8.31, 0, 0, 0], atol=1e-9)
    assert rep.per_hour[:15].max() == 0.0 and rep.total > 0


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_horizon_lp_decomposes_by_hour(seed):
    case = random_case(seed)
    com, disp = base_plan(case)
    oracle = RecourseOracle(case, com, disp)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        eps = sample_uncertainty(case.uncertainty, rng) * 3.0
        per_hour = sum(oracle.violation(eps[:, t], t) for t in range(case.horizon))
        assert oracle.violation_horizon(eps) == pytest.approx(per_hour, abs=1e-7)


def test_vertex_maximum_dominates_samples(sixbus):
    com, disp = base_plan(sixbus)
    rep = find_worst(sixbus, com, disp)
    oracle = RecourseOracle(sixbus, com, disp)
    rng = np.random.default_rng(1)
    for _ in range(200):
        eps = sample_uncertainty(sixbus.uncertainty, rng)
        assert oracle.violation_horizon(eps) <= rep.total + 1e-7


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.sampled_from([0.5, 1.0]), budget=st.floats(0.1, 3.0))
def test_samples_lie_in_the_set(seed, lam, budget):
    case = random_case(seed % 50)
    spec = dataclasses.replace(case.uncertainty, lam=lam, lam_budget=budget)
    eps = sample_uncertainty(spec, np.random.default_rng(seed))
    b = spec.bounds
    z = np.divide(eps, b, out=np.zeros_like(eps), where=b > 0)
    assert np.all(np.abs(z) <= lam + 1e-12)
    assert np.all(np.abs(z).sum(axis=0) <= effective_budget(spec) + 1e-9)
    assert np.all(eps[b <= 0] == 0)
