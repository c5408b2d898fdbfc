import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st

from rucmarket.ccg import CcgError
from rucmarket.market import clear_market
from rucmarket.pricing import (DualBundle, base_flows, compute_reserves, extract_prices,
                               finite_difference_prices, kkt_residuals, solve_red)
from rucmarket.synthetic import random_case
from rucmarket.ucmodel import BaseDispatch, CommitmentSolution
from conftest import HOUR21
from helpers import single_bus

PRICE_TOL = 0.05


def test_hour21_dispatch(robust_result):
    np.testing.assert_allclose(robust_result.dispatch.p[:, HOUR21], [195.19, 25.58, 16.54], atol=0.05)


def test_hour21_reserve_quantities(robust_result):
    r = robust_result.reserves
    np.testing.assert_allclose(r.q_up[:, HOUR21], [24.0, 12.0, 3.46], atol=0.05)
    np.testing.assert_allclose(r.q_down[:, HOUR21], [-24.0, -12.0, -5.0], atol=0.05)


def test_hour21_energy_prices(robust_result):
    np.testing.assert_allclose(robust_result.prices.energy[:, HOUR21],
                               [14.97, 32.64, 34.4, 43.71, 41.94, 35.26], atol=PRICE_TOL)


def test_hour21_aggregate_uncertainty_prices(robust_result):
    p = robust_result.prices
    assert p.ump_up[0, HOUR21] == pytest.approx(14.87, abs=PRICE_TOL)
    assert p.ump_down[0, HOUR21] == pytest.approx(-17.67, abs=PRICE_TOL)
    assert p.ump_up[3, HOUR21] == pytest.approx(25.94, abs=PRICE_TOL)
    # the positive k=2 component at bus 3 lands in the upward aggregate
    assert p.ump_up[2, HOUR21] == pytest.approx(16.63, abs=PRICE_TOL)
    assert np.all(p.ump_down[1:, HOUR21] == 0)


def test_hour21_per_point_uncertainty_prices(robust_result):
    order = np.argsort([-pt[0, HOUR21] for pt in robust_result.points])
    u = robust_result.prices.ump_k[order][:, :, HOUR21]
    np.testing.assert_allclose(u[0, [0, 2]], [14.87, 14.87], atol=0.01)
    np.testing.assert_allclose(u[1, [0, 2]], [-17.67, 1.77], atol=0.01)


def test_line_two_margin_at_hour_21(robust_result, sixbus):
    flow = base_flows(sixbus, robust_result.dispatch)[1, HOUR21]
    assert abs(flow) == pytest.approx(97.63, abs=0.01)
    assert robust_result.reserves.df_pos[1, HOUR21] == pytest.approx(100 - 97.63, abs=0.01)


def test_flow_margins_sum_to_twice_capacity(robust_result, sixbus):
    r = robust_result.reserves
    cap = np.array([ln.capacity for ln in sixbus.lines])[:, None]
    np.testing.assert_allclose(r.df_pos + r.df_neg, np.broadcast_to(2 * cap, r.df_pos.shape), atol=1e-9)


def test_zero_injections_leave_full_margins(sixbus):
    case = dataclasses.replace(sixbus, loads=dataclasses.replace(sixbus.loads, base_load=np.zeros(24)))
    disp = BaseDispatch(np.zeros((3, 24)), np.zeros((0, 24)), np.zeros((0, 24)), np.zeros((0, 24)))
    r = compute_reserves(case, CommitmentSolution.all_on(case), disp)
    cap = np.array([ln.capacity for ln in case.lines])[:, None]
    np.testing.assert_allclose(r.df_pos, np.broadcast_to(cap, r.df_pos.shape))
    np.testing.assert_allclose(r.df_neg, np.broadcast_to(cap, r.df_neg.shape))


def test_audits_pass_on_sixbus(robust_result):
    for item in robust_result.audits():
        assert item.passed, (item.name, item.worst)


def test_kkt_identity_holds(robust_result, sixbus):
    assert np.abs(kkt_residuals(sixbus, robust_result.red.duals)).max() <= 1e-6


def test_energy_price_matches_finite_difference(robust_result, sixbus):
    for bus in (0, 3):
        fd_energy, _ = finite_difference_prices(sixbus, robust_result.red, bus, HOUR21)
        assert fd_energy == pytest.approx(robust_result.prices.energy[bus, HOUR21], abs=1e-3)


def test_uncertainty_price_matches_finite_difference(robust_result, sixbus):
    _, fd_unc = finite_difference_prices(sixbus, robust_result.red, 3, HOUR21)
    assert fd_unc == pytest.approx(robust_result.prices.ump_k[:, 3, HOUR21].sum(), abs=1e-3)


def test_no_points_single_bus_prices_equal_system_lambda():
    case = single_bus([30.0, 50.0], [0.0], b=12.5)
    red = solve_red(case, CommitmentSolution.all_on(case), [])
    prices = extract_prices(case, red.duals)
    np.testing.assert_allclose(prices.energy, red.duals.lam[None, :])
    np.testing.assert_allclose(prices.energy, 12.5)
    assert prices.ump_k.shape[0] == 0 and np.all(prices.ump_up == 0) and np.all(prices.ump_down == 0)


def test_prices_invariant_to_reference_bus(robust_result, sixbus):
    moved = dataclasses.replace(sixbus, reference_bus=3)
    red = solve_red(moved, robust_result.commitment, robust_result.points)
    p = extract_prices(moved, red.duals)
    np.testing.assert_allclose(p.energy, robust_result.prices.energy, atol=1e-6)
    np.testing.assert_allclose(p.ump_k, robust_result.prices.ump_k, atol=1e-6)


def test_red_matches_master_objective(robust_result):
    assert robust_result.red.objective == pytest.approx(robust_result.ccg.objective, rel=1e-6)


def test_dual_bundle_round_trip(robust_result):
    d = robust_result.red.duals
    again = DualBundle.from_dict(d.to_dict())
    for name, arr in vars(d).items():
        np.testing.assert_array_equal(getattr(again, name), arr)
        assert getattr(again, name).shape == arr.shape


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 500), storage=st.booleans())
def test_price_properties_and_kkt_on_random_cases(seed, storage):
    try:
        res = clear_market(random_case(seed, with_storage=storage))
    except CcgError:
        assume(False)  # robust-infeasible instance
    for item in res.audits():
        assert item.passed, (seed, item.name, item.worst)
