import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from whittle_bandit.core import ArmModel, expected_reward, subsidy_bounds
from whittle_bandit.dp import bellman_iterate, bellman_sweep, iteration_cap, make_grid
from whittle_bandit.values import (
    ThresholdKind,
    ThresholdStructureError,
    average_reward_solve,
    closed_form_values_dualspeed,
    closed_form_values_typeA,
    closed_form_values_typeB,
    optimal_threshold,
    sign_switches,
    threshold_from_table,
    threshold_policy_value,
    value_iteration,
)
from whittle_bandit.verify import battery

BATTERY = battery(6, seed=7)


# ---------------------------------------------------------------- solver


def test_type_b_idles_forever_above_high_subsidy():
    m = ArmModel("B", 0.3, 0.1, 0.7)
    t = value_iteration(m, 0.9, 0.75, 401)
    assert (t.v_idle >= t.v_play).all()
    assert np.allclose(t.v, 0.75 / 0.1, atol=1e-8)


def test_type_a_plays_everywhere_below_low_subsidy():
    m = ArmModel("A", 0.3, 0.1, 0.7)
    lam = subsidy_bounds(m, 0.9).lambda_low - 0.01
    t = value_iteration(m, 0.9, lam, 401)
    assert (t.v_play >= t.v_idle).all()


def test_type_b_value_at_zero():
    m = ArmModel("B", 0.3, 0.1, 0.7)
    t = value_iteration(m, 0.9, 0.68, 401)
    assert optimal_threshold(m, 0.9, 0.68, 401).kind is ThresholdKind.INTERIOR
    assert t.v[0] == pytest.approx(0.7 / 0.1, abs=1e-8)


def test_iteration_count_within_cap():
    m = ArmModel("A", 0.2, 0.1, 0.7)
    t = value_iteration(m, 0.95, 0.4, 301, tol=1e-10)
    assert 0 < t.iterations <= iteration_cap(0.95, 1e-10, 0.7 / 0.05)


@pytest.mark.parametrize("fam,m", BATTERY[::3])
def test_sweep_matches_iteration(fam, m):
    g = make_grid(m, 801)
    for beta in (0.5, 0.9, 0.99):
        rng = subsidy_bounds(m, beta)
        for lam in np.linspace(rng.lambda_low - 0.05, rng.lambda_high + 0.05, 5):
            it, _ = bellman_iterate(g, beta, lam, 1e-11)
            assert np.max(np.abs(bellman_sweep(g, beta, lam) - it)) < 1e-8


def test_solver_argument_checks():
    m = ArmModel("A", 0.2, 0.1, 0.7)
    with pytest.raises(ValueError):
        value_iteration(m, 1.0, 0.3)
    with pytest.raises(ValueError):
        value_iteration(m, 0.9, 0.3, tol=0)
    with pytest.raises(ValueError):
        value_iteration(m, 0.9, 0.3, method="magic")
    with pytest.raises(ValueError):
        make_grid(m, 1)


# ---------------------------------------------------------------- structural properties


@pytest.mark.parametrize("fam,m", BATTERY)
def test_value_shape_properties(fam, m):
    beta = 0.9
    rng = subsidy_bounds(m, beta)
    lams = np.linspace(rng.lambda_low, rng.lambda_high, 4)
    tables = [value_iteration(m, beta, float(lam), 1001, method="sweep") for lam in lams]
    h = tables[0].spacing
    slack = 2 * h * (m.rho1 - m.rho0) / (1 - beta)
    for t in tables:
        assert np.all(np.diff(t.v) <= 1e-9)  # non-increasing in pi
        mid = 0.5 * (t.v[:-2] + t.v[2:]) - t.v[1:-1]
        assert mid.min() >= -slack  # midpoint convex up to interpolation error
        fit = np.polyfit(t.grid, t.v_play, 1)
        assert np.max(np.abs(np.polyval(fit, t.grid) - t.v_play)) < 1e-9  # affine play branch
        assert np.all(np.diff(t.advantage) <= 1e-9)  # play advantage decreasing in pi
    for lo, hi in zip(tables, tables[1:]):
        assert np.all(hi.v >= lo.v)
        assert np.all(hi.advantage <= lo.advantage + 1e-12)
    # convex in the subsidy at each belief
    a, b, c = tables[0].v, tables[1].v, tables[2].v
    assert np.all(b <= 0.5 * (a + c) + 1e-9)


# ---------------------------------------------------------------- closed forms


def test_type_a_reset_value_example():
    m = ArmModel("A", 0.5, 0.0, 1.0)
    play, _ = closed_form_values_typeA(m, 0.5, 0.4, 0.4, 0.9)
    v1 = (play - expected_reward(m, 0.9)) / 0.5
    assert v1 == pytest.approx(0.9, abs=1e-4)
    assert threshold_policy_value(m, 0.5, 0.4, 0.4, 1.0) == pytest.approx(v1)
    grid = value_iteration(m, 0.5, 0.4, 4001)
    thr = optimal_threshold(m, 0.5, 0.4, 4001)
    play_opt, _ = closed_form_values_typeA(m, 0.5, 0.4, thr.pi_T, 0.9)
    assert play_opt == pytest.approx(grid.branches_at(0.9)[0], abs=2e-3)


def test_type_a_rejects_zero_threshold():
    with pytest.raises(ValueError):
        closed_form_values_typeA(ArmModel("A", 0.5, 0.1, 0.7), 0.5, 0.4, 0.0, 0.5)
    with pytest.raises(ValueError):
        closed_form_values_typeA(ArmModel("B", 0.5, 0.1, 0.7), 0.5, 0.4, 0.3, 0.5)


def test_type_a_play_branch_structure():
    m = ArmModel("A", 0.3, 0.1, 0.7)
    base = closed_form_values_typeA(m, 0.8, 0.3, 0.4, 0.0)[0]
    for pi in (0.2, 0.6, 1.0):
        play, _ = closed_form_values_typeA(m, 0.8, 0.3, 0.4, pi)
        assert play - expected_reward(m, pi) == pytest.approx(base - expected_reward(m, 0.0))


def test_type_b_closed_form_examples():
    m = ArmModel("B", 0.3, 0.1, 0.7)
    play, _ = closed_form_values_typeB(m, 0.9, 0.6, 0.5, 0.0)
    assert play == pytest.approx(0.7 / 0.1)
    _, idle = closed_form_values_typeB(m, 0.9, 0.6, 0.0, 0.4)
    assert idle == pytest.approx(0.6 / 0.1)
    _, idle = closed_form_values_typeB(m, 0.9, 0.6, 0.5, 0.9)
    assert idle == pytest.approx(6.0)
    # above the threshold the belief only rises, so idling is permanent
    assert threshold_policy_value(m, 0.9, 0.6, 0.5, 0.9) == pytest.approx(6.0)


def test_dual_speed_closed_form_examples():
    m = ArmModel("A", 0.1, 0.1, 0.7, "dual", 0.3)
    play, idle = closed_form_values_dualspeed(m, 0.5, 0.5, 0.8, 0.9)
    # same fixed threshold policy, evaluated by simulation of the belief path
    assert play == pytest.approx(expected_reward(m, 0.9) + 0.5 * threshold_policy_value(m, 0.5, 0.5, 0.8, 1.0))
    assert idle == pytest.approx(0.5 + 0.5 * threshold_policy_value(m, 0.5, 0.5, 0.8, 0.9 * 0.9 + 0.1 * 0.3))
    # threshold below the fixed point: belief 1 idles forever
    play, _ = closed_form_values_dualspeed(m, 0.5, 0.5, 0.5, 0.9)
    assert (play - expected_reward(m, 0.9)) / 0.5 == pytest.approx(0.5 / 0.5)
    b = ArmModel("B", 0.1, 0.1, 0.7, "dual", 0.3)
    play, _ = closed_form_values_dualspeed(b, 0.5, 0.5, 0.6, 0.0)
    assert play == pytest.approx(0.7 / 0.5)
    with pytest.raises(ValueError):
        closed_form_values_dualspeed(ArmModel("A", 0.1, 0.1, 0.7), 0.5, 0.5, 0.6, 0.0)


@pytest.mark.parametrize("fam,m", BATTERY)
def test_closed_forms_match_oracle_at_optimal_threshold(fam, m):
    fn = {"base-A": closed_form_values_typeA, "base-B": closed_form_values_typeB}.get(
        fam, closed_form_values_dualspeed)
    for beta in (0.5, 0.9):
        rng = subsidy_bounds(m, beta)
        for lam in np.linspace(rng.lambda_low, rng.lambda_high, 6)[1:-1]:
            t = value_iteration(m, beta, float(lam), 2001, method="sweep")
            thr = threshold_from_table(t)
            if thr.kind is not ThresholdKind.INTERIOR:
                continue
            tol = max(5 * t.spacing * (m.rho1 - m.rho0) / (1 - beta), 1e-6)
            for pi in (0.05, 0.3, 0.55, 0.8, 0.97):
                play, idle = fn(m, beta, float(lam), thr.pi_T, pi)
                p_num, i_num = t.branches_at(pi)
                assert play == pytest.approx(p_num, abs=tol)
                assert idle == pytest.approx(i_num, abs=tol)


# ---------------------------------------------------------------- thresholds


def test_threshold_regimes():
    m = ArmModel("A", 0.5, 0.0, 1.0)
    rng = subsidy_bounds(m, 0.5)
    assert optimal_threshold(m, 0.5, rng.lambda_high + 0.01).kind is ThresholdKind.NEVER_PLAY
    assert optimal_threshold(m, 0.5, rng.lambda_low - 0.01).kind is ThresholdKind.ALWAYS_PLAY


def test_threshold_regression_value():
    thr = optimal_threshold(ArmModel("A", 0.5, 0.0, 1.0), 0.5, 0.5)
    assert thr.kind is ThresholdKind.INTERIOR
    assert thr.pi_T == pytest.approx(0.357142857, abs=1e-6)


def test_threshold_effective_values():
    m = ArmModel("A", 0.5, 0.1, 0.7)
    assert optimal_threshold(m, 0.5, 5.0).effective == 0.0
    assert optimal_threshold(m, 0.5, -5.0).effective > 1.0


def test_sign_switches_and_structure_error():
    assert sign_switches(np.array([1.0, 0.5, 0.0, -1.0]), 1e-12) == 1
    assert sign_switches(np.array([1.0, -1.0, 1.0]), 1e-12) == 2
    t = value_iteration(ArmModel("A", 0.3, 0.1, 0.7), 0.9, 0.4, 101)
    bad = type(t)(t.model, t.grid, t.v, t.v_play, t.v_play - np.sin(9 * t.grid), t.beta, t.lam,
                  t.belief_grid)
    with pytest.raises(ThresholdStructureError):
        threshold_from_table(bad)


# ---------------------------------------------------------------- average reward


def test_average_gain_type_b_never_play():
    sol = average_reward_solve(ArmModel("B", 0.3, 0.1, 0.7), 0.8, grid_size=401)
    assert sol.gain == pytest.approx(0.8, abs=1e-6)
    assert [b for b, _ in sol.trajectory] == [0.99, 0.999, 0.9999]


def test_average_gain_type_a_always_play():
    m = ArmModel("A", 0.3, 0.1, 0.7)
    sol = average_reward_solve(m, subsidy_bounds(m, None).lambda_low - 0.05, grid_size=401)
    assert sol.gain == pytest.approx(m.rho0, abs=1e-6)
    assert sol.bias[-1] == pytest.approx(0.0)


def test_average_solve_warns_when_unstable():
    with pytest.warns(RuntimeWarning):
        average_reward_solve(ArmModel("A", 0.3, 0.1, 0.7), 0.4, beta_sequence=(0.5, 0.6), grid_size=201,
                             stabilization_tol=1e-9)
    with pytest.raises(ValueError):
        average_reward_solve(ArmModel("A", 0.3, 0.1, 0.7), 0.4, beta_sequence=(0.9, 0.5))


@given(st.floats(0.05, 0.45), st.floats(0.02, 0.3), st.floats(0.5, 0.95), st.floats(0.3, 0.95))
def test_threshold_policy_value_is_a_policy_value(p, r0, r1, beta):
    # never above the optimum, equal to it at the optimal threshold
    m = ArmModel("A", p, r0, r1)
    lam = 0.5 * (r0 + r1)
    t = value_iteration(m, beta, lam, 801, method="sweep")
    slack = 3 * t.spacing * (r1 - r0) / (1 - beta) + 1e-9
    for pi_T in (0.2, 0.5, 0.9):
        for pi in (0.1, 0.6):
            assert threshold_policy_value(m, beta, lam, pi_T, pi) <= t.value_at(pi) + slack
