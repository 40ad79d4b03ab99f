import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexdome.cmdp_core import ContractError, evaluate_policy, uniform_policy
from flexdome.env import ConfigError, ThresholdSpec, generate_instance, rng_stream, rollout
from flexdome.estimation import (BonusConfig, EmpiricalModel, OptimisticModel, bonus_log_terms,
                                 build_optimistic_model, truncated_policy_evaluation,
                                 update_with_trajectory)
from helpers import random_model, random_policy

# independent high-precision evaluation of the closed forms (mpmath, 40 digits)
PHI_R_EMPTY = 3.36002707037547818985
PHI_P_EMPTY = 45.3835154357791826568


def _optimistic(reward, constraints, psi_raw, transitions, alpha=None):
    H, S, A = reward.shape
    zeros = np.zeros((H, S, A))
    return OptimisticModel(reward=reward, constraints=constraints, psi=psi_raw, psi_raw=psi_raw,
                           alpha=np.zeros(constraints.shape[0]) if alpha is None else alpha,
                           transitions=transitions, bonus_r=zeros, bonus_p=zeros)


def _rollouts(model, spec, policy, n, seed=0):
    gen = rng_stream(seed, "est")
    return [rollout(model, spec, policy, gen) for _ in range(n)]


@pytest.fixture(scope="module")
def instance():
    return generate_instance(1, 6, 3, 4, 1, 0.1, "gaussian")


def test_single_trajectory_counts(instance):
    model, spec = instance
    emp = EmpiricalModel.empty(6, 3, 4, 1)
    traj = _rollouts(model, spec, uniform_policy(6, 3, 4), 1)[0]
    update_with_trajectory(emp, traj)
    assert emp.counts.sum() == 4
    assert emp.counts.sum(axis=(1, 2)).tolist() == [1, 1, 1, 1]
    assert emp.threshold_count == 4 and emp.episodes_seen == 1
    np.testing.assert_array_equal(emp.transition_counts.sum(axis=-1), emp.counts)


def test_identical_trajectories_double(instance):
    model, spec = instance
    traj = _rollouts(model, spec, uniform_policy(6, 3, 4), 1)[0]
    one = EmpiricalModel.empty(6, 3, 4, 1).update(traj)
    two = one.copy().update(traj)
    np.testing.assert_array_equal(two.counts, 2 * one.counts)
    np.testing.assert_array_equal(two.transition_counts, 2 * one.transition_counts)
    np.testing.assert_array_equal(two.reward_sums, 2 * one.reward_sums)
    np.testing.assert_array_equal(two.constraint_sums, 2 * one.constraint_sums)
    np.testing.assert_array_equal(two.threshold_sum, 2 * one.threshold_sum)


def test_empirical_means_consistent(instance):
    model, spec = instance
    emp = EmpiricalModel.empty(6, 3, 4, 1)
    for traj in _rollouts(model, spec, uniform_policy(6, 3, 4), 10_000):
        emp.update(traj)
    visited = emp.counts > 0
    assert np.max(np.abs(emp.mean_reward() - model.reward)[visited]) <= 0.05
    np.testing.assert_array_equal(emp.transition_counts.sum(axis=-1), emp.counts)
    assert np.all(emp.reward_sums <= emp.counts)
    assert abs(emp.mean_threshold()[0] - model.thresholds[0]) < 0.05


def test_empty_bonus_values():
    emp = EmpiricalModel.empty(20, 5, 5, 1)
    opt = build_optimistic_model(emp, uniform_policy(20, 5, 5), BonusConfig(0.1, 80_000, 1.0))
    np.testing.assert_allclose(opt.bonus_r, PHI_R_EMPTY, rtol=1e-13)
    np.testing.assert_allclose(opt.bonus_p, PHI_P_EMPTY, rtol=1e-13)
    L_r, L_p = bonus_log_terms(20, 5, 5, 1, BonusConfig(0.1, 80_000))
    assert math.sqrt(L_r) == pytest.approx(PHI_R_EMPTY, rel=1e-13)
    # before any data, p_bar is uniform, alpha_bar is zero and r_bar hits the clip at 1 + H
    np.testing.assert_array_equal(opt.transitions, 1 / 20)
    np.testing.assert_array_equal(opt.alpha, 0.0)
    np.testing.assert_array_equal(opt.reward, 6.0)


def test_bonus_scaler_is_linear(instance):
    model, spec = instance
    emp = EmpiricalModel.empty(6, 3, 4, 1)
    for traj in _rollouts(model, spec, uniform_policy(6, 3, 4), 50):
        emp.update(traj)
    pol = uniform_policy(6, 3, 4)
    full = build_optimistic_model(emp, pol, BonusConfig(0.1, 1000, 1.0))
    small = build_optimistic_model(emp, pol, BonusConfig(0.1, 1000, 1e-3))
    np.testing.assert_allclose(small.bonus_r, 1e-3 * full.bonus_r, rtol=1e-15)
    np.testing.assert_allclose(small.bonus_p, 1e-3 * full.bonus_p, rtol=1e-15)


def test_optimism_and_psi(instance):
    model, spec = instance
    emp = EmpiricalModel.empty(6, 3, 4, 1)
    for traj in _rollouts(model, spec, uniform_policy(6, 3, 4), 30):
        emp.update(traj)
    pol = uniform_policy(6, 3, 4)
    opt = build_optimistic_model(emp, pol, BonusConfig(0.1, 1000, 1e-3))
    assert np.all(opt.reward >= emp.mean_reward())
    assert np.all(opt.constraints >= emp.mean_constraints())
    np.testing.assert_allclose(opt.psi, math.log(3) + opt.bonus_p * math.log(3), rtol=1e-14)
    visited = emp.counts > 0
    np.testing.assert_allclose(opt.transitions.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(opt.transitions[~visited], 1 / 6)


def test_zero_probability_policy_is_floored():
    emp = EmpiricalModel.empty(2, 2, 1, 1)
    pol = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    opt = build_optimistic_model(emp, pol, BonusConfig())
    assert np.all(np.isfinite(opt.psi))
    assert opt.psi_raw[0, 0, 1] == pytest.approx(-math.log(1e-12))


@pytest.mark.parametrize("kwargs", [{"delta": 0.0}, {"delta": 1.0}, {"T": 0}, {"scaler": -1.0}])
def test_bonus_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        BonusConfig(**kwargs)


def test_tpe_all_zero():
    H, S, A = 3, 2, 2
    z = np.zeros((H, S, A))
    p = np.full((H, S, A, S), 0.5)
    est = truncated_policy_evaluation(_optimistic(z, z[None], z, p), uniform_policy(S, A, H),
                                      [0.0], 0.0, 0)
    for arr in (est.Q_r, est.Q_d, est.Q_psi, est.V_r, est.V_d, est.V_psi, est.Q_y):
        np.testing.assert_array_equal(arr, 0.0)


@pytest.mark.parametrize("level, expected", [(1.0, [3, 2, 1]), (2.0, [3, 2, 1])])
def test_tpe_caps(level, expected):
    H, S, A = 3, 2, 2
    r = np.full((H, S, A), level)
    p = np.full((H, S, A, S), 0.5)
    est = truncated_policy_evaluation(_optimistic(r, r[None], np.zeros_like(r), p),
                                      uniform_policy(S, A, H), [0.0], 0.0, 0)
    for h, cap in enumerate(expected):
        np.testing.assert_array_equal(est.Q_r[h], cap)
        np.testing.assert_array_equal(est.Q_d[0, h], cap)
    if level > 1:
        # untruncated value at the first step would be 6
        assert est.root_r == 3.0


def test_tpe_matches_exact_when_caps_slack(rng):
    for _ in range(20):
        S, A, H, m = 4, 3, 5, 2
        model = random_model(rng, S, A, H, m=m, payoff_scale=1 / (2 * H))
        pol = random_policy(rng, S, A, H)
        opt = _optimistic(model.reward, model.constraints, np.zeros((H, S, A)), model.transitions)
        est = truncated_policy_evaluation(opt, pol, [0.3, 0.1], 0.0, model.initial_state)
        assert np.max(np.abs(est.Q_r - evaluate_policy(model, pol, model.reward).Q)) < 1e-9
        for i in range(m):
            exact = evaluate_policy(model, pol, model.constraints[i]).Q
            assert np.max(np.abs(est.Q_d[i] - exact)) < 1e-9


def test_tpe_rejects_bad_dual():
    H, S, A = 2, 2, 2
    z = np.zeros((H, S, A))
    opt = _optimistic(z, z[None], z, np.full((H, S, A, S), 0.5))
    with pytest.raises(ContractError):
        truncated_policy_evaluation(opt, uniform_policy(S, A, H), [-0.1], 0.0, 0)
    with pytest.raises(ContractError):
        truncated_policy_evaluation(opt, uniform_policy(S, A, H), [5.0], 0.0, 0, lam_max=4.0)
    with pytest.raises(ContractError):
        truncated_policy_evaluation(opt, uniform_policy(S, A, H), [0.0], -1.0, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(0, 1))
def test_tpe_caps_and_composite(seed, episodes, tau):
    rng = np.random.default_rng(seed)
    S, A, H, m = 4, 3, 4, 2
    model = random_model(rng, S, A, H, m=m)
    spec = ThresholdSpec.fixed([0.5, 1.0])
    pol = random_policy(rng, S, A, H)
    emp = EmpiricalModel.empty(S, A, H, m)
    gen = rng_stream(seed, "tpe")
    for _ in range(episodes):
        emp.update(rollout(model, spec, pol, gen))
    opt = build_optimistic_model(emp, pol, BonusConfig(0.1, 1000, 0.3))
    lam = rng.random(m) * 3
    est = truncated_policy_evaluation(opt, pol, lam, tau, model.initial_state, lam_max=3.0)
    remaining = (H - np.arange(H))[:, None, None]
    assert np.all(est.Q_r >= 0) and np.all(est.Q_r <= remaining)
    assert np.all(est.Q_d >= 0) and np.all(est.Q_d <= remaining)
    assert np.all(est.Q_psi >= 0)
    assert np.all(est.Q_psi <= opt.psi_raw + remaining * math.log(A) + 1e-12)
    assert abs(est.root_y - (est.root_r + lam @ est.root_d + tau * est.root_psi)) < 1e-9
    v_y = np.einsum("sa,sa->s", pol[0], est.Q_y[0])[model.initial_state]
    assert abs(v_y - est.root_y) < 1e-9


def test_threshold_hoeffding_coverage():
    """Per-step Hoeffding radius covers the threshold estimate in most trials."""
    t, H, delta, trials = 500, 5, 0.1, 2000
    alpha = 2.0
    spec = ThresholdSpec.gaussian([alpha])
    radius = math.sqrt(H * math.log(2 / delta) / (2 * t))
    from flexdome.env import sample_thresholds
    covered = 0
    for k in range(trials):
        draws = sample_thresholds(spec, rng_stream(k, "hoeffding"), H, episodes=t)
        emp = EmpiricalModel.empty(1, 1, H, 1)
        emp.threshold_sum += draws.sum(axis=(0, 2))
        emp.threshold_count += t * H
        covered += abs(emp.mean_threshold()[0] - alpha) <= radius
    need = (1 - delta) * trials - 3 * math.sqrt(delta * (1 - delta) * trials)
    assert covered >= need
