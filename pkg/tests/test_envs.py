import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from mail.envs import (ConvergenceError, LinearController, LinearEnv, RandomController, TabularMdp,
                       generate_expert_dataset, grid_mdp, linear2d, lqr_expert, make_env,
                       occupancy, optimal_discriminator, rollout_returns, sample_occupancy_pairs)
from mail.numerics import Rng


def simple_env(R=1.0):
    I = np.eye(2)
    return LinearEnv(I, I, I, R * I, np.zeros(2), np.ones(2))


def policy_iteration_gain(A, B, Q, R, iters=200):
    """Independent route: evaluate a stabilizing gain by a Lyapunov solve, improve, repeat."""
    n = A.shape[0]
    K = np.linalg.lstsq(B, A, rcond=None)[0] * 0.5  # stabilizing start for these systems
    for _ in range(iters):
        Acl = A - B @ K
        M = Q + K.T @ R @ K
        # P = M + Acl^T P Acl, solved as a linear system
        P = np.linalg.solve(np.eye(n * n) - np.kron(Acl.T, Acl.T), M.ravel()).reshape(n, n)
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return K


def test_lqr_identity_system_matches_policy_iteration():
    env = simple_env()
    K = lqr_expert(env)
    np.testing.assert_allclose(K, policy_iteration_gain(env.A, env.B, env.Q, env.R), atol=1e-6)
    # scalar closed form: P^2 - P - 1 = 0, K = P / (1 + P)
    p = (1 + np.sqrt(5)) / 2
    np.testing.assert_allclose(K, np.eye(2) * p / (1 + p), atol=1e-9)


def test_lqr_double_integrator_matches_scipy():
    env = linear2d()
    K = lqr_expert(env)
    P = solve_discrete_are(env.A, env.B, env.Q, env.R)
    K_ref = np.linalg.solve(env.R + env.B.T @ P @ env.B, env.B.T @ P @ env.A)
    np.testing.assert_allclose(K, K_ref, atol=1e-6)


def test_expensive_control_gain_vanishes():
    assert np.linalg.norm(lqr_expert(simple_env(R=1e6)), 2) <= 1e-3


def test_closed_loop_is_stable():
    env = linear2d()
    K = lqr_expert(env)
    assert np.max(np.abs(np.linalg.eigvals(env.A - env.B @ K))) < 1


def test_riccati_nonconvergence_raises():
    env = simple_env()
    with pytest.raises(ConvergenceError):
        lqr_expert(env, max_iter=3)


def test_linear_step_exact_and_reward():
    env = linear2d()
    r = Rng(0)
    s, a = r.normal(4), r.normal(2)
    s2, rew, done = env.step(s, a)
    np.testing.assert_array_equal(s2, env.A @ s + env.B @ a)
    assert np.isclose(rew, -(s2 @ env.Q @ s2 + a @ env.R @ a))
    assert not done


def test_process_noise_reproducible():
    env = linear2d(process_noise_std=0.1)
    s, a = np.ones(4), np.ones(2)
    np.testing.assert_array_equal(env.step(s, a, Rng(3))[0], env.step(s, a, Rng(3))[0])


def test_double_integrator_structure():
    env = linear2d()
    assert env.state_dim == 4 and env.action_dim == 2 and env.horizon == 100
    B = env.B
    ctrb = np.hstack([B, env.A @ B, env.A @ env.A @ B, env.A @ env.A @ env.A @ B])
    assert np.linalg.matrix_rank(ctrb) == 4
    assert np.all(np.linalg.eigvalsh(env.Q) >= 0) and np.all(np.linalg.eigvalsh(env.R) > 0)


def test_expert_dataset_shape():
    env = linear2d()
    ds = generate_expert_dataset(env, lqr_expert(env), 4, Rng(0))
    assert ds.n_traj == 4 and ds.lengths == [100] * 4


def test_noise_free_fixed_start_gives_identical_trajectories():
    env = linear2d()
    env.init_half_width = np.zeros(4)
    env.init_center = np.array([1.0, -0.5, 0.2, 0.0])
    ds = generate_expert_dataset(env, lqr_expert(env), 3, Rng(0), action_noise_std=0.0)
    for k in (1, 2):
        np.testing.assert_array_equal(ds.states[k], ds.states[0])
        np.testing.assert_array_equal(ds.actions[k], ds.actions[0])


def test_expert_beats_random_by_five_times():
    env = linear2d()
    K = lqr_expert(env)
    expert = rollout_returns(env, LinearController(K), 200, Rng(0)).mean()
    rand = rollout_returns(env, RandomController(2), 200, Rng(0)).mean()
    # returns are negative costs
    assert -rand >= 5 * -expert


def occupancy_linear_solve(mdp, table):
    P_pi = np.einsum("sa,sap->sp", table, mdp.P)
    n = mdp.n_states
    return (1 - mdp.gamma) * np.linalg.solve((np.eye(n) - mdp.gamma * P_pi).T, mdp.rho0)


def test_occupancy_matches_linear_solve():
    mdp = grid_mdp()
    for tab in (mdp.policy, mdp.expert):
        np.testing.assert_allclose(occupancy(mdp, tab), occupancy_linear_solve(mdp, tab), atol=1e-9)


def test_occupancy_normalized():
    mdp = grid_mdp()
    assert abs(occupancy(mdp, mdp.expert).sum() - 1) <= 1e-9


def test_occupancy_tiny_gamma_is_initial_distribution():
    mdp = grid_mdp(gamma=1e-12)
    np.testing.assert_allclose(occupancy(mdp, mdp.policy), mdp.rho0, atol=1e-10)


def test_occupancy_absorbing_state():
    n = 3
    P = np.zeros((n, 1, n))
    P[:, 0, 2] = 1.0
    mdp = TabularMdp(P, np.array([1.0, 0, 0]), 0.9, policy=np.ones((n, 1)), expert=np.ones((n, 1)))
    assert abs(occupancy(mdp, mdp.policy)[2] - 0.9) <= 1e-9


def test_tabular_validation():
    P = np.zeros((2, 1, 2))
    P[:, 0, 0] = 0.5
    with pytest.raises(ValueError):
        TabularMdp(P, np.array([0.5, 0.5]), 0.9)


def test_grid_rows_stochastic():
    mdp = grid_mdp()
    np.testing.assert_allclose(mdp.P.sum(axis=2), 1.0, atol=1e-12)
    assert mdp.n_states == 25 and mdp.n_actions == 4


def test_optimal_discriminator_equal_policies_is_half():
    mdp = grid_mdp()
    d, _ = optimal_discriminator(mdp, mdp.expert, mdp.expert)
    np.testing.assert_allclose(d, 0.5, atol=1e-12)


def test_optimal_discriminator_zero_expert_prob_is_one():
    mdp = grid_mdp()
    expert = mdp.expert.copy()
    expert[0] = [0.0, 0.5, 0.0, 0.5]
    d, _ = optimal_discriminator(mdp, mdp.policy, expert)
    assert d[0, 0] == 1.0 and d[0, 2] == 1.0


def test_two_derivations_agree():
    mdp = grid_mdp()
    ratio, joint = optimal_discriminator(mdp)
    assert np.nanmax(np.abs(ratio - joint)) <= 1e-10


def test_undefined_entries_marked():
    mdp = grid_mdp()
    pol = mdp.policy.copy()
    pol[3] = [1.0, 0.0, 0.0, 0.0]
    ratio, joint = optimal_discriminator(mdp, pol, mdp.expert)
    assert np.isnan(ratio[3, 1]) and np.isnan(joint[3, 1])
    assert not np.isnan(ratio[3, 0])


def test_occupancy_sampler_frequencies():
    mdp = grid_mdp()
    s, a = sample_occupancy_pairs(mdp, mdp.expert, 200_000, Rng(0))
    freq = np.bincount(s * 4 + a, minlength=100) / 200_000
    target = (occupancy(mdp, mdp.expert)[:, None] * mdp.expert).ravel()
    assert np.max(np.abs(freq - target)) < 5 * np.sqrt(target.max() / 200_000)


def test_make_env_names():
    assert isinstance(make_env("linear2d"), LinearEnv)
    assert isinstance(make_env("grid5x5"), TabularMdp)
    with pytest.raises(ValueError):
        make_env("hopper")
