import numpy as np

from mail.gradcheck import fd_gradient, fd_jacobian, min_preactivation, randomize
from mail.nn import Mlp
from mail.numerics import Rng
from mail.policy import GaussianPolicy, PolicySample

from conftest import rel_err


def make_policy(seed=0, hidden=(16, 16), sd=4, ad=2):
    r = Rng(seed)
    pol = GaussianPolicy.build(sd, ad, hidden, r)
    randomize(pol.mu_net, r)
    pol.log_sigma = np.log(np.array([0.4, 0.7])[:ad])
    return pol, r


def safe_state(pol, r):
    s = r.normal(pol.state_dim)
    while min_preactivation(pol.mu_net, s) < 1e-4:
        s = r.normal(pol.state_dim)
    return s


def test_initial_log_sigma():
    pol = GaussianPolicy.build(4, 2, (8,), Rng(0))
    np.testing.assert_allclose(pol.sigma, [0.5, 0.5])


def test_tiny_sigma_gives_mean_action():
    pol, r = make_policy()
    pol.log_sigma = np.log(np.full(2, 1e-12))
    s = r.normal(4)
    smp = pol.sample(s, r)
    np.testing.assert_allclose(smp.action, pol.mean(s), atol=1e-10, rtol=0)


def test_zero_noise_gives_mean_exactly():
    pol, r = make_policy()
    s = r.normal(4)
    np.testing.assert_array_equal(pol.act(s, np.zeros(2)), pol.mean(s))


def test_monte_carlo_moments():
    pol, r = make_policy()
    s = r.normal(4)
    n = 10**5
    A = np.array([pol.sample(s, r).action for _ in range(n)])
    se = pol.sigma / np.sqrt(n)
    assert np.all(np.abs(A.mean(axis=0) - pol.mean(s)) < 3 * se)
    assert np.all(np.abs(A.std(axis=0) / pol.sigma - 1.0) < 0.02)


def test_recorded_noise_reproduces_action_bit_exactly():
    pol, r = make_policy()
    s = r.normal(4)
    smp = pol.sample(s, r)
    assert np.array_equal(pol.act(smp.state, smp.noise), smp.action)


def test_jac_theta_sigma_columns():
    pol, r = make_policy()
    s = r.normal(4)
    J = pol.jac_theta(PolicySample(s, np.zeros(2), pol.mean(s)))
    np.testing.assert_array_equal(J[:, -2:], np.zeros((2, 2)))
    xi = np.array([0.3, -1.2])
    J = pol.jac_theta(PolicySample(s, xi, pol.act(s, xi)))
    np.testing.assert_allclose(J[:, -2:], np.diag(xi * pol.sigma))


def test_jac_theta_linear_block_pattern():
    pol = GaussianPolicy(Mlp([3, 2], Rng(0)))
    s = np.array([1.0, -2.0, 0.5])
    J = pol.jac_theta(PolicySample(s, np.zeros(2), pol.mean(s)))
    # layout: W row-major (2x3), then b (2), then log_sigma (2)
    np.testing.assert_array_equal(J[0, :6], np.concatenate([s, np.zeros(3)]))
    np.testing.assert_array_equal(J[1, :6], np.concatenate([np.zeros(3), s]))
    np.testing.assert_array_equal(J[:, 6:8], np.eye(2))


def test_jac_state_special_cases():
    zero = GaussianPolicy(Mlp([3, 4, 2]))
    s = np.ones(3)
    np.testing.assert_array_equal(zero.jac_state(PolicySample(s, np.zeros(2), zero.mean(s))), np.zeros((2, 3)))
    lin = GaussianPolicy(Mlp([3, 2], Rng(1)))
    np.testing.assert_array_equal(lin.jac_state(PolicySample(s, np.zeros(2), lin.mean(s))), lin.mu_net.W[0])


def test_jacobians_match_finite_differences():
    for seed in range(10):
        pol, r = make_policy(seed)
        s = safe_state(pol, r)
        smp = pol.sample(s, r)
        theta = pol.get_params()

        def act(th):
            p = pol.copy()
            p.set_params(th)
            return p.act(s, smp.noise)

        assert rel_err(pol.jac_theta(smp), fd_jacobian(act, theta)) <= 1e-5
        assert rel_err(pol.jac_state(smp), fd_jacobian(lambda z: pol.act(z, smp.noise), s)) <= 1e-5


def test_vjp_agrees_with_dense_jacobians():
    pol, r = make_policy(3)
    S, X, U = r.normal((5, 4)), r.normal((5, 2)), r.normal((5, 2))
    g_theta, g_s = pol.vjp(S, X, U)
    dense = sum(U[t] @ pol.jac_theta(PolicySample(S[t], X[t], pol.act(S[t], X[t]))) for t in range(5))
    np.testing.assert_allclose(g_theta, dense, atol=1e-12)
    for t in range(5):
        np.testing.assert_allclose(g_s[t], U[t] @ pol.jac_state(PolicySample(S[t], X[t], None)), atol=1e-12)


def test_log_prob_at_mode_and_entropy():
    pol = GaussianPolicy(Mlp([3, 2], Rng(0)), log_sigma=np.zeros(2))
    s = np.ones(3)
    assert np.isclose(pol.log_prob(s, pol.mean(s)), -np.log(2 * np.pi))
    one = GaussianPolicy(Mlp([3, 1], Rng(0)), log_sigma=np.zeros(1))
    assert abs(one.entropy() - 1.41894) < 1e-5


def test_log_prob_grad_matches_finite_differences():
    for seed in range(10):
        pol, r = make_policy(seed)
        s = safe_state(pol, r)
        a = pol.mean(s) + r.normal(2, 0.5)
        theta = pol.get_params()

        def lp(th):
            p = pol.copy()
            p.set_params(th)
            return float(p.log_prob(s, a))

        assert rel_err(pol.log_prob_grad(s, a), fd_gradient(lp, theta)) <= 1e-5


def test_entropy_grad():
    pol, _ = make_policy()
    g = pol.entropy_grad()
    np.testing.assert_array_equal(g[-2:], [1.0, 1.0])
    assert not g[:-2].any()


def test_checkpoint_roundtrip(tmp_path):
    pol, _ = make_policy()
    pol.save(tmp_path / "p.ckpt")
    back = GaussianPolicy.load(tmp_path / "p.ckpt")
    np.testing.assert_array_equal(back.get_params(), pol.get_params())
