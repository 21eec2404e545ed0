import numpy as np
import pytest

from mail.discriminator import Discriminator, fit_tabular, sigmoid
from mail.envs import grid_mdp, occupancy, optimal_discriminator
from mail.gradcheck import fd_gradient, min_preactivation, randomize
from mail.nn import Mlp
from mail.numerics import Rng

from conftest import rel_err

LOG2 = np.log(2.0)


def test_zero_network_is_half_with_zero_gradients():
    d = Discriminator(Mlp([6, 8, 8, 1]))
    s, a = np.ones(4), np.ones(2)
    assert d.prob(s, a) == 0.5
    p, d_s, d_a = d.grads(s, a)
    assert p == 0.5
    assert not d_s.any() and not d_a.any()


def test_linear_logit_closed_form():
    net = Mlp([3, 1], Rng(0))
    net.b[0] = np.array([0.2])
    d = Discriminator(net)
    s, a = np.array([0.5, -1.0]), np.array([2.0])
    w = net.W[0][0]
    p = sigmoid(w @ np.concatenate([s, a]) + 0.2)
    _, d_s, d_a = d.grads(s, a)
    np.testing.assert_allclose(d_s, p * (1 - p) * w[:2], rtol=1e-14)
    np.testing.assert_allclose(d_a, p * (1 - p) * w[2:], rtol=1e-14)


def test_prob_monotone_in_logit():
    net = Mlp([2, 1], Rng(0))
    d = Discriminator(net)
    w = net.W[0][0]
    ts = np.linspace(-5, 5, 50)
    ps = [float(d.prob(np.array([t * w[0]]), np.array([t * w[1]]))) for t in ts]
    assert np.all(np.diff(ps) > 0)


def test_prob_strictly_inside_unit_interval():
    d = Discriminator(randomize(Mlp([6, 16, 1], Rng(1)), Rng(2)))
    p = d.prob(Rng(3).normal((200, 4), 5.0), Rng(4).normal((200, 2), 5.0))
    assert np.all((p > 0) & (p < 1))


def test_grads_match_finite_differences():
    for seed in range(20):
        r = Rng(seed)
        d = Discriminator(randomize(Mlp([6, 16, 16, 1], r), r))
        x = r.normal(6)
        while min_preactivation(d.net, x) < 1e-4:
            x = r.normal(6)
        s, a = x[:4], x[4:]
        _, d_s, d_a = d.grads(s, a)
        assert rel_err(d_s, fd_gradient(lambda z: float(d.prob(z, a)), s)) <= 1e-5
        assert rel_err(d_a, fd_gradient(lambda z: float(d.prob(s, z)), a)) <= 1e-5


def test_batched_grads_agree_with_single():
    r = Rng(5)
    d = Discriminator(randomize(Mlp([6, 16, 16, 1], r), r))
    S, A = r.normal((4, 4)), r.normal((4, 2))
    p, ds, da = d.grads(S, A)
    for i in range(4):
        pi, dsi, dai = d.grads(S[i], A[i])
        np.testing.assert_allclose([p[i]], [pi], atol=1e-15)
        np.testing.assert_allclose(ds[i], dsi, atol=1e-15)
        np.testing.assert_allclose(da[i], dai, atol=1e-15)


def test_untrained_balanced_loss_is_log2():
    d = Discriminator(Mlp([6, 8, 1]))
    r = Rng(0)
    loss = d.train_batch(r.normal((10, 4)), r.normal((10, 2)), np.array([0, 1] * 5))
    assert np.isclose(loss, LOG2)


def test_learning_rate_decays_per_update():
    d = Discriminator(Mlp([3, 4, 1], Rng(0)), lr=3e-4, lr_decay=0.999)
    r = Rng(1)
    for _ in range(3):
        d.train_batch(r.normal((4, 2)), r.normal((4, 1)), np.array([0, 1, 0, 1]))
    assert np.isclose(d.adam.lr, 3e-4 * 0.999**2)


def test_indistinguishable_classes_stay_near_log2():
    r = Rng(1)
    d = Discriminator.build(2, 1, (16, 16), r)
    for _ in range(2000):
        d.train_batch(r.normal((128, 2)), r.normal((128, 1)), np.tile([0.0, 1.0], 64))
    S, A = r.normal((20000, 2)), r.normal((20000, 1))
    y = np.tile([0.0, 1.0], 10000)
    assert d.loss(S, A, y) >= 0.99 * LOG2


def test_separable_data_is_learned():
    r = Rng(2)
    d = Discriminator.build(2, 1, (16, 16), r, lr=3e-3)
    loss = None
    for _ in range(2000):
        y = (r.uniform(size=128) < 0.5).astype(float)
        s = r.normal((128, 2), 0.3) + np.where(y[:, None] > 0, 1.5, -1.5)
        a = r.normal((128, 1), 0.3)
        loss = d.train_batch(s, a, y)
    assert loss < 0.1


def test_non_finite_loss_raises():
    net = Mlp([2, 1])
    net.W[0][:] = np.inf
    d = Discriminator(net)
    with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
        d.train_batch(np.ones((2, 1)), np.ones((2, 1)), np.array([0.0, 1.0]))


def test_empty_batch_raises():
    d = Discriminator(Mlp([2, 1]))
    with pytest.raises(ValueError):
        d.train_batch(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0))


def _support(mdp):
    d_pi, d_e = occupancy(mdp, mdp.policy), occupancy(mdp, mdp.expert)
    visit = 0.5 * (d_pi[:, None] * mdp.policy + d_e[:, None] * mdp.expert)
    return visit >= 1e-3


@pytest.fixture(scope="module")
def grid_fit():
    mdp = grid_mdp()
    _, table = fit_tabular(mdp, 10**6, Rng(0))
    return mdp, table


def test_recovers_optimal_discriminator(grid_fit):
    mdp, table = grid_fit
    dstar, _ = optimal_discriminator(mdp)
    mask = _support(mdp)
    assert np.max(np.abs(table - dstar)[mask]) <= 0.05


def test_label_swap_gives_complement(grid_fit):
    mdp, table = grid_fit
    _, swapped = fit_tabular(mdp, 10**6, Rng(1), swap_labels=True)
    mask = _support(mdp)
    assert np.max(np.abs(swapped - (1 - table))[mask]) <= 0.05
