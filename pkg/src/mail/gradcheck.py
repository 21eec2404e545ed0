"""Central finite-difference checks for every hand-written derivative."""
from dataclasses import dataclass

import numpy as np

from .discriminator import Discriminator
from .forward_model import ForwardModel
from .nn import Mlp
from .numerics import Rng
from .policy import GaussianPolicy
from .trainer import bptt_gradient, model_rollout, surrogate_objective

H = 1e-6
KINK_MARGIN = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return bool(self.max_rel_err <= self.tol)


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def fd_gradient(fn, x, h=H):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = fn(x)
        x[i] = old - h
        fm = fn(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def fd_jacobian(fn, x, h=H):
    x = np.array(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def min_preactivation(net, x):
    _, cache = net.forward(np.atleast_2d(x))
    return min(float(np.min(np.abs(z))) for z in cache.pre[:-1]) if len(cache.pre) > 1 else np.inf


def randomize(net, rng, scale=1.0):
    """Jitter every parameter so biases are non-zero too."""
    theta = net.get_params()
    net.set_params(theta + scale * 0.1 * rng.normal(theta.shape))
    return net


def random_models(rng, state_dim=4, action_dim=2, hidden=(16, 16)):
    policy = GaussianPolicy.build(state_dim, action_dim, hidden, rng)
    randomize(policy.mu_net, rng)
    policy.log_sigma = rng.normal(action_dim, 0.3) + np.log(0.5)
    discr = Discriminator.build(state_dim, action_dim, hidden, rng)
    randomize(discr.net, rng)
    fwd = ForwardModel(randomize(Mlp([state_dim + action_dim, *hidden, state_dim], rng), rng), state_dim)
    fwd.mean = rng.normal(state_dim + action_dim, 0.1)
    fwd.std = np.exp(rng.normal(state_dim + action_dim, 0.2))
    return policy, discr, fwd


def check_mlp(rng, sizes=(5, 16, 16, 3)):
    net = randomize(Mlp(sizes, rng), rng)
    x = rng.normal(sizes[0])
    while min_preactivation(net, x) < KINK_MARGIN:
        x = rng.normal(sizes[0])
    u = rng.normal(sizes[-1])
    _, cache = net.forward(x)
    res = net.backward(cache, u)
    theta = net.get_params()

    def f_theta(th):
        other = net.copy()
        other.set_params(th)
        return float(u @ other(x))

    e_p = rel_err(res.param_grad, fd_gradient(f_theta, theta))
    e_x = rel_err(res.input_grad, fd_gradient(lambda z: float(u @ net(z)), x))
    e_j = rel_err(net.jacobian_wrt_input(x), fd_jacobian(net, x))
    return e_p, e_x, e_j


def check_policy(rng):
    policy, _, _ = random_models(rng)
    s = rng.normal(policy.state_dim)
    while min_preactivation(policy.mu_net, s) < KINK_MARGIN:
        s = rng.normal(policy.state_dim)
    smp = policy.sample(s, rng)
    theta = policy.get_params()

    def act_theta(th):
        p = policy.copy()
        p.set_params(th)
        return p.act(s, smp.noise)

    e_t = rel_err(policy.jac_theta(smp), fd_jacobian(act_theta, theta))
    e_s = rel_err(policy.jac_state(smp), fd_jacobian(lambda z: policy.act(z, smp.noise), s))
    a = smp.action + rng.normal(policy.action_dim, 0.3)

    def lp_theta(th):
        p = policy.copy()
        p.set_params(th)
        return float(p.log_prob(s, a))

    e_l = rel_err(policy.log_prob_grad(s, a), fd_gradient(lp_theta, theta))
    return e_t, e_s, e_l


def check_discriminator(rng):
    _, discr, _ = random_models(rng)
    n_in = discr.net.n_in
    x = rng.normal(n_in)
    while min_preactivation(discr.net, x) < KINK_MARGIN:
        x = rng.normal(n_in)
    s, a = x[:4], x[4:]
    _, d_s, d_a = discr.grads(s, a)
    e_s = rel_err(d_s, fd_gradient(lambda z: float(discr.prob(z, a)), s))
    e_a = rel_err(d_a, fd_gradient(lambda z: float(discr.prob(s, z)), a))
    return max(e_s, e_a)


def check_forward_model(rng):
    _, _, fwd = random_models(rng)
    s, a = rng.normal(4), rng.normal(2)
    while min_preactivation(fwd.net, fwd._normalize(s, a)) < KINK_MARGIN:
        s, a = rng.normal(4), rng.normal(2)
    f_s, f_a = fwd.jacobians(s, a)
    e_s = rel_err(f_s, fd_jacobian(lambda z: fwd.predict(z, a), s))
    e_a = rel_err(f_a, fd_jacobian(lambda z: fwd.predict(s, z), a))
    return max(e_s, e_a)


def _trajectory_margin(policy, discr, fwd, traj):
    m = min_preactivation(policy.mu_net, traj.states)
    m = min(m, min_preactivation(discr.net, np.concatenate([traj.states, traj.actions], axis=1)))
    return min(m, min_preactivation(fwd.net, fwd._normalize(traj.states, traj.actions)))


def check_bptt(seed, T, gamma, hidden=(16, 16)):
    """BPTT gradient vs central differences of the frozen-noise surrogate."""
    rng = Rng(seed)
    policy, discr, fwd = random_models(rng, hidden=hidden)
    while True:
        s0 = rng.normal(4)
        noise = rng.normal((T, 2))
        traj = model_rollout(policy, fwd, s0, noise)
        if _trajectory_margin(policy, discr, fwd, traj) >= KINK_MARGIN:
            break
    g, J = bptt_gradient(traj, policy, discr, fwd, gamma)
    theta = policy.get_params()
    fd = fd_gradient(lambda th: surrogate_objective(th, policy, discr, fwd, s0, noise, gamma), theta)
    return rel_err(g, fd)


def run_suite(seed=0, n_seeds=20, bptt_tol=1e-4, unit_tol=1e-5,
              horizons=(1, 3, 10), gammas=(0.0, 0.9, 1 - 1e-9)):
    rng = Rng(seed)
    worst = {k: 0.0 for k in ("mlp_param_grad", "mlp_input_grad", "mlp_input_jacobian",
                              "policy_jac_theta", "policy_jac_state", "policy_log_prob_grad",
                              "discriminator_grads", "forward_model_jacobians")}
    for _ in range(n_seeds):
        e = check_mlp(rng)
        worst["mlp_param_grad"] = max(worst["mlp_param_grad"], e[0])
        worst["mlp_input_grad"] = max(worst["mlp_input_grad"], e[1])
        worst["mlp_input_jacobian"] = max(worst["mlp_input_jacobian"], e[2])
        e = check_policy(rng)
        worst["policy_jac_theta"] = max(worst["policy_jac_theta"], e[0])
        worst["policy_jac_state"] = max(worst["policy_jac_state"], e[1])
        worst["policy_log_prob_grad"] = max(worst["policy_log_prob_grad"], e[2])
        worst["discriminator_grads"] = max(worst["discriminator_grads"], check_discriminator(rng))
        worst["forward_model_jacobians"] = max(worst["forward_model_jacobians"], check_forward_model(rng))
    results = [CheckResult(k, v, unit_tol) for k, v in worst.items()]
    for T in horizons:
        for gamma in gammas:
            err = max(check_bptt(seed * 1000 + k, T, gamma) for k in range(n_seeds))
            results.append(CheckResult(f"bptt_T{T}_gamma{gamma:.10g}", err, bptt_tol))
    return results
