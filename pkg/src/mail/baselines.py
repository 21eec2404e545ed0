"""Behavioral cloning and the model-free (likelihood-ratio) adversarial baseline."""
import time
from dataclasses import dataclass

import numpy as np

from .discriminator import Discriminator
from .nn import AdamState
from .policy import GaussianPolicy
from .replay import ReplayBuffer, sample_discriminator_batch
from .trainer import TrainResult, clip_by_norm, collect_trajectory, evaluate, _mean_or_nan


@dataclass
class BcConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("BC config values must be positive")


def train_bc(policy, expert, config, rng):
    """Maximum likelihood on expert (s, a) pairs; never touches an environment."""
    s_all, a_all = expert.pairs()
    n = len(s_all)
    adam = AdamState(policy.n_params, lr=config.lr)
    history = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        losses = []
        for k in range(0, n, config.batch_size):
            idx = perm[k:k + config.batch_size]
            s, a = s_all[idx], a_all[idx]
            losses.append(-float(np.mean(policy.log_prob(s, a))))
            grad = -policy.log_prob_grad(s, a) / len(idx)
            policy.set_params(adam.update(policy.get_params(), grad))
        history.append(float(np.mean(losses)))
    return history


@dataclass
class MfConfig:
    gamma: float = 0.9
    horizon: int = 100
    budget_traj: int = 5000
    traj_per_update: int = 1
    baseline: bool = True
    policy_hidden: tuple = (32, 32)
    disc_hidden: tuple = (64, 64)
    policy_lr: float = 1e-3
    disc_lr: float = 3e-4
    disc_lr_decay: float = 0.999
    disc_min_lr: float = 0.0
    disc_steps: int = 1
    policy_steps: int = 1
    batch_size: int = 128
    clip_norm: float = 10.0
    expert_noise_std: float = 0.01
    buffer_capacity: int = 50_000
    init_std: float = 0.5
    eval_every: int = 10
    eval_episodes: int = 10

    def __post_init__(self):
        if self.traj_per_update < 1:
            raise ValueError("traj_per_update must be >= 1")


def reward_to_go(values, gamma):
    out = np.empty_like(values)
    acc = 0.0
    for t in range(len(values) - 1, -1, -1):
        acc = values[t] + gamma * acc
        out[t] = acc
    return out


def mf_policy_gradient(trajectories, policy, discr, gamma, baseline=True):
    """Score-function estimate of the gradient of E[sum_t gamma^t log D].

    Q(s_t, a_t) is the single-rollout discounted tail of log D; with
    ``baseline`` the batch mean of Q is subtracted. Averaged over
    trajectories.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    S = np.concatenate([tr.states for tr in trajectories])
    A = np.concatenate([tr.actions for tr in trajectories])
    logd = np.log(np.clip(discr.prob(S, A), 1e-12, None))
    qs, k = [], 0
    for tr in trajectories:
        n = len(tr)
        q = reward_to_go(logd[k:k + n], gamma)
        qs.append(q * gamma ** np.arange(n))
        k += n
    Q = np.concatenate(qs)
    if baseline:
        Q = Q - Q.mean()
    return policy.log_prob_grad(S, A, weights=Q) / len(trajectories)


def pathwise_samples(policy, s, g_grad, xi):
    """Per-sample pathwise gradients dg(a)/dtheta for one state, a = mu + xi sigma."""
    n = len(xi)
    S = np.repeat(np.atleast_2d(s), n, axis=0)
    A = policy.act(S, xi)
    up = g_grad(A)
    _, cache = policy.mu_net.forward(S)
    gm = policy.mu_net.backward(cache, up, per_sample=True).param_grad
    return np.concatenate([gm, up * xi * policy.sigma], axis=1)


def reinforce_samples(policy, s, g_value, xi):
    """Per-sample score-function gradients g(a) dlog pi(a|s)/dtheta."""
    n = len(xi)
    S = np.repeat(np.atleast_2d(s), n, axis=0)
    A = policy.act(S, xi)
    return policy.log_prob_grad(S, A, weights=g_value(A), per_sample=True)


def train_mf(config, env, expert, rng, on_row=None, wall_clock=False):
    """GAIL-style loop with the likelihood-ratio policy step and no forward model."""
    S, A = env.state_dim, env.action_dim
    policy = GaussianPolicy.build(S, A, config.policy_hidden, rng, init_std=config.init_std)
    discr = Discriminator.build(S, A, config.disc_hidden, rng, lr=config.disc_lr,
                                lr_decay=config.disc_lr_decay, min_lr=config.disc_min_lr)
    adam = AdamState(policy.n_params, lr=config.policy_lr)
    buffer = ReplayBuffer(S, A, config.buffer_capacity)
    eval_rng = rng.spawn()
    rows, transitions, it, used = [], 0, 0, 0
    last_eval = (float("nan"), float("nan"))
    es, ea = expert.pairs()
    while used < config.budget_traj:
        t0 = time.perf_counter()
        trajs = []
        for _ in range(config.traj_per_update):
            trajs.append(collect_trajectory(policy, env, rng, buffer, config.horizon))
        used += len(trajs)
        transitions += sum(len(tr) for tr in trajs)
        d_losses = []
        for _ in range(config.disc_steps):
            s, a, y = sample_discriminator_batch(buffer, expert, config.batch_size, rng,
                                                 config.expert_noise_std)
            d_losses.append(discr.train_batch(s, a, y))
        for _ in range(config.policy_steps):
            # log D is maximized by the expert's labels being 0, so descend it
            grad = mf_policy_gradient(trajs, policy, discr, config.gamma, config.baseline)
            grad = clip_by_norm(grad, config.clip_norm)
            policy.set_params(adam.update(policy.get_params(), grad))
        it += 1
        if it % config.eval_every == 0 or used >= config.budget_traj:
            last_eval = evaluate(policy, env, config.eval_episodes, eval_rng)
        S_all = np.concatenate([tr.states for tr in trajs])
        A_all = np.concatenate([tr.actions for tr in trajs])
        row = {
            "iteration": it,
            "env_transitions_total": transitions,
            "mean_true_return": last_eval[0],
            "std_true_return": last_eval[1],
            "disc_loss": _mean_or_nan(d_losses),
            "fwd_loss": None,
            "mean_D_policy": float(np.mean(discr.prob(S_all, A_all))),
            "mean_D_expert": float(np.mean(discr.prob(es, ea))),
            "wall_ms": (time.perf_counter() - t0) * 1e3 if wall_clock else None,
        }
        rows.append(row)
        if on_row:
            on_row(row)
    return TrainResult(policy, discr, None, rows)
