"""Model-based adversarial imitation: rollouts, D/f fitting and the
backward-in-time policy gradient.

The policy minimizes J = sum_t gamma^t D(s_t, a_t) along its own
trajectories. With a_t = mu(s_t) + xi_t * sigma and s_{t+1} = f(s_t, a_t),
the recursion run from the last step down to t = 0 is

    j_theta <- D_a pi_theta + gamma (j'_s f_a pi_theta + j'_theta)
    j_s     <- D_s + D_a pi_s + gamma j'_s (f_s + f_a pi_s)

with j' = 0 past the end. Writing g_t = D_a + gamma j'_s f_a, the parameter
part unrolls to sum_t gamma^t g_t pi_theta(t), so it is computed with one
batched vector-Jacobian product after the (cheap) state recursion.
"""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .discriminator import Discriminator
from .envs import LinearController, rollout_returns
from .forward_model import ForwardModel
from .nn import AdamState
from .policy import GaussianPolicy
from .replay import ReplayBuffer, sample_discriminator_batch, sample_model_batch

log = logging.getLogger(__name__)


class NumericalFailure(FloatingPointError):
    pass


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    noise: np.ndarray
    next_states: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass
class MailConfig:
    gamma: float = 0.9
    horizon: int = 100
    budget_traj: int = 500
    policy_hidden: tuple = (32, 32)
    disc_hidden: tuple = (64, 64)  # ~2x the policy
    fwd_hidden: tuple = (64, 64)
    policy_lr: float = 3e-4  # 1e-3 lets early noisy model gradients destabilize the loop
    disc_lr: float = 3e-4
    disc_lr_decay: float = 0.999
    disc_min_lr: float = 0.0
    fwd_lr: float = 1e-3
    update_ratio: tuple = (3, 1, 1)  # policy : discriminator : forward model
    steps_per_unit: int = 1
    batch_size: int = 128
    entropy_weight: float = 0.0
    clip_norm: float = 10.0
    expert_noise_std: float = 0.01
    buffer_capacity: int = 50_000
    init_std: float = 0.5
    eval_every: int = 10
    eval_episodes: int = 10
    bc_warmstart: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.budget_traj < 1:
            raise ValueError("budget_traj must be >= 1")
        if len(self.update_ratio) != 3 or min(self.update_ratio) < 1:
            raise ValueError("update_ratio needs three entries, each >= 1")

    @property
    def policy_steps(self):
        return self.update_ratio[0] * self.steps_per_unit

    @property
    def disc_steps(self):
        return self.update_ratio[1] * self.steps_per_unit

    @property
    def fwd_steps(self):
        return self.update_ratio[2] * self.steps_per_unit


def collect_trajectory(policy, env, rng, buffer=None, horizon=None):
    """Roll the stochastic policy on the real environment, recording the noise."""
    horizon = env.horizon if horizon is None else horizon
    s = env.reset(rng)
    rec = {k: [] for k in ("s", "a", "xi", "s2", "done")}
    for t in range(horizon):
        smp = policy.sample(s, rng)
        s2, _, done = env.step(s, smp.action, rng)
        done = bool(done)
        if not np.all(np.isfinite(s2)):
            log.error("non-finite state at step %d; truncating episode", t)
            break
        if t == horizon - 1:
            done = True
        rec["s"].append(s)
        rec["a"].append(smp.action)
        rec["xi"].append(smp.noise)
        rec["s2"].append(s2)
        rec["done"].append(done)
        if buffer is not None:
            buffer.push(s, smp.action, s2, done)
        if done:
            break
        s = s2
    if not rec["s"]:
        raise NumericalFailure("episode produced no finite transition")
    return Trajectory(np.array(rec["s"]), np.array(rec["a"]), np.array(rec["xi"]),
                      np.array(rec["s2"]), np.array(rec["done"]))


def model_rollout(policy, fwd, s0, noise):
    """Trajectory whose dynamics are the learned model itself."""
    s = np.asarray(s0, dtype=np.float64)
    rec = {k: [] for k in ("s", "a", "s2")}
    for xi in noise:
        a = policy.act(s, xi)
        s2 = fwd.predict(s, a)
        rec["s"].append(s)
        rec["a"].append(a)
        rec["s2"].append(s2)
        s = s2
    T = len(noise)
    done = np.zeros(T, dtype=bool)
    done[-1] = True
    return Trajectory(np.array(rec["s"]), np.array(rec["a"]), np.asarray(noise, dtype=np.float64),
                      np.array(rec["s2"]), done)


def surrogate_objective(theta, policy, discr, fwd, s0, noise, gamma):
    """J-hat(theta): frozen noise replayed through the policy and learned model."""
    pol = policy.copy()
    pol.set_params(theta)
    s = np.asarray(s0, dtype=np.float64)
    total, w = 0.0, 1.0
    for xi in noise:
        a = pol.act(s, xi)
        total += w * float(discr.prob(s, a))
        s = fwd.predict(s, a)
        w *= gamma
    return total


def backward_recursion(D_s, D_a, F_s, F_a, Pi_s, gamma):
    """State-space sweep from the last step to t = 0.

    Returns (g, j_s0) where g[t] = D_a(t) + gamma j_s(t+1) f_a(t) is the
    upstream vector on the action at step t; the parameter gradient is
    sum_t gamma^t g[t] . d a_t / d theta.
    """
    T = len(D_s)
    g = np.zeros_like(D_a)
    j_next = np.zeros(D_s.shape[1])
    for t in range(T - 1, -1, -1):
        g[t] = D_a[t] + gamma * (j_next @ F_a[t])
        j_s = D_s[t] + gamma * (j_next @ F_s[t]) + g[t] @ Pi_s[t]
        if not (np.all(np.isfinite(j_s)) and np.all(np.isfinite(g[t]))):
            raise NumericalFailure(f"non-finite gradient accumulator at step {t}")
        j_next = j_s
    return g, j_next


def bptt_gradient(traj, policy, discr, fwd, gamma):
    """Gradient of J w.r.t. policy parameters at the recorded states and noise.

    Actions are recomputed from (s_t, xi_t) under the current parameters,
    which reproduces the recorded actions when the policy has not moved.
    Returns (j_theta at t=0, J value).
    """
    S, X = traj.states, traj.noise
    A = policy.act(S, X)
    D, D_s, D_a = discr.grads(S, A)
    with fwd.frozen():
        F_s, F_a = fwd.jacobians(S, A)
    Pi_s = policy.mu_net.jacobian_wrt_input(S)
    g, _ = backward_recursion(D_s, D_a, F_s, F_a, Pi_s, gamma)
    disc = gamma ** np.arange(len(S))
    j_theta, _ = policy.vjp(S, X, g * disc[:, None])
    if not np.all(np.isfinite(j_theta)):
        raise NumericalFailure("non-finite policy gradient")
    return j_theta, float(np.sum(disc * D))


def clip_by_norm(g, max_norm):
    n = np.linalg.norm(g)
    if max_norm and n > max_norm:
        return g * (max_norm / n)
    return g


def normalized_score(ret, expert_ret, ref_ret):
    """0 at the reference (do-nothing) return, 1 at the expert's."""
    return (ret - ref_ret) / (expert_ret - ref_ret)


@dataclass
class Reference:
    """Evaluation anchors for normalized scores on a linear environment."""
    expert_return: float
    passive_return: float

    @classmethod
    def compute(cls, env, K, episodes=100, seed=12345):
        from .numerics import Rng
        exp = rollout_returns(env, LinearController(K), episodes, Rng(seed)).mean()
        zero = rollout_returns(env, LinearController(np.zeros_like(K)), episodes, Rng(seed)).mean()
        return cls(float(exp), float(zero))

    def score(self, ret):
        return normalized_score(ret, self.expert_return, self.passive_return)


def evaluate(policy, env, episodes, rng):
    """Mean and std of undiscounted true return under the mean action."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rets = rollout_returns(env, policy, episodes, rng)
    std = float(rets.std(ddof=1)) if episodes > 1 else 0.0
    return float(rets.mean()), std


METRIC_FIELDS = ["iteration", "env_transitions_total", "mean_true_return", "std_true_return",
                 "disc_loss", "fwd_loss", "mean_D_policy", "mean_D_expert", "wall_ms"]


@dataclass
class TrainResult:
    policy: GaussianPolicy
    discr: Discriminator = None
    fwd: ForwardModel = None
    rows: list = field(default_factory=list)


def _mean_or_nan(xs):
    return float(np.mean(xs)) if xs else float("nan")


class MailTrainer:
    """Runs the imitation loop; ``step()`` performs one iteration."""

    def __init__(self, config, env, expert, rng, on_row=None, wall_clock=False):
        if expert.state_dim != env.state_dim or expert.action_dim != env.action_dim:
            raise ValueError("expert dataset dimensions do not match the environment")
        self.cfg = config
        self.env = env
        self.expert = expert
        self.rng = rng
        self.on_row = on_row
        self.wall_clock = wall_clock
        S, A = env.state_dim, env.action_dim
        self.policy = GaussianPolicy.build(S, A, config.policy_hidden, rng, init_std=config.init_std)
        self.discr = Discriminator.build(S, A, config.disc_hidden, rng, lr=config.disc_lr,
                                         lr_decay=config.disc_lr_decay, min_lr=config.disc_min_lr)
        self.fwd = ForwardModel.build(S, A, config.fwd_hidden, rng, lr=config.fwd_lr)
        self.policy_adam = AdamState(self.policy.n_params, lr=config.policy_lr)
        self.buffer = ReplayBuffer(S, A, config.buffer_capacity)
        self.eval_rng = rng.spawn()
        self.iteration = 0
        self.transitions = 0
        self.policy_updates = 0
        self.rows = []
        self.last_eval = (float("nan"), float("nan"))
        if config.bc_warmstart:
            from .baselines import BcConfig, train_bc
            train_bc(self.policy, expert, BcConfig(), rng)

    def policy_update(self, traj):
        cfg = self.cfg
        grad, J = bptt_gradient(traj, self.policy, self.discr, self.fwd, cfg.gamma)
        if cfg.entropy_weight:
            grad = grad - cfg.entropy_weight * self.policy.entropy_grad()
        grad = clip_by_norm(grad, cfg.clip_norm)
        self.policy.set_params(self.policy_adam.update(self.policy.get_params(), grad))
        self.policy_updates += 1
        return J

    def step(self):
        cfg = self.cfg
        t0 = time.perf_counter()
        traj = collect_trajectory(self.policy, self.env, self.rng, self.buffer, cfg.horizon)
        self.transitions += len(traj)
        f_losses, d_losses = [], []
        for _ in range(cfg.fwd_steps):
            s, a, s2 = sample_model_batch(self.buffer, cfg.batch_size, self.rng)
            f_losses.append(self.fwd.train_batch(s, a, s2))
        for _ in range(cfg.disc_steps):
            s, a, y = sample_discriminator_batch(self.buffer, self.expert, cfg.batch_size, self.rng,
                                                 cfg.expert_noise_std)
            d_losses.append(self.discr.train_batch(s, a, y))
        for _ in range(cfg.policy_steps):
            self.policy_update(traj)
        self.iteration += 1

        es, ea = self.expert.pairs()
        row = {
            "iteration": self.iteration,
            "env_transitions_total": self.transitions,
            "disc_loss": _mean_or_nan(d_losses),
            "fwd_loss": _mean_or_nan(f_losses),
            "mean_D_policy": float(np.mean(self.discr.prob(traj.states, traj.actions))),
            "mean_D_expert": float(np.mean(self.discr.prob(es, ea))),
        }
        if self.iteration % cfg.eval_every == 0 or self.iteration == cfg.budget_traj:
            self.last_eval = evaluate(self.policy, self.env, cfg.eval_episodes, self.eval_rng)
        row["mean_true_return"], row["std_true_return"] = self.last_eval
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3 if self.wall_clock else None
        self.rows.append(row)
        if self.on_row:
            self.on_row(row)
        return row

    def run(self):
        while self.iteration < self.cfg.budget_traj:
            self.step()
        return TrainResult(self.policy, self.discr, self.fwd, self.rows)


def train(config, env, expert, rng, **kw):
    return MailTrainer(config, env, expert, rng, **kw).run()


def config_dict(cfg):
    return asdict(cfg)
