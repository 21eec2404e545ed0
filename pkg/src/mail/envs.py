"""Small environments with exact answers.

``LinearEnv`` is a 2-D double integrator with an LQR expert; ``TabularMdp``
is a slippery grid world whose discounted occupancies, and hence the
Bayes-optimal discriminator, can be computed exactly.
"""
from dataclasses import dataclass, field

import numpy as np

from .replay import ExpertDataset


class ConvergenceError(RuntimeError):
    pass


def double_integrator(dt=0.1):
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    B = np.zeros((4, 2))
    B[0, 0] = B[1, 1] = 0.5 * dt * dt
    B[2, 0] = B[3, 1] = dt
    return A, B


@dataclass
class LinearEnv:
    """s' = A s + B a (+ optional Gaussian process noise).

    The reward -(s'^T Q s' + a^T R a) is for evaluation only; training code
    never sees it.
    """
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    init_center: np.ndarray
    init_half_width: np.ndarray
    horizon: int = 100
    process_noise_std: float = 0.0

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def action_dim(self):
        return self.B.shape[1]

    def reset(self, rng, n=None):
        shape = (self.state_dim,) if n is None else (n, self.state_dim)
        u = rng.uniform(-1.0, 1.0, shape)
        return self.init_center + u * self.init_half_width

    def step(self, s, a, rng=None):
        """Works on single states or stacked batches."""
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        s_next = s @ self.A.T + a @ self.B.T
        if self.process_noise_std > 0:
            if rng is None:
                raise ValueError("process noise requires an rng")
            s_next = s_next + rng.normal(s_next.shape, self.process_noise_std)
        reward = -(np.einsum("...i,ij,...j->...", s_next, self.Q, s_next)
                   + np.einsum("...i,ij,...j->...", a, self.R, a))
        done = np.zeros(np.shape(reward), dtype=bool)
        return s_next, reward, done


def linear2d(horizon=100, dt=0.1, process_noise_std=0.0):
    A, B = double_integrator(dt)
    return LinearEnv(
        A=A, B=B,
        Q=np.diag([1.0, 1.0, 0.1, 0.1]),
        R=0.1 * np.eye(2),
        init_center=np.zeros(4),
        init_half_width=np.array([1.0, 1.0, 0.5, 0.5]),
        horizon=horizon,
        process_noise_std=process_noise_std,
    )


def lqr_expert(env, tol=1e-10, max_iter=10_000):
    """Infinite-horizon discrete LQR gain by iterating the Riccati map."""
    A, B, Q, R = env.A, env.B, env.Q, env.R
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_new = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            raise ConvergenceError("Riccati iteration diverged")
        if np.max(np.abs(P_new - P)) <= tol * max(1.0, np.max(np.abs(P))):
            P = P_new
            BtP = B.T @ P
            return np.linalg.solve(R + BtP @ B, BtP @ A)
        P = P_new
    raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} iterations")


class LinearController:
    """a = -K s, optionally with Gaussian exploration noise."""

    def __init__(self, K):
        self.K = np.asarray(K, dtype=np.float64)

    def mean(self, s):
        return -np.asarray(s) @ self.K.T


class RandomController:
    def __init__(self, action_dim, std=1.0):
        self.action_dim = action_dim
        self.std = std


def rollout_returns(env, controller, episodes, rng):
    """Undiscounted true returns of a controller over ``episodes`` runs.

    ``controller`` is anything with ``mean(states)`` (evaluated
    deterministically) or a ``RandomController``.
    """
    s = env.reset(rng, episodes)
    total = np.zeros(episodes)
    for _ in range(env.horizon):
        if isinstance(controller, RandomController):
            a = rng.normal((episodes, controller.action_dim), controller.std)
        else:
            a = controller.mean(s)
        s, r, _ = env.step(s, a, rng)
        total += r
    return total


def generate_expert_dataset(env, K, n_traj, rng, action_noise_std=0.05):
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    ctrl = LinearController(K)
    states, actions = [], []
    for _ in range(n_traj):
        s = env.reset(rng)
        ss, aa = [], []
        for _ in range(env.horizon):
            a = ctrl.mean(s)
            if action_noise_std > 0:
                a = a + rng.normal(env.action_dim, action_noise_std)
            ss.append(s)
            aa.append(a)
            s, _, _ = env.step(s, a, rng)
        states.append(np.array(ss))
        actions.append(np.array(aa))
    return ExpertDataset(states, actions)


# --- tabular -----------------------------------------------------------------

MOVES = [(-1, 0), (1, 0), (0, -1), (0, 1)]  # up, down, left, right


@dataclass
class TabularMdp:
    P: np.ndarray  # (N, M, N)
    rho0: np.ndarray  # (N,)
    gamma: float
    policy: np.ndarray = None  # learner table (N, M)
    expert: np.ndarray = None  # expert table (N, M)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12, rtol=0):
            raise ValueError("transition rows must sum to 1")
        if abs(self.rho0.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1")
        for tab in (self.policy, self.expert):
            if tab is not None and not np.allclose(tab.sum(axis=1), 1.0, atol=1e-12, rtol=0):
                raise ValueError("policy rows must sum to 1")

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]

    def features(self, s_idx, a_idx):
        """One-hot encodings used as discriminator inputs."""
        s = np.eye(self.n_states)[np.asarray(s_idx)]
        a = np.eye(self.n_actions)[np.asarray(a_idx)]
        return s, a


def grid_mdp(size=5, slip=0.1, gamma=0.9):
    n = size * size
    P = np.zeros((n, 4, n))
    for r in range(size):
        for c in range(size):
            s = r * size + c
            for a in range(4):
                for b, (dr, dc) in enumerate(MOVES):
                    p = (1.0 - slip) * (a == b) + slip / 4
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < size and 0 <= cc < size):
                        rr, cc = r, c
                    P[s, a, rr * size + cc] += p
    rho0 = np.full(n, 1.0 / n)
    uniform = np.full((n, 4), 0.25)
    # expert leans toward the bottom-right corner
    expert = np.full((n, 4), 0.1)
    expert[:, 1] = expert[:, 3] = 0.4
    return TabularMdp(P, rho0, gamma, policy=uniform, expert=expert, meta={"size": size, "slip": slip})


def occupancy(mdp, table, tail=1e-10):
    """d(s) = (1 - gamma) sum_t gamma^t p(s_t), truncated once gamma^t <= tail."""
    P_pi = np.einsum("sa,sap->sp", table, mdp.P)
    p = mdp.rho0.copy()
    d = np.zeros_like(p)
    w = 1.0
    while True:
        d += w * p
        w *= mdp.gamma
        if w <= tail:
            break
        p = p @ P_pi
    return (1.0 - mdp.gamma) * d


def optimal_discriminator(mdp, policy=None, expert=None):
    """Bayes-optimal D*(s,a) = 1 / (1 + phi psi) with NaN where undefined.

    Returns (ratio_form, joint_form); the second is computed from the joint
    occupancies p(s,a|pi) / (p(s,a|pi) + p(s,a|pi_E)) as a cross-check.
    """
    pi = mdp.policy if policy is None else policy
    pe = mdp.expert if expert is None else expert
    d_pi = occupancy(mdp, pi)
    d_e = occupancy(mdp, pe)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = pe / pi
        psi = (d_e / d_pi)[:, None]
        ratio = 1.0 / (1.0 + phi * psi)
        undefined = (pi <= 0) | (d_pi[:, None] <= 0)
        ratio = np.where(undefined, np.nan, ratio)
        j_pi = d_pi[:, None] * pi
        j_e = d_e[:, None] * pe
        joint = j_pi / (j_pi + j_e)
        joint = np.where(undefined, np.nan, joint)
    return ratio, joint


def sample_occupancy_pairs(mdp, table, n, rng):
    """Draw n (s, a) index pairs from d(s) * table(a|s)."""
    joint = (occupancy(mdp, table)[:, None] * table).ravel()
    joint = joint / joint.sum()
    flat = rng.choice(joint.size, n, p=joint)
    return flat // mdp.n_actions, flat % mdp.n_actions


def make_env(name, **kw):
    if name == "linear2d":
        return linear2d(**kw)
    if name == "grid5x5":
        return grid_mdp(5, **kw)
    raise ValueError(f"unknown environment {name!r} (choose linear2d or grid5x5)")
