"""Replay buffer for policy transitions and the expert demonstration set."""
import csv
from dataclasses import dataclass, field

import numpy as np


class ReplayBuffer:
    """Fixed-capacity FIFO ring of (s, a, s', done) transitions."""

    def __init__(self, state_dim, action_dim, capacity=50_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def push(self, s, a, s_next, done=False):
        s, a, s_next = (np.asarray(v, dtype=np.float64) for v in (s, a, s_next))
        if s.shape != (self.state_dim,) or s_next.shape != (self.state_dim,) or a.shape != (self.action_dim,):
            raise ValueError(
                f"transition shapes {s.shape}, {a.shape}, {s_next.shape} do not match "
                f"state_dim={self.state_dim}, action_dim={self.action_dim}")
        i = self.inserted % self.capacity
        self.s[i], self.a[i], self.s_next[i], self.done[i] = s, a, s_next, done
        self.inserted += 1

    def _order(self):
        n = len(self)
        if self.inserted <= self.capacity:
            return np.arange(n)
        start = self.inserted % self.capacity
        return (start + np.arange(n)) % self.capacity

    def contents(self):
        """All stored transitions, oldest first, as copies."""
        idx = self._order()
        return self.s[idx], self.a[idx], self.s_next[idx], self.done[idx]

    def sample(self, n, rng):
        if len(self) == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(len(self), size=n)
        # fancy indexing copies, so callers never alias the storage
        return self.s[idx], self.a[idx], self.s_next[idx]


def sample_model_batch(buffer, n, rng):
    return buffer.sample(n, rng)


@dataclass
class ExpertDataset:
    states: list = field(default_factory=list)  # per trajectory, (T, state_dim)
    actions: list = field(default_factory=list)  # per trajectory, (T, action_dim)

    def __post_init__(self):
        if not self.states:
            raise ValueError("expert dataset needs at least one trajectory")
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions disagree on trajectory count")
        sd, ad = self.states[0].shape[1], self.actions[0].shape[1]
        for s, a in zip(self.states, self.actions):
            if s.ndim != 2 or a.ndim != 2 or s.shape[1] != sd or a.shape[1] != ad or len(s) != len(a):
                raise ValueError("inconsistent trajectory dimensions in expert dataset")
        self._flat_s = np.concatenate(self.states)
        self._flat_a = np.concatenate(self.actions)

    @property
    def n_traj(self):
        return len(self.states)

    @property
    def state_dim(self):
        return self._flat_s.shape[1]

    @property
    def action_dim(self):
        return self._flat_a.shape[1]

    @property
    def lengths(self):
        return [len(s) for s in self.states]

    def pairs(self):
        return self._flat_s, self._flat_a

    def subset(self, n_traj):
        return ExpertDataset(self.states[:n_traj], self.actions[:n_traj])

    def to_csv(self, path):
        S, A = self.state_dim, self.action_dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# state_dim={S} action_dim={A}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["traj", "t"] + [f"s{i}" for i in range(S)] + [f"a{i}" for i in range(A)])
            for k, (s, a) in enumerate(zip(self.states, self.actions)):
                for t in range(len(s)):
                    w.writerow([k, t] + [f"{v:.17g}" for v in s[t]] + [f"{v:.17g}" for v in a[t]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        if header[:2] != ["traj", "t"]:
            raise ValueError(f"{path}: header must start with traj,t")
        s_cols = [i for i, h in enumerate(header) if h.startswith("s")]
        a_cols = [i for i, h in enumerate(header) if h.startswith("a")]
        trajs = {}
        for row in reader:
            if not row:
                continue
            k = int(row[0])
            vals = [float(v) for v in row]
            trajs.setdefault(k, []).append(vals)
        if not trajs:
            raise ValueError(f"{path}: no expert rows")
        states, actions = [], []
        for k in sorted(trajs):
            rows = np.array(sorted(trajs[k], key=lambda r: r[1]))
            states.append(rows[:, s_cols])
            actions.append(rows[:, a_cols])
        return cls(states, actions)


def sample_discriminator_batch(buffer, expert, n, rng, expert_noise_std=0.01):
    """Balanced labeled batch: n/2 policy pairs (y=1), n/2 noisy expert pairs (y=0).

    Noise is only ever added to the expert half.
    """
    if n % 2:
        raise ValueError("discriminator batch size must be even")
    if len(buffer) == 0:
        raise ValueError("cannot build a discriminator batch from an empty buffer")
    half = n // 2
    ps, pa, _ = buffer.sample(half, rng)
    es_all, ea_all = expert.pairs()
    idx = rng.integers(len(es_all), size=half)
    es, ea = es_all[idx], ea_all[idx]
    if expert_noise_std > 0:
        es = es + rng.normal(es.shape, expert_noise_std)
        ea = ea + rng.normal(ea.shape, expert_noise_std)
    s = np.concatenate([ps, es])
    a = np.concatenate([pa, ea])
    y = np.concatenate([np.ones(half), np.zeros(half)])
    perm = rng.permutation(n)
    return s[perm], a[perm], y[perm]
