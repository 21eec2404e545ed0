"""Discriminator D(s, a) = p(policy | s, a).

Label convention: y = 1 for policy-generated pairs, y = 0 for expert pairs.
The policy is trained to push D down along its trajectories.
"""
import numpy as np

from .nn import AdamState, Mlp


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def bce_with_logits(logit, y):
    return np.logaddexp(0.0, logit) - y * logit


class Discriminator:
    def __init__(self, net, lr=3e-4, lr_decay=0.999, min_lr=0.0):
        if net.n_out != 1:
            raise ValueError("discriminator net must produce a single logit")
        self.net = net
        self.lr0 = lr
        self.lr_decay = lr_decay
        self.min_lr = min_lr
        self.adam = AdamState(net.n_params, lr=lr)
        self.updates = 0

    @classmethod
    def build(cls, state_dim, action_dim, hidden, rng, **kw):
        return cls(Mlp([state_dim + action_dim, *hidden, 1], rng), **kw)

    def _inputs(self, s, a):
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        return np.concatenate([s, a], axis=-1)

    def logit(self, s, a):
        return self.net(self._inputs(s, a))[..., 0]

    def prob(self, s, a):
        return sigmoid(self.logit(s, a))

    def grads(self, s, a):
        """Return (D, dD/ds, dD/da); works for single pairs and batches."""
        s = np.asarray(s, dtype=np.float64)
        x = self._inputs(s, a)
        out, cache = self.net.forward(x)
        d = sigmoid(out[..., 0])
        g = self.net.backward(cache, (d * (1.0 - d))[..., None]).input_grad
        k = s.shape[-1]
        return d, g[..., :k], g[..., k:]

    def loss(self, s, a, y):
        return float(np.mean(bce_with_logits(self.logit(s, a), np.asarray(y, dtype=np.float64))))

    def train_batch(self, s, a, y):
        """One Adam step on mean binary cross-entropy; returns the pre-step loss."""
        y = np.asarray(y, dtype=np.float64)
        if y.size == 0:
            raise ValueError("empty discriminator batch")
        out, cache = self.net.forward(self._inputs(s, a))
        logit = out[:, 0]
        loss = float(np.mean(bce_with_logits(logit, y)))
        if not np.isfinite(loss):
            raise FloatingPointError("discriminator loss is not finite")
        up = ((sigmoid(logit) - y) / y.size)[:, None]
        grad = self.net.backward(cache, up).param_grad
        self.adam.lr = max(self.lr0 * self.lr_decay ** self.updates, self.min_lr)
        self.net.set_params(self.adam.update(self.net.get_params(), grad))
        self.updates += 1
        return loss

    def save(self, path):
        self.net.save(path)


def fit_tabular(mdp, n_samples, rng, hidden=(64, 64), steps=5000, batch=512, lr=3e-3,
                lr_decay=0.999, swap_labels=False):
    """Train D on pairs drawn from the exact occupancies of a tabular MDP.

    Half the samples come from the learner's table (label 1), half from the
    expert's (label 0). Returns the discriminator and its (N, M) table.
    """
    from .envs import sample_occupancy_pairs

    half = n_samples // 2
    sp, ap = sample_occupancy_pairs(mdp, mdp.policy, half, rng)
    se, ae = sample_occupancy_pairs(mdp, mdp.expert, half, rng)
    S, A = mdp.features(np.concatenate([sp, se]), np.concatenate([ap, ae]))
    y = np.concatenate([np.ones(half), np.zeros(half)])
    if swap_labels:
        y = 1.0 - y
    d = Discriminator.build(mdp.n_states, mdp.n_actions, hidden, rng, lr=lr, lr_decay=lr_decay)
    for _ in range(steps):
        idx = rng.integers(len(y), size=batch)
        d.train_batch(S[idx], A[idx], y[idx])
    si, ai = np.meshgrid(np.arange(mdp.n_states), np.arange(mdp.n_actions), indexing="ij")
    table = d.prob(*mdp.features(si.ravel(), ai.ravel())).reshape(mdp.n_states, mdp.n_actions)
    return d, table
