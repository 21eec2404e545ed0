"""Learned deterministic dynamics s' = s + net(normalize(s, a))."""
from contextlib import contextmanager

import numpy as np

from .nn import AdamState, Mlp

STD_FLOOR = 1e-6


class ForwardModel:
    """Residual dynamics model.

    The last layer starts at zero so an untrained model is the identity map
    (f_s = I, f_a = 0). Inputs are standardized with exponential moving
    averages of the batch statistics; ``frozen()`` pins them.
    """

    def __init__(self, net, state_dim, lr=1e-3, ema_rate=0.01):
        if net.n_out != state_dim:
            raise ValueError("forward model output must match the state dimension")
        self.net = net
        self.state_dim = state_dim
        self.action_dim = net.n_in - state_dim
        self.adam = AdamState(net.n_params, lr=lr)
        self.ema_rate = ema_rate
        self.mean = np.zeros(net.n_in)
        self.std = np.ones(net.n_in)
        self.n_stat_updates = 0
        self._frozen = False

    @classmethod
    def build(cls, state_dim, action_dim, hidden, rng, **kw):
        net = Mlp([state_dim + action_dim, *hidden, state_dim], rng, zero_last=True)
        return cls(net, state_dim, **kw)

    @contextmanager
    def frozen(self):
        prev, self._frozen = self._frozen, True
        try:
            yield self
        finally:
            self._frozen = prev

    def _normalize(self, s, a):
        x = np.concatenate([np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64)], axis=-1)
        return (x - self.mean) / self.std

    def predict(self, s, a):
        return np.asarray(s, dtype=np.float64) + self.net(self._normalize(s, a))

    def jacobians(self, s, a):
        """(f_s, f_a) for one pair or stacked over a batch."""
        jac = self.net.jacobian_wrt_input(self._normalize(s, a)) / self.std
        k = self.state_dim
        f_s = jac[..., :k] + np.eye(k)
        return f_s, jac[..., k:]

    def update_stats(self, s, a):
        if self._frozen:
            return
        x = np.concatenate([s, a], axis=-1)
        m, sd = x.mean(axis=0), x.std(axis=0)
        if self.n_stat_updates == 0:
            self.mean, self.std = m, np.maximum(sd, STD_FLOOR)
        else:
            r = self.ema_rate
            self.mean = (1 - r) * self.mean + r * m
            self.std = np.maximum((1 - r) * self.std + r * sd, STD_FLOOR)
        self.n_stat_updates += 1

    def loss(self, s, a, s_next):
        err = self.predict(s, a) - s_next
        return float(np.mean(np.sum(err * err, axis=-1)))

    def train_batch(self, s, a, s_next, update_stats=True):
        """One Adam step on the mean (over the batch) squared prediction error."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        s_next = np.atleast_2d(np.asarray(s_next, dtype=np.float64))
        if s.shape[0] == 0:
            raise ValueError("empty forward-model batch")
        if update_stats:
            self.update_stats(s, a)
        out, cache = self.net.forward(self._normalize(s, a))
        err = s + out - s_next
        loss = float(np.mean(np.sum(err * err, axis=1)))
        if not np.isfinite(loss):
            raise FloatingPointError("forward-model loss is not finite")
        grad = self.net.backward(cache, 2.0 * err / s.shape[0]).param_grad
        self.net.set_params(self.adam.update(self.net.get_params(), grad))
        return loss

    def save(self, path):
        self.net.save(path, extra=np.concatenate([[self.state_dim], self.mean, self.std]))

    @classmethod
    def load(cls, path):
        net, extra = Mlp.load(path)
        k = int(extra[0])
        fm = cls(net, k)
        n = net.n_in
        fm.mean = extra[1:1 + n].copy()
        fm.std = extra[1 + n:1 + 2 * n].copy()
        fm.n_stat_updates = 1
        return fm
