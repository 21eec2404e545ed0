"""Reparametrized diagonal-Gaussian policy: a = mu(s) + xi * sigma."""
from dataclasses import dataclass

import numpy as np

from .nn import Mlp
from .numerics import ShapeError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PolicySample:
    state: np.ndarray
    noise: np.ndarray
    action: np.ndarray


class GaussianPolicy:
    """State-independent log-std; the parameter vector is [mu_net params, log_sigma]."""

    def __init__(self, mu_net, log_sigma=None, init_std=0.5):
        self.mu_net = mu_net
        k = mu_net.n_out
        if log_sigma is None:
            log_sigma = np.full(k, np.log(init_std))
        self.log_sigma = np.array(log_sigma, dtype=np.float64)
        if self.log_sigma.shape != (k,):
            raise ShapeError(f"log_sigma shape {self.log_sigma.shape} != ({k},)")

    @classmethod
    def build(cls, state_dim, action_dim, hidden, rng, init_std=0.5):
        return cls(Mlp([state_dim, *hidden, action_dim], rng), init_std=init_std)

    @property
    def state_dim(self):
        return self.mu_net.n_in

    @property
    def action_dim(self):
        return self.mu_net.n_out

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    @property
    def n_params(self):
        return self.mu_net.n_params + self.action_dim

    def get_params(self):
        return np.concatenate([self.mu_net.get_params(), self.log_sigma])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {theta.shape}")
        self.mu_net.set_params(theta[:-self.action_dim])
        self.log_sigma = theta[-self.action_dim:].copy()

    def copy(self):
        return GaussianPolicy(self.mu_net.copy(), self.log_sigma.copy())

    def mean(self, s):
        return self.mu_net(s)

    def act(self, s, xi):
        return self.mu_net(s) + np.asarray(xi) * self.sigma

    def sample(self, s, rng):
        s = np.asarray(s, dtype=np.float64)
        xi = rng.gaussian(self.action_dim)
        return PolicySample(s.copy(), xi, self.act(s, xi))

    def jac_theta(self, sample):
        """d action / d theta at fixed noise, shape (action_dim, n_params)."""
        j_mu = self.mu_net.jacobian_wrt_params(sample.state)
        j_sig = np.diag(np.asarray(sample.noise) * self.sigma)
        return np.concatenate([j_mu, j_sig], axis=1)

    def jac_state(self, sample):
        return self.mu_net.jacobian_wrt_input(sample.state)

    def vjp(self, states, noise, upstream):
        """Batched vector-Jacobian products of actions.

        Returns (sum_t upstream_t . da_t/dtheta, per-row upstream_t . da_t/ds).
        """
        _, cache = self.mu_net.forward(states)
        res = self.mu_net.backward(cache, upstream)
        g_sig = np.sum(np.atleast_2d(upstream) * np.atleast_2d(noise), axis=0) * self.sigma
        return np.concatenate([res.param_grad, g_sig]), res.input_grad

    def log_prob(self, s, a):
        z = (np.asarray(a) - self.mean(s)) / self.sigma
        return np.sum(-0.5 * z * z - self.log_sigma - 0.5 * LOG_2PI, axis=-1)

    def log_prob_grad(self, s, a, weights=None, per_sample=False):
        """Gradient of sum_i w_i log pi(a_i|s_i) w.r.t. theta.

        With ``per_sample`` returns one (unweighted by the sum) row per pair,
        each already multiplied by its weight.
        """
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        n = s.shape[0]
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        mu, cache = self.mu_net.forward(s)
        sig = self.sigma
        diff = a - mu
        d_mu = diff / sig**2 * w[:, None]
        d_ls = ((diff / sig) ** 2 - 1.0) * w[:, None]
        res = self.mu_net.backward(cache, d_mu, per_sample=per_sample)
        if per_sample:
            return np.concatenate([res.param_grad, d_ls], axis=1)
        return np.concatenate([res.param_grad, d_ls.sum(axis=0)])

    def entropy(self):
        return float(np.sum(0.5 * (LOG_2PI + 1.0) + self.log_sigma))

    def entropy_grad(self):
        return np.concatenate([np.zeros(self.mu_net.n_params), np.ones(self.action_dim)])

    def save(self, path):
        self.mu_net.save(path, extra=self.log_sigma)

    @classmethod
    def load(cls, path):
        net, extra = Mlp.load(path)
        return cls(net, extra)
