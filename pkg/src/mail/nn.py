"""Small dense ReLU networks with hand-written backward passes and Adam."""
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, ShapeError

MAGIC = b"MLP1"


class StaleCacheError(RuntimeError):
    pass


@dataclass
class Cache:
    inputs: list  # input to every layer, shape (n, n_in)
    pre: list  # pre-activation of every layer, shape (n, n_out)
    single: bool
    version: int


@dataclass
class BackwardResult:
    param_grad: np.ndarray
    input_grad: np.ndarray


class Mlp:
    """Fully connected net, ReLU between layers, identity on the output.

    Parameters are kept per layer as ``W`` of shape (n_out, n_in) and ``b``
    of shape (n_out,). The flat parameter vector concatenates, layer by
    layer, ``W`` in row-major order followed by ``b``.
    """

    def __init__(self, sizes, rng=None, zero_last=False):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.W = []
        self.b = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if rng is None or (zero_last and i == len(self.sizes) - 2):
                w = np.zeros((n_out, n_in))
            else:
                lim = np.sqrt(6.0 / (n_in + n_out))
                w = rng.uniform(-lim, lim, (n_out, n_in))
            self.W.append(w)
            self.b.append(np.zeros(n_out))
        self.version = 0

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def get_params(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.W, self.b)])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        k = 0
        for i, w in enumerate(self.W):
            n = w.size
            self.W[i] = theta[k:k + n].reshape(w.shape).copy()
            k += n
            m = self.b[i].size
            self.b[i] = theta[k:k + m].copy()
            k += m
        self.version += 1

    def copy(self):
        other = Mlp(self.sizes)
        other.set_params(self.get_params())
        return other

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.n_in:
            raise ShapeError(f"input shape {x.shape} does not match input dim {self.n_in}")
        inputs, pre = [], []
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            inputs.append(h)
            z = h @ w.T + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
        cache = Cache(inputs, pre, single, self.version)
        return (h[0] if single else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, upstream, per_sample=False):
        """Gradients of ``sum(upstream * output)``.

        With ``per_sample`` the parameter gradient keeps one row per input
        row instead of summing over the batch.
        """
        if cache.version != self.version:
            raise StaleCacheError("cache was produced before the parameters changed")
        g = np.asarray(upstream, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        n = cache.inputs[0].shape[0]
        if g.shape != (n, self.n_out):
            raise ShapeError(f"upstream shape {np.shape(upstream)} does not match output ({n}, {self.n_out})")
        grads = []
        last = len(self.W) - 1
        for i in range(last, -1, -1):
            if i != last:
                g = g * (cache.pre[i] > 0.0)  # ReLU'(0) := 0
            h = cache.inputs[i]
            if per_sample:
                gw = (g[:, :, None] * h[:, None, :]).reshape(n, -1)
                grads.append(np.concatenate([gw, g], axis=1))
            else:
                grads.append(np.concatenate([(g.T @ h).ravel(), g.sum(axis=0)]))
            g = g @ self.W[i]
        param_grad = np.concatenate(grads[::-1], axis=-1)
        if cache.single:
            g = g[0]
            if per_sample:
                param_grad = param_grad[0]
        return BackwardResult(param_grad, g)

    def jacobian_wrt_input(self, x):
        """Dense output-by-input Jacobian.

        ``x`` may be a single point (returns (n_out, n_in)) or a batch
        (returns (n, n_out, n_in)). Rows come from backward sweeps with
        basis upstream vectors.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xs = x[None, :] if single else x
        n, k = xs.shape[0], self.n_out
        _, cache = self.forward(np.repeat(xs, k, axis=0))
        basis = np.tile(np.eye(k), (n, 1))
        jac = self.backward(cache, basis).input_grad.reshape(n, k, self.n_in)
        return jac[0] if single else jac

    def jacobian_wrt_params(self, x):
        """Output-by-parameter Jacobian, (n_out, P) or (n, n_out, P)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xs = x[None, :] if single else x
        n, k = xs.shape[0], self.n_out
        _, cache = self.forward(np.repeat(xs, k, axis=0))
        basis = np.tile(np.eye(k), (n, 1))
        jac = self.backward(cache, basis, per_sample=True).param_grad.reshape(n, k, self.n_params)
        return jac[0] if single else jac

    # checkpoint: b"MLP1", uint32 L, L x uint32 sizes, P x float64, uint32 E, E x float64
    # all little-endian; the trailing E doubles carry owner-specific extras.
    def to_bytes(self, extra=()):
        extra = np.asarray(extra, dtype="<f8").ravel()
        head = MAGIC + struct.pack(f"<I{len(self.sizes)}I", len(self.sizes), *self.sizes)
        body = self.get_params().astype("<f8").tobytes()
        tail = struct.pack("<I", extra.size) + extra.tobytes()
        return head + body + tail

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != MAGIC:
            raise ValueError("not an MLP checkpoint")
        (n_layers,) = struct.unpack_from("<I", data, 4)
        sizes = struct.unpack_from(f"<{n_layers}I", data, 8)
        net = cls(sizes)
        off = 8 + 4 * n_layers
        p = net.n_params
        net.set_params(np.frombuffer(data, dtype="<f8", count=p, offset=off).astype(np.float64))
        off += 8 * p
        (n_extra,) = struct.unpack_from("<I", data, off)
        extra = np.frombuffer(data, dtype="<f8", count=n_extra, offset=off + 4).astype(np.float64)
        if off + 4 + 8 * n_extra != len(data):
            raise ValueError("trailing bytes in MLP checkpoint")
        return net, extra

    def save(self, path, extra=()):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(extra))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class AdamState:
    n: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n)
        if self.v is None:
            self.v = np.zeros(self.n)

    def update(self, params, grad):
        """Return new parameters after one bias-corrected Adam step."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.n,):
            raise ShapeError(f"gradient shape {grad.shape} != ({self.n},)")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(net, state, grad):
    net.set_params(state.update(net.get_params(), grad))
    return net, state


def random_mlp(sizes, seed):
    return Mlp(sizes, Rng(seed))
