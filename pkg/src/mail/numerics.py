"""Dense linear algebra helpers and the seeded random source.

Matrices are plain float64 ``numpy`` arrays. The only thing added on top of
numpy is shape checking with readable errors and a reproducible Gaussian
generator.
"""
import numpy as np


class ShapeError(ValueError):
    pass


def as_matrix(x):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matmul produced non-finite entries")
    return out


class Rng:
    """Seeded random source.

    Uniform variates come from numpy's PCG64 bit generator, whose stream is
    fixed across platforms for a given seed. Normal variates are produced
    here with the Box-Muller transform rather than numpy's ziggurat so the
    Gaussian stream is pinned by this file alone:

        z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)

    with u1 drawn from (0, 1] so the log is always finite. Draws are made
    in pairs; an odd request discards the last sine variate.
    """

    def __init__(self, seed=0):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def gaussian(self, n):
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]

    def normal(self, shape, std=1.0):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape))
        if count == 0:
            return np.zeros(shape)
        return std * self.gaussian(count).reshape(shape)

    def integers(self, high, size=None):
        return self._gen.integers(0, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size, p=None):
        return self._gen.choice(n, size=size, p=p)

    def spawn(self):
        """Independent child generator, derived deterministically."""
        return Rng(int(self._gen.integers(0, 2**63 - 1)))
