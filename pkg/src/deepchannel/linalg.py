"""Dense float64 matrices and reproducible random sampling.

Matrices are plain 2-D ``numpy.ndarray`` objects with dtype float64; the
helpers here add the shape/finiteness checking the rest of the package
relies on. All randomness flows through :class:`SeededRng` so that every
experiment artifact can record one (seed, algorithm) pair and be replayed
bit for bit on any platform.
"""

from __future__ import annotations

import numpy as np

# Identifier of the PRNG backing SeededRng, recorded in experiment outputs.
RNG_ALGORITHM_ID = "pcg64"


class SeededRng:
    """Deterministic random stream: same (seed, algorithm) -> same samples."""

    def __init__(self, seed, spawn_key=()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.algorithm_id = RNG_ALGORITHM_ID
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.spawn_key))
        )

    def spawn(self, key):
        """Independent child stream; key is a small integer label."""
        return SeededRng(self.seed, self.spawn_key + (int(key),))

    def normal(self, rows, cols, stddev):
        return sample_gaussian(self, rows, cols, stddev)

    def permutation(self, n):
        return self._gen.permutation(n)

    def uniform(self, size):
        return self._gen.random(size)

    def standard_normal(self, size):
        return self._gen.standard_normal(size)


def as_matrix(a):
    """Validate `a` as a finite 2-D float64 matrix and return it."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: left is {a.shape[0]}x{a.shape[1]}, "
            f"right is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def transpose(a):
    return as_matrix(a).T.copy()


def frobenius(a):
    return float(np.linalg.norm(as_matrix(a)))


def trace(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"trace requires a square matrix, got {a.shape[0]}x{a.shape[1]}")
    return float(np.trace(a))


def sample_gaussian(rng, rows, cols, stddev):
    """I.i.d. zero-mean Gaussian entries with the given standard deviation."""
    if stddev < 0:
        raise ValueError(f"stddev must be >= 0, got {stddev}")
    return stddev * rng._gen.standard_normal((rows, cols))


def sample_bernoulli(rng, rows, cols, p):
    """0/1 entries, each 1 with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bernoulli probability must lie in [0, 1], got {p}")
    return (rng._gen.random((rows, cols)) < p).astype(np.float64)
