"""The averaged learning-dynamics ODE systems.

Every system exposes rhs(state) on flat float64 state vectors, the
composite input-output map P, and the residual of its critical equation.
The scalar-chain family accepts states with arbitrary leading axes (and
broadcastable parameter arrays), so a whole batch of instances can be
integrated in lockstep; the matrix systems broadcast through `@` the same
way.

channel_mode selects between the random-transport equations and the
gradient-descent comparison system with the same architecture.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANDOM = "random"
GRADIENT = "gradient"


def _check_mode(mode):
    if mode not in (RANDOM, GRADIENT):
        raise ValueError(f"channel_mode must be 'random' or 'gradient', got {mode!r}")


def _stack(parts):
    return np.stack(parts, axis=-1)


@dataclass
class A111:
    """Scalar two-weight chain: da1 = c1 e, da2 = a1 e with e = alpha - beta a1 a2."""

    c1: float
    alpha: float
    beta: float
    channel_mode: str = RANDOM

    dim = 2

    def __post_init__(self):
        _check_mode(self.channel_mode)

    def labels(self):
        return ["a1", "a2"]

    def rhs(self, state):
        a1, a2 = state[..., 0], state[..., 1]
        e = self.alpha - self.beta * a1 * a2
        first = self.c1 * e if self.channel_mode == RANDOM else a2 * e
        return _stack([np.broadcast_to(first, np.shape(a1)).astype(float), a1 * e])

    def product(self, state):
        return state[..., 0] * state[..., 1]

    def residual(self, state):
        return np.abs(self.alpha - self.beta * self.product(state))

    def product_rate(self, state):
        a1, a2 = state[..., 0], state[..., 1]
        e = self.alpha - self.beta * a1 * a2
        coupling = a1**2 + a2 * self.c1 if self.channel_mode == RANDOM else a1**2 + a2**2
        return coupling * e


@dataclass
class A1111:
    """Scalar three-weight chain with feedback weights c1, c2 (c3 = 1)."""

    c1: float
    c2: float
    alpha: float
    beta: float
    channel_mode: str = RANDOM

    dim = 3

    def __post_init__(self):
        _check_mode(self.channel_mode)

    def labels(self):
        return ["a1", "a2", "a3"]

    def rhs(self, state):
        a1, a2, a3 = state[..., 0], state[..., 1], state[..., 2]
        e = self.alpha - self.beta * a1 * a2 * a3
        if self.channel_mode == RANDOM:
            parts = [self.c1 * e * np.ones_like(a1), self.c2 * a1 * e, a1 * a2 * e]
        else:
            parts = [a2 * a3 * e, a1 * a3 * e, a1 * a2 * e]
        return _stack(parts)

    def product(self, state):
        return state[..., 0] * state[..., 1] * state[..., 2]

    def residual(self, state):
        return np.abs(self.alpha - self.beta * self.product(state))

    def product_rate(self, state):
        a1, a2, a3 = state[..., 0], state[..., 1], state[..., 2]
        e = self.alpha - self.beta * a1 * a2 * a3
        if self.channel_mode == RANDOM:
            coupling = a1**2 * a2**2 + self.c1 * a2 * a3 + self.c2 * a1**2 * a3
        else:
            coupling = (a2 * a3) ** 2 + (a1 * a3) ** 2 + (a1 * a2) ** 2
        return coupling * e


def _exclusive_prefix(a):
    """prod_{k<i} a_k along the last axis (ones at i=0)."""
    out = np.ones_like(a)
    np.cumprod(a[..., :-1], axis=-1, out=out[..., 1:])
    return out


def _exclusive_suffix(a):
    """prod_{k>i} a_k along the last axis (ones at i=last)."""
    rev = a[..., ::-1]
    return _exclusive_prefix(rev)[..., ::-1]


@dataclass
class Chain:
    """Scalar chain of length L with feedback weights c_1..c_{L-1} (c_L = 1)."""

    length: int
    c: tuple
    alpha: float
    beta: float
    channel_mode: str = RANDOM

    def __post_init__(self):
        _check_mode(self.channel_mode)
        c = np.asarray(self.c, dtype=np.float64)
        if c.shape[-1] != self.length - 1:
            raise ValueError(f"need {self.length - 1} feedback weights, got {c.shape[-1]}")
        ones = np.ones(c.shape[:-1] + (1,))
        object.__setattr__(self, "c_full", np.concatenate([c, ones], axis=-1))

    @property
    def dim(self):
        return self.length

    def labels(self):
        return [f"a{i}" for i in range(1, self.length + 1)]

    def rhs(self, state):
        e = (self.alpha - self.beta * np.prod(state, axis=-1))[..., None]
        if self.channel_mode == RANDOM:
            return self.c_full * _exclusive_prefix(state) * e
        return _exclusive_prefix(state) * _exclusive_suffix(state) * e

    def product(self, state):
        return np.prod(state, axis=-1)

    def residual(self, state):
        return np.abs(self.alpha - self.beta * self.product(state))

    def product_rate(self, state):
        excl = _exclusive_prefix(state) * _exclusive_suffix(state)
        return np.sum(excl * self.rhs(state), axis=-1)


@dataclass
class ExpansiveA1N1:
    """One-in, N-hidden, one-out: state is (a_1..a_N, b_1..b_N)."""

    c: tuple
    alpha: float
    beta: float
    channel_mode: str = RANDOM

    def __post_init__(self):
        _check_mode(self.channel_mode)
        object.__setattr__(self, "c_arr", np.asarray(self.c, dtype=np.float64))

    @property
    def width(self):
        return self.c_arr.shape[-1]

    @property
    def dim(self):
        return 2 * self.width

    def labels(self):
        n = self.width
        return [f"a{i}" for i in range(1, n + 1)] + [f"b{i}" for i in range(1, n + 1)]

    def split(self, state):
        n = self.width
        return state[..., :n], state[..., n:]

    def rhs(self, state):
        a, b = self.split(state)
        e = (self.alpha - self.beta * np.sum(a * b, axis=-1))[..., None]
        lower = self.c_arr * e if self.channel_mode == RANDOM else b * e
        return np.concatenate([np.broadcast_to(lower, a.shape), a * e], axis=-1)

    def product(self, state):
        a, b = self.split(state)
        return np.sum(a * b, axis=-1)

    def residual(self, state):
        return np.abs(self.alpha - self.beta * self.product(state))

    def product_rate(self, state):
        a, b = self.split(state)
        e = self.alpha - self.beta * np.sum(a * b, axis=-1)
        if self.channel_mode == RANDOM:
            coupling = np.sum(b * self.c_arr + a**2, axis=-1)
        else:
            coupling = np.sum(b**2 + a**2, axis=-1)
        return coupling * e


@dataclass
class CompressiveAN1N:
    """N-in, one-hidden, N-out: state is (A row, B column) flattened."""

    c: tuple
    sigma_ii: np.ndarray
    sigma_ti: np.ndarray
    channel_mode: str = RANDOM

    def __post_init__(self):
        _check_mode(self.channel_mode)
        object.__setattr__(self, "c_arr", np.asarray(self.c, dtype=np.float64))
        object.__setattr__(self, "sigma_ii", np.asarray(self.sigma_ii, dtype=np.float64))
        object.__setattr__(self, "sigma_ti", np.asarray(self.sigma_ti, dtype=np.float64))

    @property
    def width(self):
        return self.c_arr.shape[-1]

    @property
    def dim(self):
        return 2 * self.width

    def labels(self):
        n = self.width
        return [f"a{i}" for i in range(1, n + 1)] + [f"b{i}" for i in range(1, n + 1)]

    def split(self, state):
        n = self.width
        return state[..., :n], state[..., n:]

    def error_matrix(self, state):
        a, b = self.split(state)
        p = b[..., :, None] * a[..., None, :]
        return self.sigma_ti - p @ self.sigma_ii

    def rhs(self, state):
        a, b = self.split(state)
        err = self.error_matrix(state)
        if self.channel_mode == RANDOM:
            da = np.einsum("...i,...ij->...j", np.broadcast_to(self.c_arr, b.shape), err)
        else:
            da = np.einsum("...i,...ij->...j", b, err)
        db = np.einsum("...ij,...j->...i", err, a)
        return np.concatenate([da, db], axis=-1)

    def product(self, state):
        a, b = self.split(state)
        return b[..., :, None] * a[..., None, :]

    def residual(self, state):
        return np.linalg.norm(self.error_matrix(state), axis=(-2, -1))


@dataclass
class GeneralThreeLayer:
    """A[N0,N1,N2] linear net: dA1 = C1 E, dA2 = E A1^t, E = Sigma_TI - A2 A1 Sigma_II."""

    sizes: tuple
    c1: np.ndarray
    sigma_ii: np.ndarray
    sigma_ti: np.ndarray
    channel_mode: str = RANDOM

    def __post_init__(self):
        _check_mode(self.channel_mode)
        n0, n1, n2 = self.sizes
        object.__setattr__(self, "c1", np.asarray(self.c1, dtype=np.float64))
        object.__setattr__(self, "sigma_ii", np.asarray(self.sigma_ii, dtype=np.float64))
        object.__setattr__(self, "sigma_ti", np.asarray(self.sigma_ti, dtype=np.float64))
        if self.c1.shape[-2:] != (n1, n2):
            raise ValueError(f"C1 must be {n1}x{n2}, got {self.c1.shape}")
        if self.sigma_ii.shape[-2:] != (n0, n0) or self.sigma_ti.shape[-2:] != (n2, n0):
            raise ValueError("data moment matrices have inconsistent shapes")

    @property
    def dim(self):
        n0, n1, n2 = self.sizes
        return n1 * n0 + n2 * n1

    def labels(self):
        n0, n1, n2 = self.sizes
        return [f"A1_{i}{j}" for i in range(n1) for j in range(n0)] + [
            f"A2_{i}{j}" for i in range(n2) for j in range(n1)
        ]

    def split(self, state):
        n0, n1, n2 = self.sizes
        lead = state.shape[:-1]
        a1 = state[..., : n1 * n0].reshape(lead + (n1, n0))
        a2 = state[..., n1 * n0 :].reshape(lead + (n2, n1))
        return a1, a2

    def pack(self, a1, a2):
        lead = a1.shape[:-2]
        return np.concatenate(
            [a1.reshape(lead + (-1,)), a2.reshape(lead + (-1,))], axis=-1
        )

    def error_matrix(self, state):
        a1, a2 = self.split(state)
        return self.sigma_ti - a2 @ a1 @ self.sigma_ii

    def rhs(self, state):
        a1, a2 = self.split(state)
        err = self.error_matrix(state)
        if self.channel_mode == RANDOM:
            da1 = self.c1 @ err
        else:
            da1 = np.swapaxes(a2, -1, -2) @ err
        da2 = err @ np.swapaxes(a1, -1, -2)
        return self.pack(da1, da2)

    def product(self, state):
        a1, a2 = self.split(state)
        return a2 @ a1

    def residual(self, state):
        return np.linalg.norm(self.error_matrix(state), axis=(-2, -1))


@dataclass
class GeneralDeepLinear:
    """A[N0..NL] linear net with skipped or layerwise random transport.

    Layerwise transport materializes the effective skip matrices
    B_i = C_i ... C_{L-1} once; when layer sizes differ those products are
    rank limited, which is noted on the instance.
    """

    sizes: tuple
    cs: list
    sigma_ii: np.ndarray
    sigma_ti: np.ndarray
    transport: str = "srbp"
    channel_mode: str = RANDOM

    def __post_init__(self):
        _check_mode(self.channel_mode)
        if self.transport not in ("srbp", "rbp"):
            raise ValueError(f"transport must be 'srbp' or 'rbp', got {self.transport!r}")
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "sigma_ii", np.asarray(self.sigma_ii, dtype=np.float64))
        object.__setattr__(self, "sigma_ti", np.asarray(self.sigma_ti, dtype=np.float64))
        L = len(sizes) - 1
        cs = [np.asarray(c, dtype=np.float64) for c in self.cs]
        if len(cs) != L - 1:
            raise ValueError(f"need {L - 1} channel matrices, got {len(cs)}")
        effective = []
        rank_limits = []
        if self.transport == "srbp":
            for i, c in enumerate(cs, start=1):
                if c.shape != (sizes[i], sizes[L]):
                    raise ValueError(f"C_{i} must be {sizes[i]}x{sizes[L]}, got {c.shape}")
                effective.append(c)
                rank_limits.append(min(sizes[i], sizes[L]))
        else:
            for i, c in enumerate(cs, start=1):
                if c.shape != (sizes[i], sizes[i + 1]):
                    raise ValueError(f"C_{i} must be {sizes[i]}x{sizes[i + 1]}, got {c.shape}")
            for i in range(L - 1):
                b = cs[i]
                for j in range(i + 1, L - 1):
                    b = b @ cs[j]
                effective.append(b)
                rank_limits.append(min(sizes[i + 1 : L + 1]))
        effective.append(np.eye(sizes[L]))
        rank_limits.append(sizes[L])
        object.__setattr__(self, "effective_backward", effective)
        object.__setattr__(self, "rank_limits", tuple(rank_limits))
        object.__setattr__(self, "rank_constrained", any(
            r < min(sizes[i + 1], sizes[L]) for i, r in enumerate(rank_limits[:-1])
        ))

    @property
    def depth(self):
        return len(self.sizes) - 1

    @property
    def dim(self):
        return sum(self.sizes[i + 1] * self.sizes[i] for i in range(self.depth))

    def labels(self):
        out = []
        for h in range(1, self.depth + 1):
            rows, cols = self.sizes[h], self.sizes[h - 1]
            out.extend(f"A{h}_{i}{j}" for i in range(rows) for j in range(cols))
        return out

    def split(self, state):
        mats = []
        offset = 0
        for h in range(1, self.depth + 1):
            rows, cols = self.sizes[h], self.sizes[h - 1]
            mats.append(state[offset : offset + rows * cols].reshape(rows, cols))
            offset += rows * cols
        return mats

    def pack(self, mats):
        return np.concatenate([m.ravel() for m in mats])

    def product(self, state):
        mats = self.split(state)
        p = mats[0]
        for m in mats[1:]:
            p = m @ p
        return p

    def error_matrix(self, state):
        return self.sigma_ti - self.product(state) @ self.sigma_ii

    def rhs(self, state):
        mats = self.split(state)
        err = self.error_matrix(state)
        L = self.depth
        # prefixes[i] = (A_i ... A_1)^t with prefixes[0] = Id
        prefixes = [np.eye(self.sizes[0])]
        acc = None
        for m in mats[:-1]:
            acc = m if acc is None else m @ acc
            prefixes.append(acc.T)
        if self.channel_mode == RANDOM:
            fronts = self.effective_backward
        else:
            # fronts[i] = A_{i+2}^t ... A_L^t with fronts[L-1] = Id
            suffix = [np.eye(self.sizes[L])]
            acc = None
            for m in reversed(mats[1:]):
                acc = m.T if acc is None else m.T @ acc
                suffix.append(acc)
            fronts = list(reversed(suffix))
        return self.pack([fronts[i] @ err @ prefixes[i] for i in range(L)])

    def residual(self, state):
        return np.linalg.norm(self.error_matrix(state))


@dataclass
class PowerA111:
    """A[1,1,1] with a power-mu hidden unit: O = a2 (a1 I)^mu.

    The four moments are alpha = E(T I^mu), beta = E(I^(2mu)),
    gamma = E(T I), delta = E(I^(mu+1)); gamma and delta only enter the
    no-f' variant, whose critical equations are incompatible unless
    alpha/beta = gamma/delta.
    """

    mu: float
    c1: float
    alpha: float
    beta: float
    gamma: float = 0.0
    delta: float = 0.0
    with_fprime: bool = True
    channel_mode: str = RANDOM

    dim = 2

    def __post_init__(self):
        _check_mode(self.channel_mode)
        if self.mu == 0:
            raise ValueError("mu must be nonzero")
        if not self.with_fprime and self.channel_mode == GRADIENT:
            raise ValueError("the gradient comparison system always carries f'")

    def labels(self):
        return ["a1", "a2"]

    def _check_domain(self, a1):
        if float(self.mu) != int(self.mu) and np.any(a1 < 0):
            raise ValueError("non-integer mu requires a nonnegative a1")

    def rhs(self, state):
        a1, a2 = state[..., 0], state[..., 1]
        self._check_domain(a1)
        powered = a1**self.mu
        e = self.alpha - self.beta * a2 * powered
        da2 = powered * e
        if not self.with_fprime:
            da1 = self.c1 * (self.gamma - self.delta * a2 * powered) * np.ones_like(a1)
        else:
            slope = self.mu * a1 ** (self.mu - 1.0)
            front = self.c1 if self.channel_mode == RANDOM else a2
            da1 = front * slope * e
        return _stack([da1, da2])

    def product(self, state):
        a1, a2 = state[..., 0], state[..., 1]
        self._check_domain(a1)
        return a2 * a1**self.mu

    def residual(self, state):
        x = self.product(state)
        primary = np.abs(self.alpha - self.beta * x)
        if self.with_fprime:
            return primary
        return np.maximum(primary, np.abs(self.gamma - self.delta * x))
