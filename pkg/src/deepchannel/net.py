"""Feedforward architecture, initialization, and forward propagation.

The forward pass is batched: inputs are (batch, N_0) arrays and every
per-layer quantity in the trace is (batch, N_h). A trace keeps the
preactivations, activations, and activation derivatives that any of the
learning channels may later consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SeededRng, sample_gaussian


@dataclass(frozen=True)
class ActivationKind:
    """One of identity/logistic/tanh/relu/softmax/power(mu)."""

    name: str
    mu: float | None = None

    def __post_init__(self):
        if self.name not in ("identity", "logistic", "tanh", "relu", "softmax", "power"):
            raise ValueError(f"unknown activation kind: {self.name!r}")
        if self.name == "power":
            if self.mu is None or self.mu == 0:
                raise ValueError("power activation requires a nonzero exponent")
        elif self.mu is not None:
            raise ValueError(f"{self.name} takes no exponent")

    def __str__(self):
        return f"power:{self.mu:g}" if self.name == "power" else self.name


IDENTITY = ActivationKind("identity")
LOGISTIC = ActivationKind("logistic")
TANH = ActivationKind("tanh")
RELU = ActivationKind("relu")
SOFTMAX = ActivationKind("softmax")


def power(mu):
    return ActivationKind("power", float(mu))


def parse_activation(text):
    """Parse 'tanh', 'softmax', 'power:2', ... into an ActivationKind."""
    if text.startswith("power:"):
        return power(float(text.split(":", 1)[1]))
    return ActivationKind(text)


@dataclass(frozen=True)
class Architecture:
    """Layer sizes [N_0, ..., N_L] plus one activation per non-input layer."""

    layer_sizes: tuple
    activations: tuple
    use_bias: bool = True

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(sizes) < 2:
            raise ValueError("architecture needs an input layer and at least one layer above it")
        if any(n <= 0 for n in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if len(self.activations) != len(sizes) - 1:
            raise ValueError(
                f"need {len(sizes) - 1} activations (one per non-input layer), "
                f"got {len(self.activations)}"
            )
        for h, act in enumerate(self.activations, start=1):
            if act.name == "softmax" and h != self.depth:
                raise ValueError("softmax is permitted only in the output layer")

    @property
    def depth(self):
        """Number of weight layers L."""
        return len(self.layer_sizes) - 1


@dataclass
class ForwardNet:
    """Weights[h] has shape N_{h+1} x N_h for h = 0..L-1; biases match rows."""

    arch: Architecture
    weights: list
    biases: list | None = None

    def copy(self):
        return ForwardNet(
            self.arch,
            [w.copy() for w in self.weights],
            None if self.biases is None else [b.copy() for b in self.biases],
        )


@dataclass
class ForwardTrace:
    """Per layer h = 1..L: preactivation S^h, activation O^h, derivative f'(S^h).

    inputs is O^0. The derivative slot of a softmax layer is None; the
    boundary error T - O^L substitutes for it.
    """

    inputs: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    deriv: list = field(default_factory=list)

    def output(self):
        return self.post[-1]


def glorot_stddev(fan_in, fan_out):
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


def init_weights(arch: Architecture, rng: SeededRng) -> ForwardNet:
    """Gaussian weights with stddev sqrt(2/(fan_in+fan_out)); zero biases."""
    weights = []
    for h in range(arch.depth):
        fan_in, fan_out = arch.layer_sizes[h], arch.layer_sizes[h + 1]
        weights.append(sample_gaussian(rng, fan_out, fan_in, glorot_stddev(fan_in, fan_out)))
    biases = [np.zeros(arch.layer_sizes[h + 1]) for h in range(arch.depth)] if arch.use_bias else None
    return ForwardNet(arch, weights, biases)


def apply_activation(kind: ActivationKind, s):
    if kind.name == "identity":
        return s.copy()
    if kind.name == "logistic":
        return 1.0 / (1.0 + np.exp(-s))
    if kind.name == "tanh":
        return np.tanh(s)
    if kind.name == "relu":
        return np.maximum(s, 0.0)
    if kind.name == "softmax":
        z = s - s.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    if kind.name == "power":
        if np.any(s < 0):
            raise ValueError(
                "power activation received a negative preactivation; "
                "power nets assume positive inputs and weights"
            )
        return s**kind.mu
    raise AssertionError(kind)


def activation_derivative(kind: ActivationKind, s):
    """Elementwise f'(s). Softmax has no standalone derivative here."""
    if kind.name == "softmax":
        raise ValueError("softmax derivative is handled jointly with the loss boundary")
    s = np.asarray(s, dtype=np.float64)
    if kind.name == "identity":
        return np.ones_like(s)
    if kind.name == "logistic":
        o = 1.0 / (1.0 + np.exp(-s))
        return o * (1.0 - o)
    if kind.name == "tanh":
        t = np.tanh(s)
        return 1.0 - t * t
    if kind.name == "relu":
        # derivative at the 0 tie is taken as 0
        return (s > 0).astype(np.float64)
    if kind.name == "power":
        if np.any(s < 0):
            raise ValueError("power derivative undefined for negative preactivations here")
        return kind.mu * s ** (kind.mu - 1.0)
    raise AssertionError(kind)


def _derivative_from_forward(kind: ActivationKind, s, o):
    """f'(s), reusing the already-computed activation o where it helps."""
    if kind.name == "identity":
        return np.ones_like(s)
    if kind.name == "logistic":
        return o * (1.0 - o)
    if kind.name == "tanh":
        return 1.0 - o * o
    if kind.name == "relu":
        return (s > 0).astype(np.float64)
    if kind.name == "power":
        return kind.mu * s ** (kind.mu - 1.0)
    raise AssertionError(kind)


def forward(net: ForwardNet, inputs, want_deriv=True) -> ForwardTrace:
    """Run the layer recursion; accepts a single example or a batch."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    n0 = net.arch.layer_sizes[0]
    if x.shape[1] != n0:
        raise ValueError(f"input width {x.shape[1]} does not match N_0={n0}")
    trace = ForwardTrace(inputs=x)
    o = x
    for h in range(net.arch.depth):
        s = o @ net.weights[h].T
        if net.biases is not None:
            s = s + net.biases[h]
        kind = net.arch.activations[h]
        o = apply_activation(kind, s)
        trace.pre.append(s)
        trace.post.append(o)
        if kind.name == "softmax" or not want_deriv:
            trace.deriv.append(None)
        else:
            trace.deriv.append(_derivative_from_forward(kind, s, o))
    return trace


def count_bp_ops(arch: Architecture) -> int:
    """Total backward-channel multiplications for layerwise transport."""
    sizes = arch.layer_sizes
    return int(sum(sizes[k] * sizes[k + 1] for k in range(len(sizes) - 1)))


def count_srbp_ops(arch: Architecture) -> int:
    """Backward-channel multiplications when every hidden layer is fed directly."""
    sizes = arch.layer_sizes
    return int(sizes[-1] * sum(sizes[1:-1]))
