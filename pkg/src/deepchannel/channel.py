"""Error transport and weight updates for every learning-channel algorithm.

The channel owns everything between the boundary error T - O at the output
layer and the per-layer weight updates: layerwise transport with forward
transposes (bp), fixed random matrices (rbp), direct random projections
from the output layer (srbp), skipped transposes (sbp), adaptive variants,
and the modifier family (no-f', sparse, sign-concordant, resampled,
sign/abs-only updates, per-weight randomness, quantization, channel
dropout).

Signals are batched: every per-layer signal is a (batch, N_h) array.
Layer h in 1..L has forward weight net.weights[h-1] of shape
(N_h, N_{h-1}); backward matrices are stored so that they apply without
transposition (see ChannelState).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import SeededRng, sample_bernoulli, sample_gaussian
from .net import Architecture, ForwardNet, ForwardTrace, glorot_stddev

BP = "bp"
SBP = "sbp"
RBP = "rbp"
SRBP = "srbp"
ARBP = "arbp"
ASRBP = "asrbp"
TOP_LAYER_ONLY = "top_layer_only"
GRADIENT_ORACLE = "gradient_oracle"  # bp by another name, for dynamics comparisons

ALGORITHMS = (BP, SBP, RBP, SRBP, ARBP, ASRBP, TOP_LAYER_ONLY, GRADIENT_ORACLE)

# Algorithms whose transport uses fixed/adaptive random matrices.
RANDOM_FAMILY = (RBP, SRBP, ARBP, ASRBP)
# Algorithms with one random matrix per adjacent layer pair (layerwise transport).
LAYERWISE_RANDOM = (RBP, ARBP)
# Algorithms with one random matrix per hidden layer, fed from the output layer.
SKIPPED_RANDOM = (SRBP, ASRBP)

DEFAULT_ERROR_QUANT_ALPHA = 2.0**-3
DEFAULT_UPDATE_QUANT_ALPHA = 2.0**-6


@dataclass(frozen=True)
class SparseSpec:
    """Bernoulli 0/1 backward matrices with on average n inputs per receiving neuron."""

    n: float
    rescale: bool = False  # divide entries by sqrt(n); needed for layerwise transport

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"sparse n must be >= 0, got {self.n}")


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    alpha: float

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError(f"quantization needs bits >= 1, got {self.bits}")
        if self.alpha <= 0:
            raise ValueError(f"quantization scale must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class ChannelModifiers:
    use_fprime: bool = True
    sparse: SparseSpec | None = None
    resample_each_batch: bool = False
    sign_concordant: bool = False
    sign_only_update: bool = False
    abs_only_update: bool = False
    per_weight_random: bool = False
    error_quant: QuantSpec | None = None
    update_quant: QuantSpec | None = None
    lc_dropout: float = 0.0
    nonzero_mean: float | None = None

    def __post_init__(self):
        if self.sign_only_update and self.abs_only_update:
            raise ValueError("sign_only_update and abs_only_update are mutually exclusive")
        if not 0.0 <= self.lc_dropout < 1.0:
            raise ValueError(f"lc_dropout must lie in [0, 1), got {self.lc_dropout}")


@dataclass(frozen=True)
class ChannelSpec:
    algorithm: str
    modifiers: ChannelModifiers = field(default_factory=ChannelModifiers)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown channel algorithm {self.algorithm!r}")
        m = self.modifiers
        random_only = {
            "sparse": m.sparse is not None,
            "resample_each_batch": m.resample_each_batch,
            "sign_concordant": m.sign_concordant,
            "per_weight_random": m.per_weight_random,
            "nonzero_mean": m.nonzero_mean is not None,
        }
        if self.algorithm not in RANDOM_FAMILY:
            bad = [k for k, v in random_only.items() if v]
            if bad:
                raise ValueError(
                    f"modifier(s) {bad} require a random-matrix channel, "
                    f"not {self.algorithm}"
                )
        if m.sign_concordant and self.algorithm not in LAYERWISE_RANDOM:
            raise ValueError(
                "sign_concordant pairs each backward weight with a forward weight "
                "and is only defined for layerwise random transport (rbp/arbp)"
            )
        if m.per_weight_random and self.algorithm != SRBP:
            raise ValueError("per_weight_random is defined only for srbp")


@dataclass
class ChannelState:
    """Backward matrices plus the stream used for resampling/dropout.

    backward[i] applies without transposition:
      layerwise (rbp/arbp): i = 0..L-2, shape (N_{i+1}, N_{i+2}); the signal
        entering layer h is backward[h-1] @ signal(h+1).
      skipped (srbp/asrbp): i = 0..L-2, shape (N_{i+1}, N_L); the signal
        entering layer h is backward[h-1] @ (T - O).
    Other algorithms keep backward empty.
    """

    arch: Architecture
    spec: ChannelSpec
    backward: list
    rng: SeededRng
    # per-weight falsification harness: one global output projection per hidden
    # layer plus one fixed Gaussian scalar per forward weight
    per_weight_global: list | None = None
    per_weight_rho: list | None = None

    @property
    def algorithm(self):
        return self.spec.algorithm

    @property
    def modifiers(self):
        return self.spec.modifiers


@dataclass
class ErrorSignals:
    """signals[h-1] is the (batch, N_h) update signal for layer h = 1..L.

    quantized_inputs keeps the quantized pre-f' signals (hidden layers only,
    None at the top) when error quantization is active.
    """

    signals: list
    quantized_inputs: list | None = None


_SQRT_HALF = np.sqrt(0.5)


def quantize(x, alpha, bits):
    """Log-scale quantizer: alpha * sign(x) * 2^round(clip(log2|x/alpha|, -bits+1, 0)).

    Zero maps to zero; nonzero outputs have magnitude in
    {alpha * 2^(-bits+1), ..., alpha/2, alpha}. The rounded exponent is
    extracted with frexp (x = m * 2^e with m in [0.5, 1) rounds to e-1
    below sqrt(1/2) and to e above), which avoids log2 in the hot path.
    """

    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    mantissa, exponent = np.frexp(np.abs(arr) / alpha)
    rounded = np.clip(exponent - 1 + (mantissa >= _SQRT_HALF), -bits + 1, 0)
    out = alpha * np.sign(arr) * np.ldexp(1.0, rounded)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out[0])
    return out


def _backward_shapes(arch: Architecture, algorithm):
    sizes = arch.layer_sizes
    L = arch.depth
    if algorithm in LAYERWISE_RANDOM:
        return [(sizes[h], sizes[h + 1]) for h in range(1, L)]
    if algorithm in SKIPPED_RANDOM:
        return [(sizes[h], sizes[L]) for h in range(1, L)]
    return []


def _draw_backward(state_or_spec, arch, rng, net=None):
    spec = state_or_spec.spec if isinstance(state_or_spec, ChannelState) else state_or_spec
    m = spec.modifiers
    mats = []
    for idx, (rows, cols) in enumerate(_backward_shapes(arch, spec.algorithm)):
        if m.sparse is not None:
            p = m.sparse.n / rows
            if p > 1.0:
                raise ValueError(
                    f"sparse n={m.sparse.n} exceeds the receiving layer width {rows}"
                )
            mat = sample_bernoulli(rng, rows, cols, p)
            if m.sparse.rescale and m.sparse.n > 0:
                mat = mat / np.sqrt(m.sparse.n)
        else:
            mat = sample_gaussian(rng, rows, cols, glorot_stddev(cols, rows))
            if m.nonzero_mean is not None:
                mat = mat + m.nonzero_mean
        if m.sign_concordant:
            if net is None:
                raise ValueError("sign_concordant needs the forward net to copy signs from")
            # layerwise matrix idx pairs with forward weight of layer idx+2
            fwd = net.weights[idx + 1]
            mat = np.abs(mat) * np.sign(fwd.T)
        mats.append(mat)
    return mats


def init_channel(arch: Architecture, spec: ChannelSpec, rng: SeededRng, net=None) -> ChannelState:
    """Construct the channel state; `net` is needed only for sign_concordant."""
    state = ChannelState(arch=arch, spec=spec, backward=[], rng=rng)
    state.backward = _draw_backward(spec, arch, rng, net)
    if spec.modifiers.per_weight_random:
        sizes = arch.layer_sizes
        L = arch.depth
        state.per_weight_global = [
            sample_gaussian(rng, 1, sizes[L], glorot_stddev(sizes[L], 1))[0]
            for _ in range(1, L)
        ]
        state.per_weight_rho = [
            sample_gaussian(rng, sizes[h], sizes[h - 1], 1.0) for h in range(1, L)
        ]
    return state


def resample_channel(state: ChannelState, net: ForwardNet | None = None) -> ChannelState:
    """Draw fresh backward matrices in place (sign_concordant copies current signs)."""
    if not (state.modifiers.resample_each_batch or state.modifiers.sign_concordant):
        raise ValueError("resample_channel called on a fixed channel")
    state.backward = _draw_backward(state, state.arch, state.rng, net)
    return state


def _maybe_dropout(signal, p, rng):
    if p <= 0.0:
        return signal
    if rng is None:
        raise ValueError("lc_dropout needs an rng")
    keep = rng.uniform(signal.shape) >= p
    return signal * keep / (1.0 - p)


def backward_signals(
    state: ChannelState,
    net: ForwardNet,
    trace: ForwardTrace,
    target,
    rng: SeededRng | None = None,
) -> ErrorSignals:
    """Per-layer error signals; the top layer is always exactly T - O^L."""
    m = state.modifiers
    L = state.arch.depth
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    out = trace.output()
    if t.shape != out.shape:
        raise ValueError(f"target shape {t.shape} does not match output shape {out.shape}")
    e = t - out

    signals = [None] * L
    signals[L - 1] = e
    quantized = [None] * L if m.error_quant is not None else None
    if rng is None:
        rng = state.rng

    def finish(h, incoming):
        """Quantize/apply f'/drop the signal entering hidden layer h (1-based)."""
        j = incoming
        if m.error_quant is not None:
            j = quantize(j, m.error_quant.alpha, m.error_quant.bits)
            quantized[h - 1] = j
        sig = j * trace.deriv[h - 1] if m.use_fprime else j
        return _maybe_dropout(sig, m.lc_dropout, rng)

    algo = state.algorithm
    if algo == TOP_LAYER_ONLY:
        for h in range(1, L):
            signals[h - 1] = np.zeros_like(trace.pre[h - 1])
    elif algo in (BP, GRADIENT_ORACLE):
        v = e
        for h in range(L - 1, 0, -1):
            v = finish(h, v @ net.weights[h])
            signals[h - 1] = v
    elif algo == SBP:
        u = e
        for h in range(L - 1, 0, -1):
            u = u @ net.weights[h]
            signals[h - 1] = finish(h, u)
    elif algo in LAYERWISE_RANDOM:
        v = e
        for h in range(L - 1, 0, -1):
            v = finish(h, v @ state.backward[h - 1].T)
            signals[h - 1] = v
    elif algo in SKIPPED_RANDOM:
        for h in range(1, L):
            signals[h - 1] = finish(h, e @ state.backward[h - 1].T)
    else:
        raise AssertionError(algo)

    if m.per_weight_random:
        # hidden-layer signals are replaced by a per-weight construction in
        # weight_updates; keep the global scalar per example here
        for h in range(1, L):
            scalar = e @ state.per_weight_global[h - 1]
            signals[h - 1] = scalar[:, None] * np.ones((1, state.arch.layer_sizes[h]))
    return ErrorSignals(signals=signals, quantized_inputs=quantized)


def _presynaptic(trace: ForwardTrace, h):
    return trace.inputs if h == 1 else trace.post[h - 2]


def weight_updates(state: ChannelState, signals: ErrorSignals, trace: ForwardTrace, lr):
    """Averaged minibatch updates: dW[h-1] = lr * mean_b R^h (O^{h-1})^t.

    Returns (weight deltas, bias deltas); bias deltas use presynaptic
    activity 1. sign/abs-only and the per-weight harness touch hidden
    layers only; update quantization touches every layer.
    """
    m = state.modifiers
    L = state.arch.depth
    batch = trace.inputs.shape[0]
    d_weights = []
    d_biases = []
    for h in range(1, L + 1):
        r = signals.signals[h - 1]
        o_prev = _presynaptic(trace, h)
        if h < L and m.sign_only_update:
            r = np.sign(r)
        elif h < L and m.abs_only_update:
            r = np.abs(r)
        if h < L and m.per_weight_random:
            scalar = r[:, 0]  # global per-example scalar, identical across the layer
            drive = (scalar[:, None] * o_prev).mean(axis=0)
            if m.update_quant is not None:
                per = quantize(
                    state.per_weight_rho[h - 1][None, :, :]
                    * (scalar[:, None, None] * o_prev[:, None, :]),
                    m.update_quant.alpha,
                    m.update_quant.bits,
                )
                dw = lr * per.mean(axis=0)
            else:
                dw = lr * state.per_weight_rho[h - 1] * drive[None, :]
            db = np.zeros(r.shape[1])
        elif m.update_quant is not None:
            if m.update_quant.bits == 1:
                # 1-bit quantize(u) = alpha * sign(u), and the sign of each
                # per-example outer-product entry factors into sign(R)sign(O)
                a = m.update_quant.alpha
                dw = lr * a * (np.sign(r).T @ np.sign(o_prev)) / batch
            else:
                per = quantize(
                    r[:, :, None] * o_prev[:, None, :], m.update_quant.alpha, m.update_quant.bits
                )
                dw = lr * per.mean(axis=0)
            db = lr * quantize(r, m.update_quant.alpha, m.update_quant.bits).mean(axis=0)
        else:
            dw = lr * (r.T @ o_prev) / batch
            db = lr * r.mean(axis=0)
        d_weights.append(dw)
        d_biases.append(db)
    return d_weights, d_biases


def adapt_channel(state: ChannelState, signals: ErrorSignals, trace: ForwardTrace, lr):
    """Slow channel adaptation: each backward matrix moves along the outer
    product of its forward-side activity and backward-side signal, at 0.1*lr."""
    if state.algorithm not in (ARBP, ASRBP):
        raise ValueError(f"adapt_channel requires an adaptive channel, got {state.algorithm}")
    eta = 0.1 * lr
    batch = trace.inputs.shape[0]
    L = state.arch.depth
    for h in range(1, L):
        o_h = trace.post[h - 1]
        if state.algorithm == ARBP:
            back = signals.signals[h]  # signal at layer h+1
        else:
            back = signals.signals[L - 1]  # skipped: boundary error
        state.backward[h - 1] = state.backward[h - 1] + eta * (o_h.T @ back) / batch
    return state
