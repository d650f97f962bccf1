"""Dataset ingestion: MNIST IDX files and exact-moment synthetic data.

The synthetic constructors match the *empirical* moments of the generated
sample to the requested ones exactly (affine rescaling and orthogonal
noise), not just in expectation. Batch-gradient training on such data then
follows the averaged learning dynamics without sampling bias, which keeps
the training-versus-integration comparisons tight.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import SeededRng

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class DataError(ValueError):
    pass


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray  # (examples, N_0)
    targets: np.ndarray  # (examples, N_L)
    kind: str = "classification"  # or "regression"

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DataError(
                f"inputs have {self.inputs.shape[0]} rows but targets have "
                f"{self.targets.shape[0]}"
            )

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class MomentSpec:
    """Scalar data moments: alpha = E(IT), beta = E(I^2) > 0."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


def _read_exact(f, nbytes, path, what):
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise IdxTruncatedError(f"{path}: truncated while reading {what}")
    return buf


def _read_u32(f, path, what):
    return struct.unpack(">I", _read_exact(f, 4, path, what))[0]


def load_idx_images(path):
    with open(path, "rb") as f:
        magic = _read_u32(f, path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(f"{path}: expected image magic {IDX_IMAGE_MAGIC}, got {magic}")
        count = _read_u32(f, path, "count")
        rows = _read_u32(f, path, "rows")
        cols = _read_u32(f, path, "cols")
        raw = _read_exact(f, count * rows * cols, path, "pixels")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)


def load_idx_labels(path):
    with open(path, "rb") as f:
        magic = _read_u32(f, path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(f"{path}: expected label magic {IDX_LABEL_MAGIC}, got {magic}")
        count = _read_u32(f, path, "count")
        raw = _read_exact(f, count, path, "labels")
    return np.frombuffer(raw, dtype=np.uint8)


def load_idx(images_path, labels_path, classes=10) -> Dataset:
    """Pixels scaled to [0,1]; labels one-hot over `classes`."""
    pixels = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} has {pixels.shape[0]} images but {labels_path} has "
            f"{labels.shape[0]} labels"
        )
    if labels.max(initial=0) >= classes:
        raise DataError(f"label {labels.max()} out of range for {classes} classes")
    inputs = pixels.astype(np.float64) / 255.0
    targets = np.zeros((labels.shape[0], classes))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    return Dataset(inputs=inputs, targets=targets, kind="classification")


def write_idx(images_path, labels_path, dataset: Dataset, side=None):
    """Inverse of load_idx (pixels re-quantized to u8); used for round-trips."""
    n, width = dataset.inputs.shape
    if side is None:
        side = int(round(np.sqrt(width)))
        if side * side != width:
            raise DataError(f"cannot infer square image side from width {width}")
    pixels = np.clip(np.rint(dataset.inputs * 255.0), 0, 255).astype(np.uint8)
    labels = dataset.targets.argmax(axis=1).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, side, side))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def write_csv(dataset: Dataset, path):
    """Inputs then targets, one example per row, with i*/t* headers."""
    n_in = dataset.inputs.shape[1]
    n_out = dataset.targets.shape[1]
    header = [f"i{k}" for k in range(n_in)] + [f"t{k}" for k in range(n_out)]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for x, t in zip(dataset.inputs, dataset.targets):
            f.write(",".join(f"{v:.17g}" for v in x) + ",")
            f.write(",".join(f"{v:.17g}" for v in t) + "\n")


def read_csv(path) -> Dataset:
    raw = np.genfromtxt(path, delimiter=",", names=True)
    names = raw.dtype.names
    n_in = sum(1 for n in names if n.startswith("i"))
    table = np.vstack([raw[n] for n in names]).T
    return Dataset(table[:, :n_in].copy(), table[:, n_in:].copy(), kind="regression")


def synthetic_scalar(spec: MomentSpec, m, rng: SeededRng) -> Dataset:
    """Scalar pairs whose *empirical* E(I^2) and E(IT) equal beta and alpha."""
    if m < 2:
        raise DataError("need at least 2 examples to orthogonalize the target noise")
    i = rng.standard_normal(m)
    if float(i @ i) == 0.0:
        i = np.ones(m)
    i = i * np.sqrt(spec.beta * m / float(i @ i))
    noise = rng.standard_normal(m)
    noise -= (noise @ i) / (i @ i) * i  # exactly uncorrelated with I
    t = (spec.alpha / spec.beta) * i + noise
    return Dataset(inputs=i[:, None], targets=t[:, None], kind="regression")


def _empirical_whiten(x):
    m = x.shape[0]
    cov = x.T @ x / m
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() <= 1e-12:
        raise DataError("sample is rank deficient; cannot whiten (need m > n_dims)")
    inv_sqrt = vecs @ np.diag(vals**-0.5) @ vecs.T
    return x @ inv_sqrt


def synthetic_multivariate(sigma_ii, sigma_ti, m, rng: SeededRng) -> Dataset:
    """Vector pairs whose empirical E(II^t) and E(TI^t) match exactly."""
    sigma_ii = np.asarray(sigma_ii, dtype=np.float64)
    sigma_ti = np.asarray(sigma_ti, dtype=np.float64)
    n_in = sigma_ii.shape[0]
    n_out = sigma_ti.shape[0]
    if sigma_ii.shape != (n_in, n_in) or not np.allclose(sigma_ii, sigma_ii.T):
        raise DataError("input second-moment matrix must be square symmetric")
    vals = np.linalg.eigvalsh(sigma_ii)
    if vals.min() <= 0:
        raise DataError("input second-moment matrix must be positive definite")
    if m <= n_in:
        raise DataError(f"need m > {n_in} samples to whiten, got {m}")
    white = _empirical_whiten(rng.standard_normal((m, n_in)))
    chol = np.linalg.cholesky(sigma_ii)
    inputs = white @ chol.T
    noise = rng.standard_normal((m, n_out))
    # remove every component of the noise correlated with the inputs
    coeff = np.linalg.solve(inputs.T @ inputs, inputs.T @ noise)
    noise = noise - inputs @ coeff
    targets = inputs @ np.linalg.solve(sigma_ii, sigma_ti.T) + noise
    return Dataset(inputs=inputs, targets=targets, kind="regression")


def autoencoder_identity(n_dims, m, rng: SeededRng) -> Dataset:
    """T = I with empirical E(II^t) = Id exactly."""
    if m <= n_dims:
        raise DataError(f"need m > {n_dims} samples to whiten, got {m}")
    inputs = _empirical_whiten(rng.standard_normal((m, n_dims)))
    return Dataset(inputs=inputs, targets=inputs.copy(), kind="regression")


def synthetic_power(mu, m, rng: SeededRng, coeff=1.0, noise_scale=0.1, offset=1.0) -> Dataset:
    """Positive scalar inputs with targets near coeff * I^mu, for power nets."""
    i = offset + np.abs(rng.standard_normal(m))
    t = coeff * i**mu + noise_scale * rng.standard_normal(m)
    return Dataset(inputs=i[:, None], targets=t[:, None], kind="regression")


def power_moments(dataset: Dataset, mu):
    """Empirical (alpha, beta, gamma, delta) = (E(TI^mu), E(I^2mu), E(TI), E(I^(mu+1)))."""
    i = dataset.inputs[:, 0]
    t = dataset.targets[:, 0]
    return (
        float(np.mean(t * i**mu)),
        float(np.mean(i ** (2 * mu))),
        float(np.mean(t * i)),
        float(np.mean(i ** (mu + 1))),
    )


def scalar_moments(dataset: Dataset):
    """Empirical (alpha, beta) = (E(IT), E(I^2)) for scalar data."""
    i = dataset.inputs[:, 0]
    t = dataset.targets[:, 0]
    return float(np.mean(i * t)), float(np.mean(i * i))


def multivariate_moments(dataset: Dataset):
    """Empirical (Sigma_II, Sigma_TI)."""
    m = len(dataset)
    return dataset.inputs.T @ dataset.inputs / m, dataset.targets.T @ dataset.inputs / m
