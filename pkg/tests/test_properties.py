"""Property tests for the contracts that hold over whole input domains."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from deepchannel import linalg
from deepchannel.channel import quantize
from deepchannel.data import MomentSpec, scalar_moments, synthetic_scalar, write_csv, read_csv
from deepchannel.linalg import SeededRng

finite_reals = st.floats(
    min_value=-1e12, max_value=1e12, allow_nan=False, allow_infinity=False
)


@given(x=finite_reals, bits=st.integers(1, 12))
def test_quantize_range_and_grid(x, bits):
    alpha = 2.0**-3
    q = quantize(x, alpha, bits)
    assert abs(q) <= alpha
    if q != 0.0:
        exponent = np.log2(abs(q) / alpha)
        assert exponent == round(exponent)
        assert -bits + 1 <= exponent <= 0
        assert np.sign(q) == np.sign(x)


@given(x=finite_reals, bits=st.integers(1, 12))
def test_quantize_is_idempotent(x, bits):
    alpha = 0.75  # non-power-of-two scale
    once = quantize(x, alpha, bits)
    assert quantize(once, alpha, bits) == once


@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 7), cols=st.integers(1, 7))
@settings(max_examples=25)
def test_transpose_involution_random_shapes(seed, rows, cols):
    m = SeededRng(seed).standard_normal((rows, cols))
    np.testing.assert_array_equal(linalg.transpose(linalg.transpose(m)), m)


@given(
    alpha=st.floats(-3.0, 3.0, allow_nan=False),
    beta=st.floats(0.1, 5.0, allow_nan=False),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=30, deadline=None)
def test_synthetic_scalar_moments_exact(alpha, beta, seed):
    data = synthetic_scalar(MomentSpec(alpha, beta), 64, SeededRng(seed))
    got_alpha, got_beta = scalar_moments(data)
    assert abs(got_alpha - alpha) < 1e-10 * max(1.0, abs(alpha))
    assert abs(got_beta - beta) < 1e-10 * max(1.0, beta)


def test_dataset_csv_roundtrip(tmp_path):
    data = synthetic_scalar(MomentSpec(0.5, 1.5), 32, SeededRng(1))
    path = tmp_path / "data.csv"
    write_csv(data, path)
    back = read_csv(path)
    np.testing.assert_allclose(back.inputs, data.inputs, rtol=1e-15)
    np.testing.assert_allclose(back.targets, data.targets, rtol=1e-15)
