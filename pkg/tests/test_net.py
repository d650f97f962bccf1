import numpy as np
import pytest

from deepchannel.linalg import SeededRng
from deepchannel import net as nets
from deepchannel.net import (
    Architecture,
    IDENTITY,
    LOGISTIC,
    RELU,
    SOFTMAX,
    TANH,
    activation_derivative,
    count_bp_ops,
    count_srbp_ops,
    forward,
    init_weights,
    power,
)

MNIST_ARCH = Architecture((784, 100, 100, 100, 100, 10), (TANH,) * 4 + (SOFTMAX,))


def linear_chain(weights):
    """A[1,...,1] identity net with the given scalar weights, no biases."""
    arch = Architecture((1,) * (len(weights) + 1), (IDENTITY,) * len(weights), use_bias=False)
    return nets.ForwardNet(arch, [np.array([[float(w)]]) for w in weights])


def test_init_shapes():
    net = init_weights(MNIST_ARCH, SeededRng(0))
    assert net.weights[0].shape == (100, 784)
    assert net.weights[-1].shape == (10, 100)
    assert all(b.shape == (n,) for b, n in zip(net.biases, (100, 100, 100, 100, 10)))
    assert all(np.all(b == 0) for b in net.biases)


def test_init_scaling():
    net = init_weights(MNIST_ARCH, SeededRng(1))
    expected = np.sqrt(2.0 / 884.0)
    assert abs(net.weights[0].std() - expected) / expected < 0.1


def test_init_determinism():
    a = init_weights(MNIST_ARCH, SeededRng(3))
    b = init_weights(MNIST_ARCH, SeededRng(3))
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


def test_forward_linear_chain_is_product_of_weights():
    net = linear_chain([2.0, 3.0])
    trace = forward(net, np.array([1.0]))
    assert trace.output()[0, 0] == pytest.approx(6.0, abs=1e-15)


def test_forward_power_net_hand_value():
    arch = Architecture((1, 1, 1), (power(2.0), IDENTITY), use_bias=False)
    net = nets.ForwardNet(arch, [np.array([[2.0]]), np.array([[1.0]])])
    trace = forward(net, np.array([1.0]))
    assert trace.output()[0, 0] == pytest.approx(4.0)


def test_forward_tanh_range_and_softmax_normalization():
    net = init_weights(MNIST_ARCH, SeededRng(5))
    trace = forward(net, np.abs(SeededRng(6).standard_normal((7, 784))))
    for h in range(4):
        assert np.all(np.abs(trace.post[h]) < 1.0)
    np.testing.assert_allclose(trace.output().sum(axis=1), 1.0, atol=1e-12)
    assert trace.deriv[-1] is None


def test_forward_wrong_input_width():
    net = init_weights(MNIST_ARCH, SeededRng(0))
    with pytest.raises(ValueError, match="784"):
        forward(net, np.zeros(10))


def test_forward_fully_linear_equals_matrix_product():
    rng = SeededRng(8)
    arch = Architecture((5, 4, 3, 2), (IDENTITY,) * 3, use_bias=False)
    net = init_weights(arch, rng)
    x = rng.standard_normal((11, 5))
    out = forward(net, x).output()
    product = net.weights[2] @ net.weights[1] @ net.weights[0]
    expected = x @ product.T
    assert np.max(np.abs(out - expected)) / np.max(np.abs(expected)) < 1e-10


def test_relu_trace_identity():
    arch = Architecture((6, 6), (RELU,), use_bias=False)
    net = init_weights(arch, SeededRng(10))
    trace = forward(net, SeededRng(11).standard_normal((9, 6)))
    np.testing.assert_array_equal(trace.post[0], trace.pre[0] * trace.deriv[0])


def test_activation_derivatives_hand_values():
    assert activation_derivative(IDENTITY, 3.7) == 1.0
    assert activation_derivative(TANH, 0.0) == 1.0
    assert activation_derivative(LOGISTIC, 0.0) == pytest.approx(0.25)
    assert activation_derivative(RELU, -1.0) == 0.0
    assert activation_derivative(RELU, 0.0) == 0.0
    assert activation_derivative(power(2.0), 3.0) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        activation_derivative(SOFTMAX, 0.0)


def test_activation_derivatives_match_finite_differences():
    h = 1e-6
    for kind in (LOGISTIC, TANH, power(2.5)):
        for s in (0.4, 1.3, 2.0):
            numeric = (
                nets.apply_activation(kind, np.array([s + h]))
                - nets.apply_activation(kind, np.array([s - h]))
            )[0] / (2 * h)
            assert activation_derivative(kind, s) == pytest.approx(numeric, rel=1e-6)


def test_power_rejects_negative_preactivations():
    arch = Architecture((1, 1, 1), (power(0.5), IDENTITY), use_bias=False)
    net = nets.ForwardNet(arch, [np.array([[1.0]]), np.array([[1.0]])])
    with pytest.raises(ValueError, match="negative"):
        forward(net, np.array([-1.0]))


def test_softmax_only_in_output_layer():
    with pytest.raises(ValueError, match="softmax"):
        Architecture((3, 3, 3), (SOFTMAX, SOFTMAX))


def test_op_counts_mnist_architecture():
    assert count_bp_ops(MNIST_ARCH) == 109400
    assert count_srbp_ops(MNIST_ARCH) == 4000


def test_op_counts_equal_width():
    arch = Architecture((50, 50, 50), (TANH, SOFTMAX))
    assert count_bp_ops(arch) == 2 * 50 * 50
    assert count_srbp_ops(arch) == 50 * 50
