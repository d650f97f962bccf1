import numpy as np
import pytest

from deepchannel.data import (
    MomentSpec,
    autoencoder_identity,
    multivariate_moments,
    power_moments,
    scalar_moments,
    synthetic_power,
    synthetic_scalar,
)
from deepchannel.dynamics.empirical import empirical_vs_ode, net_for_system, net_state_vector
from deepchannel.dynamics.integrate import integrate
from deepchannel.dynamics.systems import (
    A111,
    Chain,
    CompressiveAN1N,
    ExpansiveA1N1,
    GRADIENT,
    PowerA111,
)
from deepchannel.linalg import SeededRng


def scalar_setup(seed=0, alpha=1.0, beta=1.0):
    data = synthetic_scalar(MomentSpec(alpha=alpha, beta=beta), 200, SeededRng(seed))
    a, b = scalar_moments(data)
    return data, a, b


class TestNetForSystem:
    def test_a111_roundtrip(self):
        system = A111(c1=0.7, alpha=1.0, beta=1.0)
        state0 = np.array([0.3, -0.2])
        net, chan = net_for_system(system, state0)
        np.testing.assert_allclose(net_state_vector(system, net), state0)
        assert chan.backward[0][0, 0] == pytest.approx(0.7)

    def test_chain_uses_unit_top_feedback(self):
        system = Chain(length=4, c=(0.5, 0.6, 0.7), alpha=1.0, beta=1.0)
        net, chan = net_for_system(system, np.array([0.1, 0.2, 0.3, 0.4]))
        assert len(chan.backward) == 3
        assert chan.backward[2][0, 0] == pytest.approx(0.7)

    def test_moment_mismatch_rejected(self):
        data, a, b = scalar_setup()
        system = A111(c1=1.0, alpha=a + 0.1, beta=b)
        with pytest.raises(ValueError, match="moments"):
            empirical_vs_ode(system, np.zeros(2), data, dt=1e-2, t_max=1.0)


class TestAgreement:
    def test_a111_first_order_in_dt(self):
        data, a, b = scalar_setup()
        system = A111(c1=1.0, alpha=a, beta=b)
        state0 = np.array([0.0, 0.0])
        coarse = empirical_vs_ode(system, state0, data, dt=1e-2, t_max=20.0)
        fine = empirical_vs_ode(system, state0, data, dt=5e-3, t_max=20.0)
        assert coarse.max_deviation < 1e-1
        ratio = coarse.max_deviation / fine.max_deviation
        assert 1.7 < ratio < 2.3

    def test_starting_at_fixed_point_never_deviates(self):
        data, a, b = scalar_setup(seed=3)
        system = A111(c1=1.0, alpha=a, beta=b)
        a1 = np.cbrt(a / b)
        state0 = np.array([a1, a / (b * a1)])
        report = empirical_vs_ode(system, state0, data, dt=1e-2, t_max=5.0)
        assert report.max_deviation < 1e-12

    def test_expansive_tracks(self):
        data, a, b = scalar_setup(seed=4, alpha=0.8)
        system = ExpansiveA1N1(c=(1.0, -0.5), alpha=a, beta=b)
        state0 = np.array([0.1, -0.1, 0.2, 0.0])
        report = empirical_vs_ode(system, state0, data, dt=5e-3, t_max=15.0)
        assert report.max_deviation < 5e-2

    def test_autoencoder_tracks(self):
        rng = SeededRng(5)
        data = autoencoder_identity(2, 300, rng)
        sii, sti = multivariate_moments(data)
        system = CompressiveAN1N(c=(1.0, 0.3), sigma_ii=sii, sigma_ti=sti)
        state0 = np.array([0.1, 0.0, 0.0, 0.1])
        report = empirical_vs_ode(system, state0, data, dt=5e-3, t_max=15.0)
        assert report.max_deviation < 5e-2

    def test_power_with_fprime_tracks(self):
        data = synthetic_power(2.0, 300, SeededRng(6), coeff=0.8)
        alpha, beta, gamma, delta = power_moments(data, 2.0)
        system = PowerA111(mu=2.0, c1=1.0, alpha=alpha, beta=beta, gamma=gamma, delta=delta)
        report = empirical_vs_ode(system, np.array([0.2, 0.1]), data, dt=2e-3, t_max=10.0)
        assert report.max_deviation < 5e-2

    def test_power_without_fprime_tracks(self):
        data = synthetic_power(2.0, 300, SeededRng(7), coeff=0.8)
        alpha, beta, gamma, delta = power_moments(data, 2.0)
        system = PowerA111(
            mu=2.0, c1=0.5, alpha=alpha, beta=beta, gamma=gamma, delta=delta,
            with_fprime=False,
        )
        report = empirical_vs_ode(system, np.array([0.4, 0.2]), data, dt=2e-3, t_max=5.0)
        assert report.max_deviation < 5e-2

    def test_gradient_mode_conserves_square_gaps(self):
        data, a, b = scalar_setup(seed=8)
        system = Chain(length=3, c=(1.0, 1.0), alpha=a, beta=b, channel_mode=GRADIENT)
        state0 = np.array([0.3, 0.4, 0.5])
        net, chan = net_for_system(system, state0)
        from deepchannel.train import apply_batch

        gaps0 = np.diff(state0**2)
        for _ in range(50000):  # coupling drift is O(lr t); lr=2e-5 over t=1
            apply_batch(net, chan, data.inputs, data.targets, lr=2e-5)
        weights = net_state_vector(system, net)
        gaps = np.diff(weights**2)
        assert np.max(np.abs(gaps - gaps0)) < 1e-6
        # and it tracked the ode
        traj = integrate(system, state0, dt=1e-3, t_max=1.0)
        np.testing.assert_allclose(weights, traj.endpoint, atol=1e-2)
