import numpy as np
import pytest

from deepchannel.dynamics.integrate import integrate
from deepchannel.dynamics.polynomial import CONVERGES, STATIONARY
from deepchannel.dynamics import predict as pred
from deepchannel.dynamics.systems import (
    A111,
    A1111,
    Chain,
    CompressiveAN1N,
    ExpansiveA1N1,
    GeneralThreeLayer,
    PowerA111,
)


class TestPredictA111:
    def test_from_origin_closed_form(self):
        report = pred.predict_a111(0.0, 0.0, c1=1.0, alpha=1.0, beta=1.0)
        assert report.classification == CONVERGES
        assert report.limit[0] == pytest.approx(2.0 ** (1.0 / 3.0), abs=1e-10)
        assert report.limit[1] == pytest.approx(2.0 ** (-1.0 / 3.0), abs=1e-10)
        assert report.residual < 1e-10

    def test_start_on_hyperbola_is_stationary(self):
        report = pred.predict_a111(2.0, 0.5, c1=1.0, alpha=1.0, beta=1.0)
        assert report.classification == STATIONARY
        np.testing.assert_allclose(report.limit, [2.0, 0.5])

    def test_lower_half_plane_root_selection_matches_integration(self):
        report = pred.predict_a111(0.0, -2.0, c1=1.0, alpha=1.0, beta=1.0)
        system = A111(c1=1.0, alpha=1.0, beta=1.0)
        traj = integrate(system, np.array([0.0, -2.0]), dt=1e-3, t_max=100.0)
        assert report.classification == CONVERGES
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)
        # the selected root solves a^3 - 4a - 2 = 0
        a = report.limit[0]
        assert a**3 - 4 * a - 2 == pytest.approx(0.0, abs=1e-9)

    def test_trivial_c1_zero(self):
        report = pred.predict_a111(2.0, 7.0, c1=0.0, alpha=1.0, beta=1.0)
        assert report.limit[0] == 2.0
        assert report.limit[1] == pytest.approx(0.5)
        assert "trivial_case" in report.notes

    def test_random_instances_match_integration(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            c1 = rng.uniform(0.5, 1.5) * rng.choice([-1, 1])
            alpha = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
            beta = rng.uniform(0.5, 2.0)
            state0 = rng.uniform(-1.5, 1.5, size=2)
            report = pred.predict_a111(state0[0], state0[1], c1, alpha, beta)
            assert report.converged
            if report.marginal:
                continue
            system = A111(c1=c1, alpha=alpha, beta=beta)
            traj = integrate(system, state0, dt=2e-3, t_max=400.0)
            np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)


class TestStability:
    def test_congruent_point_is_attractor(self):
        assert pred.stability_a111(1.0, 1.0, c1=1.0, beta=1.0) == "attractor"

    def test_inside_parabola_is_unstable(self):
        # a2 = -2 a1^2 / c1 lies inside the parabola: c1 a2 + a1^2 = -a1^2 < 0
        assert pred.stability_a111(1.0, -2.0, c1=1.0, beta=1.0) == "unstable"

    def test_small_c1_is_attractor(self):
        assert pred.stability_a111(0.5, -3.0, c1=1e-4, beta=1.0) == "attractor"

    def test_perturb_and_integrate_agrees(self):
        rng = np.random.default_rng(1)
        c1, beta = 1.0, 1.0
        for _ in range(20):
            alpha = rng.uniform(0.5, 1.5) * rng.choice([-1, 1])
            a1 = rng.uniform(0.3, 1.5) * rng.choice([-1, 1])
            a2 = alpha / (beta * a1)
            rate = beta * (c1 * a2 + a1**2)
            if abs(rate) < 1e-2:
                continue
            verdict = pred.stability_a111(a1, a2, c1, beta)
            system = A111(c1=c1, alpha=alpha, beta=beta)
            state0 = np.array([a1, a2]) + 1e-4 * rng.normal(size=2)
            traj = integrate(system, state0, dt=1e-3, t_max=60.0)
            if verdict == "attractor":
                assert np.linalg.norm(traj.endpoint - [a1, a2]) < 1e-2
            else:
                assert np.linalg.norm(traj.endpoint - [a1, a2]) > 1e-3


class TestPredictA1111:
    def test_leading_coefficient_closed_form(self):
        report = pred.predict_a1111((0.0, 0.0, 0.0), c1=1.0, c2=2.0, alpha=1.0, beta=1.0)
        assert report.polynomial.leading == pytest.approx(-0.25)

    def test_start_on_critical_surface_stationary(self):
        report = pred.predict_a1111((1.0, 1.0, 1.0), c1=1.0, c2=1.0, alpha=1.0, beta=1.0)
        assert report.classification == STATIONARY

    def test_matches_integration_from_origin(self):
        report = pred.predict_a1111((0.0, 0.0, 0.0), c1=1.0, c2=1.0, alpha=1.0, beta=1.0)
        system = A1111(c1=1.0, c2=1.0, alpha=1.0, beta=1.0)
        traj = integrate(system, np.zeros(3), dt=1e-3, t_max=200.0)
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)
        assert report.residual < 1e-10

    def test_reduced_case_c1_zero(self):
        report = pred.predict_a1111((0.5, 0.1, 0.2), c1=0.0, c2=1.0, alpha=1.0, beta=1.0)
        assert report.limit[0] == 0.5
        assert "reduced_case" in report.notes
        system = A1111(c1=0.0, c2=1.0, alpha=1.0, beta=1.0)
        traj = integrate(system, np.array([0.5, 0.1, 0.2]), dt=1e-3, t_max=200.0)
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)

    def test_reduced_case_c2_zero(self):
        report = pred.predict_a1111((0.1, 0.7, 0.2), c1=1.0, c2=0.0, alpha=1.0, beta=1.0)
        assert report.limit[1] == 0.7
        system = A1111(c1=1.0, c2=0.0, alpha=1.0, beta=1.0)
        traj = integrate(system, np.array([0.1, 0.7, 0.2]), dt=1e-3, t_max=200.0)
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)


class TestChainPolynomial:
    def test_degree_is_two_to_the_l_minus_one(self):
        for length, c in ((2, (1.0,)), (3, (1.0, 0.5)), (4, (1.0, 0.5, -0.8))):
            poly = pred.chain_polynomial(length, c, 1.0, 1.0, np.zeros(length))
            assert poly.degree == 2**length - 1
            assert poly.leading < 0

    def test_length_2_matches_a111_flow(self):
        state0 = np.array([0.3, -0.4])
        poly = pred.chain_polynomial(2, (0.9,), 1.3, 0.7, state0)
        report = pred.predict_a111(0.3, -0.4, 0.9, 1.3, 0.7)
        np.testing.assert_allclose(
            poly.coefficients, report.polynomial.coefficients, atol=1e-12
        )

    def test_length_3_matches_a1111_flow(self):
        state0 = np.array([0.2, 0.5, -0.1])
        poly = pred.chain_polynomial(3, (1.1, -0.6), 1.0, 1.0, state0)
        report = pred.predict_a1111(state0, 1.1, -0.6, 1.0, 1.0)
        np.testing.assert_allclose(
            poly.coefficients, report.polynomial.coefficients, atol=1e-12
        )

    def test_zero_feedback_weight_rejected(self):
        with pytest.raises(ValueError, match="sub-chain"):
            pred.chain_polynomial(3, (0.0, 1.0), 1.0, 1.0, np.zeros(3))

    def test_length_4_prediction_matches_integration(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            c = tuple(rng.uniform(0.5, 1.2, size=3) * rng.choice([-1, 1], size=3))
            state0 = rng.uniform(-0.8, 0.8, size=4)
            report = pred.predict_chain(4, c, 1.0, 1.0, state0)
            assert report.converged
            if report.marginal:
                continue
            system = Chain(length=4, c=c, alpha=1.0, beta=1.0)
            traj = integrate(system, state0, dt=1e-3, t_max=400.0)
            np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)


class TestPredictA1N1:
    def test_cubic_leading_coefficient(self):
        report = pred.predict_a1N1(
            np.zeros(2), np.zeros(2), c=np.array([1.0, 1.0]), alpha=1.0, beta=2.0
        )
        assert report.polynomial.leading == pytest.approx(-2.0)

    def test_width_one_matches_a111(self):
        r1 = pred.predict_a1N1(np.array([0.2]), np.array([-0.3]), np.array([0.8]), 1.0, 1.0)
        r2 = pred.predict_a111(0.2, -0.3, 0.8, 1.0, 1.0)
        np.testing.assert_allclose(np.array([r1.limit[0], r1.limit[1]]), r2.limit, atol=1e-10)

    def test_matches_integration(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            c = rng.uniform(0.5, 1.5, size=3) * rng.choice([-1, 1], size=3)
            a0 = rng.uniform(-0.5, 0.5, size=3)
            b0 = rng.uniform(-0.5, 0.5, size=3)
            report = pred.predict_a1N1(a0, b0, c, alpha=1.0, beta=1.0)
            assert report.converged
            system = ExpansiveA1N1(c=tuple(c), alpha=1.0, beta=1.0)
            traj = integrate(system, np.concatenate([a0, b0]), dt=1e-3, t_max=400.0)
            np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)
            assert report.residual < 1e-8

    def test_zero_channel_weight_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            pred.predict_a1N1(np.zeros(2), np.zeros(2), np.array([1.0, 0.0]), 1.0, 1.0)


class TestAutoencoder:
    def test_axis_channel_closed_form(self):
        report = pred.predict_autoencoder_N1N(np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))
        beta = 2.0 ** (1.0 / 3.0)
        np.testing.assert_allclose(report.limit[:2], [beta, 0.0], atol=1e-10)
        np.testing.assert_allclose(report.limit[2:], [1.0 / beta, 0.0], atol=1e-10)
        assert report.notes["beta"] == pytest.approx(beta)

    def test_fixed_point_start(self):
        c = np.array([0.6, -0.8])
        beta = 1.7
        a0 = beta * c
        b0 = c / (beta * (c @ c))
        system = CompressiveAN1N(c=tuple(c), sigma_ii=np.eye(2), sigma_ti=np.eye(2))
        traj = integrate(system, np.concatenate([a0, b0]), dt=1e-2, t_max=5.0)
        np.testing.assert_allclose(traj.states[-1], traj.states[0], atol=1e-12)

    def test_matches_integration_and_product_limit(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            n = 3
            c = rng.normal(size=n)
            a0 = 0.5 * rng.normal(size=n)
            b0 = 0.5 * rng.normal(size=n)
            report = pred.predict_autoencoder_N1N(a0, b0, c)
            system = CompressiveAN1N(c=tuple(c), sigma_ii=np.eye(n), sigma_ti=np.eye(n))
            traj = integrate(system, np.concatenate([a0, b0]), dt=1e-3, t_max=400.0)
            np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)
            a_star, b_star = traj.endpoint[:n], traj.endpoint[n:]
            p_star = np.outer(b_star, a_star)
            np.testing.assert_allclose(p_star, np.outer(c, c) / (c @ c), atol=1e-6)

    def test_lemma_conserved_quantity(self):
        rng = np.random.default_rng(8)
        n = 3
        c = rng.normal(size=n)
        system = CompressiveAN1N(c=tuple(c), sigma_ii=np.eye(n), sigma_ti=np.eye(n))
        state0 = 0.5 * rng.normal(size=2 * n)
        traj = integrate(system, state0, dt=1e-3, t_max=50.0)
        drift = pred.lemma_drift_AN1N(system, traj)
        assert np.max(drift) < 1e-8


class TestGeneral3Monitors:
    def make_instance(self, seed):
        rng = np.random.default_rng(seed)
        n0, n1, n2 = 3, 2, 3
        c1 = rng.normal(size=(n1, n2))
        basis = rng.normal(size=(n0, n0))
        sii = basis @ basis.T / n0 + 0.5 * np.eye(n0)
        sti = rng.normal(size=(n2, n0))
        system = GeneralThreeLayer((n0, n1, n2), c1, sii, sti)
        state0 = 0.3 * rng.normal(size=system.dim)
        return system, state0

    def test_eq90_drift_small(self):
        system, state0 = self.make_instance(0)
        traj = integrate(system, state0, dt=1e-3, t_max=50.0,
                         monitors=pred.monitor_general3(system), record_every=10)
        assert np.max(traj.monitors["eq90_drift"]) < 1e-8 * 50.0

    def test_v_rate_never_positive(self):
        system, state0 = self.make_instance(1)
        traj = integrate(system, state0, dt=1e-3, t_max=50.0,
                         monitors=pred.monitor_general3(system), record_every=10)
        assert np.max(traj.monitors["v_rate_max_eig"]) <= 1e-10

    def test_residual_drops(self):
        system, state0 = self.make_instance(2)
        traj = integrate(system, state0, dt=1e-2, t_max=300.0,
                         monitors=pred.monitor_general3(system), record_every=100)
        assert traj.monitors["residual"][-1] < 1e-6

    def test_v_matrix_monotone(self):
        system, state0 = self.make_instance(3)
        traj = integrate(system, state0, dt=1e-2, t_max=100.0, record_every=200)
        vs = [pred.v_matrix(system, s) for s in traj.states]
        for earlier, later in zip(vs[:-1], vs[1:]):
            top = np.linalg.eigvalsh(later - earlier)[-1]
            assert top <= 1e-8


class TestPower:
    def test_mu_one_matches_linear_prediction(self):
        r_pow = pred.predict_power_a111((0.1, 0.1), mu=1.0, c1=1.0, alpha=1.0, beta=1.0)
        r_lin = pred.predict_a111(0.1, 0.1, 1.0, 1.0, 1.0)
        np.testing.assert_allclose(r_pow.limit, r_lin.limit, atol=1e-9)

    def test_mu_two_endpoint_on_critical_curve(self):
        report = pred.predict_power_a111((0.1, 0.1), mu=2.0, c1=1.0, alpha=1.0, beta=1.0)
        system = PowerA111(mu=2.0, c1=1.0, alpha=1.0, beta=1.0)
        traj = integrate(system, np.array([0.1, 0.1]), dt=1e-3, t_max=400.0)
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)
        a1, a2 = traj.endpoint
        assert a2 == pytest.approx(1.0 / a1**2, abs=1e-6)

    def test_non_integer_mu(self):
        report = pred.predict_power_a111((0.2, 0.3), mu=1.5, c1=0.8, alpha=1.2, beta=0.9)
        system = PowerA111(mu=1.5, c1=0.8, alpha=1.2, beta=0.9)
        traj = integrate(system, np.array([0.2, 0.3]), dt=1e-3, t_max=400.0)
        np.testing.assert_allclose(report.limit, traj.endpoint, atol=1e-6)

    def test_hypothesis_violations_rejected(self):
        with pytest.raises(ValueError, match="convergence theorem"):
            pred.predict_power_a111((0.1, 0.1), mu=0.5, c1=1.0, alpha=1.0, beta=1.0)
        with pytest.raises(ValueError, match="nonnegative"):
            pred.predict_power_a111((-0.1, 0.1), mu=2.0, c1=1.0, alpha=1.0, beta=1.0)

    def test_nofprime_feasibility_verdict(self):
        bad = pred.check_power_nofprime(2.0, 1.0, alpha=1.0, beta=1.0, gamma=2.0, delta=1.0)
        assert not bad["feasible"]
        good = pred.check_power_nofprime(2.0, 1.0, alpha=1.0, beta=2.0, gamma=1.5, delta=3.0)
        assert good["feasible"]

    def test_nofprime_residuals_never_settle(self):
        system = PowerA111(
            mu=2.0, c1=0.5, alpha=1.0, beta=1.0, gamma=2.0, delta=1.0, with_fprime=False
        )
        traj = integrate(system, np.array([0.4, 0.2]), dt=1e-3, t_max=50.0,
                         monitors={"residual": lambda t, s, sys: float(sys.residual(s))})
        assert not traj.converged
        # the combined residual stays bounded away from zero along the run
        assert np.min(traj.monitors["residual"]) > 1e-3
