"""Closed-form fixed-point prediction for the learning-dynamics systems.

Each trajectory of the scalar-chain family is confined to an algebraic
curve fixed by the initial conditions (quadratic couplings between
consecutive weights, affine couplings across a hidden layer), which
collapses the flow to one dimension. The 1-D flow polynomial is built
here, classified with the root/sign analysis, and the remaining weights
are recovered through the couplings. Root selection is always delegated
to the sign analysis, never to nearest-root heuristics; a limit at a
(near-)multiple root is flagged marginal rather than asserted.
"""

from __future__ import annotations

import numpy as np

from .integrate import integrate
from .polynomial import (
    CONVERGES,
    STATIONARY,
    FixedPointReport,
    Polynomial,
    X,
    classify_1d,
    real_roots,
    solve_depressed_cubic,
)
from .systems import GeneralThreeLayer, PowerA111

CUBIC_CROSS_CHECK_TOL = 1e-10


def _limit_report(base: FixedPointReport, limit, residual, poly, notes=None):
    return FixedPointReport(
        classification=base.classification,
        limit=np.asarray(limit, dtype=np.float64),
        polynomial=poly,
        residual=float(residual),
        marginal=base.marginal,
        notes={**base.notes, **(notes or {})},
    )


def predict_a111(a1_0, a2_0, c1, alpha, beta) -> FixedPointReport:
    """Limit of the two-weight chain from (a1_0, a2_0).

    The trajectory lives on a2 = a1^2/(2 c1) + const, so a1 follows the
    cubic flow Q(a1) = c1 alpha - c1 beta C a1 - (beta/2) a1^3. The root
    actually reached is picked by sign analysis; the closed-form depressed
    cubic provides an independent cross-check of the root set.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if c1 == 0.0:
        if a1_0 == 0.0:
            # nothing moves: both updates carry a factor of a1 or c1
            return FixedPointReport(
                STATIONARY, np.array([0.0, a2_0]), None, 0.0,
                notes={"trivial_case": "c1=0 and a1(0)=0 freeze both weights"},
            )
        a2_star = alpha / (beta * a1_0)
        return FixedPointReport(
            CONVERGES, np.array([a1_0, a2_star]), None, 0.0,
            notes={"trivial_case": "c1=0 freezes a1; a2 descends its convex error"},
        )
    const = a2_0 - a1_0**2 / (2.0 * c1)
    flow = Polynomial([c1 * alpha, -c1 * beta * const, 0.0, -beta / 2.0])
    # independent route: roots of the depressed cubic a^3 + p a + q
    p_coef = 2.0 * c1 * a2_0 - a1_0**2
    q_coef = -2.0 * c1 * alpha / beta
    cubic_roots = solve_depressed_cubic(p_coef, q_coef)
    scan_roots = real_roots(flow)
    if scan_roots.size == cubic_roots.size:
        agreement = np.max(np.abs(scan_roots - cubic_roots)) if scan_roots.size else 0.0
        if agreement > CUBIC_CROSS_CHECK_TOL * max(1.0, np.max(np.abs(cubic_roots))):
            raise ArithmeticError(
                f"cubic root routes disagree by {agreement:.3e}"
            )
    report = classify_1d(flow, a1_0)
    if not report.converged:
        return report
    a1_star = float(report.limit[0])
    a2_star = a1_star**2 / (2.0 * c1) + const
    residual = abs(alpha - beta * a1_star * a2_star)
    return _limit_report(report, [a1_star, a2_star], residual, flow)


def stability_a111(a1, a2, c1, beta):
    """Stability of a point on the critical hyperbola: sign of beta (c1 a2 + a1^2).

    Perturbations w = a2 u + a1 v decay like exp(-beta (c1 a2 + a1^2) t).
    """
    rate = beta * (c1 * a2 + a1**2)
    if rate > 0:
        return "attractor"
    if rate < 0:
        return "unstable"
    return "marginal"


def predict_a1111(state0, c1, c2, alpha, beta) -> FixedPointReport:
    """Limit of the three-weight chain via the degree-7 flow for a1.

    A zero feedback weight freezes its layer and reduces the system to the
    two-weight case on rescaled data, which is solved and reported instead
    of raising.
    """
    a1_0, a2_0, a3_0 = (float(v) for v in state0)
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if c1 == 0.0:
        # a1 frozen at a: (a2, a3) follows the two-weight chain with
        # moments (a alpha, a^2 beta)
        if a1_0 == 0.0:
            return FixedPointReport(
                STATIONARY, np.array([0.0, a2_0, a3_0]), None, 0.0,
                notes={"reduced_case": "c1=0, a1(0)=0: all activity is zero"},
            )
        sub = predict_a111(a2_0, a3_0, c2, a1_0 * alpha, a1_0**2 * beta)
        if not sub.converged:
            return sub
        limit = np.array([a1_0, sub.limit[0], sub.limit[1]])
        residual = abs(alpha - beta * np.prod(limit))
        return _limit_report(sub, limit, residual, sub.polynomial,
                             notes={"reduced_case": "c1=0 freezes a1"})
    if c2 == 0.0:
        # a2 frozen: (a1, a3/a2(0)) is the two-weight chain with beta a2^2
        if a2_0 == 0.0:
            return FixedPointReport(
                "diverges_plus_finite_time" if c1 * alpha > 0 else "diverges_minus_finite_time",
                None, None, float("inf"),
                notes={"reduced_case": "c2=0, a2(0)=0: a1 drifts at constant rate"},
            ) if alpha != 0 else FixedPointReport(
                STATIONARY, np.array([a1_0, 0.0, a3_0]), None, 0.0,
                notes={"reduced_case": "c2=0, a2(0)=0, alpha=0"},
            )
        sub = predict_a111(a1_0, a3_0 / a2_0, c1, alpha, beta * a2_0**2)
        if not sub.converged:
            return sub
        limit = np.array([sub.limit[0], a2_0, sub.limit[1] * a2_0])
        residual = abs(alpha - beta * np.prod(limit))
        return _limit_report(sub, limit, residual, sub.polynomial,
                             notes={"reduced_case": "c2=0 freezes a2"})
    k1 = a2_0 - (c2 / (2.0 * c1)) * a1_0**2
    k2 = a3_0 - a2_0**2 / (2.0 * c2)
    poly_a2 = Polynomial([k1, 0.0, c2 / (2.0 * c1)])
    poly_a3 = (1.0 / (2.0 * c2)) * (poly_a2 * poly_a2) + k2
    product = X * poly_a2 * poly_a3
    flow = c1 * (Polynomial([alpha]) - beta * product)
    report = classify_1d(flow, a1_0)
    if not report.converged:
        return report
    a1_star = float(report.limit[0])
    limit = np.array([a1_star, poly_a2(a1_star), poly_a3(a1_star)])
    residual = abs(alpha - beta * np.prod(limit))
    return _limit_report(report, limit, residual, flow)


def chain_polynomial(length, c, alpha, beta, state0) -> Polynomial:
    """The 1-D flow polynomial for a1 in a length-L chain: degree 2^L - 1,
    negative leading coefficient. Integration constants come from state0
    through the pairwise quadratic couplings."""
    state0 = np.asarray(state0, dtype=np.float64)
    if state0.shape != (length,):
        raise ValueError(f"state0 must have length {length}")
    c_full = list(np.asarray(c, dtype=np.float64)) + [1.0]
    if len(c_full) != length:
        raise ValueError(f"need {length - 1} feedback weights")
    for i, ci in enumerate(c_full[:-1], start=1):
        if ci == 0.0:
            raise ValueError(
                f"c_{i}=0 freezes layer {i}; analyze the sub-chain without it"
            )
    polys = [X]
    for i in range(1, length):
        ratio = c_full[i] / (2.0 * c_full[i - 1])
        k = state0[i] - ratio * state0[i - 1] ** 2
        polys.append(ratio * (polys[-1] * polys[-1]) + k)
    product = polys[0]
    for p in polys[1:]:
        product = product * p
    flow = c_full[0] * (Polynomial([alpha]) - beta * product)
    assert flow.degree == 2**length - 1
    assert flow.leading < 0 or beta <= 0
    return flow


def predict_chain(length, c, alpha, beta, state0) -> FixedPointReport:
    """Classify the chain flow from state0 and map a1's limit through the
    quadratic couplings to every layer."""
    state0 = np.asarray(state0, dtype=np.float64)
    flow = chain_polynomial(length, c, alpha, beta, state0)
    report = classify_1d(flow, state0[0])
    if not report.converged:
        return report
    c_full = list(np.asarray(c, dtype=np.float64)) + [1.0]
    limit = [float(report.limit[0])]
    for i in range(1, length):
        ratio = c_full[i] / (2.0 * c_full[i - 1])
        k = state0[i] - ratio * state0[i - 1] ** 2
        limit.append(ratio * limit[-1] ** 2 + k)
    residual = abs(alpha - beta * np.prod(limit))
    return _limit_report(report, limit, residual, flow)


def predict_a1N1(a0, b0, c, alpha, beta) -> FixedPointReport:
    """Limit of the expansive one-hidden-layer system.

    Every a_i is affine in a1 (slope c_i/c_1) and every b_i quadratic in
    a_i, so the flow for a1 is a cubic with leading coefficient
    -(beta/2) sum(c_i^2) / c_1^2.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    b0 = np.asarray(b0, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    if a0.shape != (n,) or b0.shape != (n,):
        raise ValueError("a0, b0, c must share one length")
    if np.any(c == 0.0):
        raise ValueError("zero feedback weights freeze their unit; remove them first")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    slopes = c / c[0]
    offsets = a0 - slopes * a0[0]  # a_i = slopes_i a1 + offsets_i
    quad_consts = b0 - a0**2 / (2.0 * c)  # b_i = a_i^2/(2 c_i) + const_i
    product = None
    for i in range(n):
        a_poly = Polynomial([offsets[i], slopes[i]])
        b_poly = (1.0 / (2.0 * c[i])) * (a_poly * a_poly) + quad_consts[i]
        term = a_poly * b_poly
        product = term if product is None else product + term
    flow = c[0] * (Polynomial([alpha]) - beta * product)
    expected_leading = -(beta / 2.0) * float(np.sum(c**2)) / c[0] ** 2
    if abs(flow.leading - expected_leading) > 1e-9 * abs(expected_leading):
        raise ArithmeticError("cubic leading coefficient does not match its closed form")
    report = classify_1d(flow, a0[0])
    if not report.converged:
        return report
    a1_star = float(report.limit[0])
    a_star = slopes * a1_star + offsets
    b_star = a_star**2 / (2.0 * c) + quad_consts
    residual = abs(alpha - beta * float(np.sum(a_star * b_star)))
    return _limit_report(report, np.concatenate([a_star, b_star]), residual, flow)


def predict_autoencoder_N1N(a0, b0, c) -> FixedPointReport:
    """Compressive autoencoder with identity data moments.

    Writes A(t) = f(t) C + g(t) A0 with g -> 0; f approaches a positive
    root of 1 - (t^2 ||C||^2 / 2 + K) t with K = C.B0 - ||A0||^2 / 2, so
    A -> beta C, B -> C^t/(beta ||C||^2), BA -> C^t C / ||C||^2.
    """
    a0 = np.asarray(a0, dtype=np.float64).ravel()
    b0 = np.asarray(b0, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    if np.all(c == 0.0):
        raise ValueError("the channel vector C must be nonzero")
    k = float(c @ b0 - 0.5 * a0 @ a0)
    norm2 = float(c @ c)
    cubic = Polynomial([1.0, -k, 0.0, -0.5 * norm2])
    report = classify_1d(cubic, 0.0)
    # value 1 at t=0 with negative leading coefficient: a positive root
    # always exists and the flow from 0 reaches the smallest one
    assert report.converged, "the cubic flow from 0 cannot diverge"
    beta_star = float(report.limit[0])
    assert beta_star > 0
    a_star = beta_star * c
    b_star = c / (beta_star * norm2)
    limit = np.concatenate([a_star, b_star])
    p_star = np.outer(b_star, a_star)
    residual = float(np.linalg.norm(p_star - np.outer(c, c) / norm2))
    return _limit_report(
        report, limit, residual, cubic,
        notes={"beta": beta_star, "conserved_offset": k},
    )


def lemma_drift_AN1N(system, trajectory):
    """|C.B - ||A||^2/2 - K| along a compressive trajectory (conserved)."""
    n = system.width
    a = trajectory.states[:, :n]
    b = trajectory.states[:, n:]
    cb = b @ np.asarray(system.c_arr)
    series = cb - 0.5 * np.sum(a * a, axis=1)
    return np.abs(series - series[0])


def predict_power_a111(state0, mu, c1, alpha, beta) -> FixedPointReport:
    """Limit of the power-nonlinearity chain (derivative included).

    Hypotheses: alpha, beta, c1 > 0, mu >= 1, nonnegative start. The flow
    for a1 is mu c1 a1^(mu-1) g(a1) with
    g(t) = alpha - beta (t^2/(2 c1 mu) + K) t^mu; since g(0) = alpha > 0
    the weight grows away from zero and settles at a positive root of g.
    """
    a1_0, a2_0 = (float(v) for v in state0)
    if not (alpha > 0 and beta > 0 and c1 > 0 and mu >= 1):
        raise ValueError(
            "the convergence theorem needs alpha, beta, c1 > 0 and mu >= 1"
        )
    if a1_0 < 0 or a2_0 < 0:
        raise ValueError("the convergence theorem needs a nonnegative start")
    k = a2_0 - a1_0**2 / (2.0 * c1 * mu)

    def g(t):
        return alpha - beta * (t**2 / (2.0 * c1 * mu) + k) * t**mu

    if a1_0 == 0.0 and mu > 1:
        return FixedPointReport(
            STATIONARY, np.array([0.0, a2_0]), None, abs(alpha),
            notes={"boundary": "a1(0)=0 with mu>1 never moves"},
        )
    # positive roots of g by doubling out to a sign change, then scanning
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("no positive root found; the flow is malformed")
    grid = np.linspace(0.0, hi, 2049)
    vals = g(grid)
    roots = []
    for lo_x, hi_x, lo_v, hi_v in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if lo_v == 0.0:
            roots.append(lo_x)
        elif lo_v * hi_v < 0:
            a, b = lo_x, hi_x
            for _ in range(200):
                mid = 0.5 * (a + b)
                if g(mid) == 0.0:
                    a = b = mid
                    break
                if (g(mid) > 0) == (lo_v > 0):
                    a = mid
                else:
                    b = mid
                if b - a < 1e-14 * max(1.0, b):
                    break
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    roots = np.array(sorted(r for r in roots if r > 0))
    # sign analysis on (0, inf): identical to the polynomial case because
    # the a1^(mu-1) prefactor is positive there
    if roots.size == 0:
        raise ArithmeticError("no positive root found; the flow is malformed")
    notes = {}
    if np.min(np.abs(roots - a1_0)) <= 1e-9 * max(1.0, a1_0):
        a1_star = roots[np.argmin(np.abs(roots - a1_0))]
        kind = STATIONARY
    else:
        idx = np.searchsorted(roots, a1_0)
        if idx == 0:
            a1_star = roots[0]  # g > 0 below the first positive root
        elif idx == roots.size:
            a1_star = roots[-1]  # leading term negative: g < 0 beyond the last
        else:
            a1_star = roots[idx] if g(a1_0) > 0 else roots[idx - 1]
        kind = CONVERGES
        if a1_star == roots[0] and a1_0 < roots[0] and g(a1_0) < 0:
            # decreasing toward the zero boundary; reported, not asserted
            notes["approaches_zero_boundary"] = True
            a1_star = 0.0
    a2_star = a1_star**2 / (2.0 * c1 * mu) + k
    residual = abs(alpha - beta * a2_star * a1_star**mu) if a1_star > 0 else abs(alpha)
    eps = 1e-6 * max(1.0, a1_star)
    marginal = a1_star > 0 and abs(g(a1_star + eps) - g(a1_star - eps)) / (2 * eps) < 1e-8
    return FixedPointReport(
        kind, np.array([a1_star, a2_star]), None, residual, marginal=marginal, notes=notes
    )


def check_power_nofprime(mu, c1, alpha, beta, gamma, delta, tol=1e-12):
    """Whether the derivative-free power system can have fixed points at all:
    it needs alpha/beta = gamma/delta so both critical equations share a
    solution."""
    feasible = abs(alpha / beta - gamma / delta) <= tol * max(
        1.0, abs(alpha / beta), abs(gamma / delta)
    )
    return {
        "feasible": feasible,
        "primary_target": alpha / beta,
        "presynaptic_target": gamma / delta,
        "note": None if feasible else "the two critical equations are incompatible",
    }


def theorem8_target(system: GeneralThreeLayer):
    """C1 Sigma_TI Sigma_II^{-1}, the provable limit of C1 A2 A1."""
    return system.c1 @ system.sigma_ti @ np.linalg.inv(system.sigma_ii)


def monitor_general3(system: GeneralThreeLayer):
    """Monitors for the three-layer system, for use with integrate():

    - eq90_drift: Frobenius drift of (C1 A2) + (C1 A2)^t - A1 A1^t
    - v_rate_max_eig: top eigenvalue of dV/dt = -2 U Sigma_II U^t (<= 0)
    - residual: ||C1 A2 A1 - C1 Sigma_TI Sigma_II^{-1}||_F (-> 0)
    - a1_norm: ||A1||_F (bounded)
    """
    target = theorem8_target(system)
    sigma_inv = np.linalg.inv(system.sigma_ii)
    baseline = {}

    def conserved(state):
        a1, a2 = system.split(state)
        w = system.c1 @ a2
        return w + w.T - a1 @ a1.T

    def eq90_drift(t, state, _):
        m = conserved(state)
        if "m0" not in baseline:
            baseline["m0"] = m
        return float(np.linalg.norm(m - baseline["m0"]))

    def v_rate_max_eig(t, state, _):
        u = system.c1 @ system.error_matrix(state) @ sigma_inv
        rate = -2.0 * u @ system.sigma_ii @ u.T
        return float(np.linalg.eigvalsh(rate)[-1])

    def residual(t, state, _):
        a1, a2 = system.split(state)
        return float(np.linalg.norm(system.c1 @ a2 @ a1 - target))

    def a1_norm(t, state, _):
        a1, _2 = system.split(state)
        return float(np.linalg.norm(a1))

    return {
        "eq90_drift": eq90_drift,
        "v_rate_max_eig": v_rate_max_eig,
        "residual": residual,
        "a1_norm": a1_norm,
    }


def v_matrix(system: GeneralThreeLayer, state):
    """V = (C1 A2)(C1 A2)^t - A1 K^t - K A1^t with K the theorem-8 target;
    matrix-monotone non-increasing along trajectories."""
    a1, a2 = system.split(state)
    w = system.c1 @ a2
    k = theorem8_target(system)
    return w @ w.T - a1 @ k.T - k @ a1.T
