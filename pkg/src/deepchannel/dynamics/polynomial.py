"""Real-coefficient polynomials in one variable and the 1-D flow classifier.

The central object is the autonomous scalar flow dx/dt = Q(x): its limit
from any starting point is determined entirely by the real roots of Q and
the sign of Q between them. Root finding works by recursion on the
derivative (between consecutive critical points the polynomial is
monotone), bracketing sign changes inside a Cauchy bound and polishing
with bisection plus Newton. A closed-form depressed-cubic solver provides
an independent second path for the cubic cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

CONVERGES = "converges_to"
DIVERGES_PLUS = "diverges_plus_finite_time"
DIVERGES_MINUS = "diverges_minus_finite_time"
STATIONARY = "stationary"


@dataclass(frozen=True)
class Polynomial:
    """Coefficients in ascending degree order; trailing zeros trimmed."""

    coefficients: tuple

    def __init__(self, coefficients):
        coeffs = np.asarray(coefficients, dtype=np.float64)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        nz = np.nonzero(coeffs)[0]
        if nz.size == 0:
            raise ValueError("the zero polynomial has no degree")
        object.__setattr__(self, "coefficients", tuple(coeffs[: nz[-1] + 1]))

    @property
    def degree(self):
        return len(self.coefficients) - 1

    @property
    def leading(self):
        return self.coefficients[-1]

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)

    def derivative(self):
        return Polynomial(npoly.polyder(self.coefficients))

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polymul(self.coefficients, other.coefficients))
        return Polynomial(np.asarray(self.coefficients) * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polyadd(self.coefficients, other.coefficients))
        return Polynomial(npoly.polyadd(self.coefficients, [other]))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polysub(self.coefficients, other.coefficients))
        return self + (-other)

    def __neg__(self):
        return Polynomial([-c for c in self.coefficients])


X = Polynomial([0.0, 1.0])


def cauchy_bound(poly: Polynomial):
    """All real roots lie in [-b, b]."""
    c = np.asarray(poly.coefficients)
    return 1.0 + float(np.max(np.abs(c[:-1])) / abs(c[-1])) if poly.degree > 0 else 1.0


def _refine_root(f, df, lo, hi, tol=1e-13):
    """Root of monotone f on [lo, hi] with f(lo) f(hi) < 0: bisection + Newton."""
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, abs(mid)):
            break
    x = 0.5 * (lo + hi)
    for _ in range(60):
        d = df(x)
        if d == 0.0:
            break
        step = f(x) / d
        x_new = x - step
        if not lo - 1e-9 <= x_new <= hi + 1e-9:
            break  # Newton left the bracket; bisected value is already good
        x = x_new
        if abs(step) <= tol * max(1.0, abs(x)):
            break
    return x


def _evaluation_scale(poly: Polynomial, x):
    """sum_k |a_k| |x|^k: the natural magnitude against which poly(x) ~ 0."""
    coeffs = np.abs(np.asarray(poly.coefficients))
    return float(coeffs @ np.abs(x) ** np.arange(coeffs.size))


def real_roots(poly: Polynomial, multiple_tol=1e-9):
    """All real roots, ascending. Even-multiplicity (touching) roots are
    recovered at the derivative's critical points; "numerically zero" there
    is judged against the local evaluation scale sum |a_k| |c|^k so that
    huge values near the Cauchy bound cannot smear the tolerance."""
    if poly.degree == 0:
        return np.array([])
    if poly.degree == 1:
        c0, c1 = poly.coefficients
        return np.array([-c0 / c1])
    dpoly = poly.derivative()
    crit = real_roots(dpoly, multiple_tol)
    bound = cauchy_bound(poly)
    knots = [-bound] + [c for c in crit if -bound < c < bound] + [bound]
    roots = []
    dfun = dpoly.__call__
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = poly(lo), poly(hi)
        if flo == 0.0:
            roots.append(lo)
        if flo * fhi < 0:
            roots.append(_refine_root(poly.__call__, dfun, lo, hi))
    if poly(knots[-1]) == 0.0:
        roots.append(knots[-1])
    # touching roots sit at critical points where the value nearly vanishes
    for c in crit:
        if abs(poly(c)) <= multiple_tol * max(1e-300, _evaluation_scale(poly, c)):
            roots.append(c)
    roots = np.array(sorted(roots))
    if roots.size > 1:
        gaps = np.diff(roots)
        local = np.maximum(1.0, np.abs(roots[1:]))
        roots = roots[np.concatenate([[True], gaps > 1e-9 * local])]
    return roots


def solve_depressed_cubic(p, q):
    """Real roots of x^3 + p x + q = 0, ascending (closed form)."""
    if p == 0.0 and q == 0.0:
        return np.array([0.0])
    disc = -4.0 * p**3 - 27.0 * q**2
    if disc > 0:
        # three distinct real roots (requires p < 0)
        m = 2.0 * np.sqrt(-p / 3.0)
        theta = np.arccos(np.clip(3.0 * q / (p * m), -1.0, 1.0)) / 3.0
        roots = np.array([m * np.cos(theta - 2.0 * np.pi * k / 3.0) for k in range(3)])
        return np.sort(roots)
    if disc < 0:
        # one real root (Cardano)
        half_q = q / 2.0
        shift = np.sqrt(half_q**2 + (p / 3.0) ** 3)
        root = np.cbrt(-half_q + shift) + np.cbrt(-half_q - shift)
        return np.array([root])
    # multiple roots
    if p == 0.0:
        return np.array([np.cbrt(-q)])
    simple = 3.0 * q / p
    double = -3.0 * q / (2.0 * p)
    return np.sort(np.array([simple, double]))


@dataclass
class FixedPointReport:
    """Outcome of a 1-D flow classification or a full fixed-point prediction."""

    classification: str
    limit: np.ndarray | None
    polynomial: Polynomial | None
    residual: float
    marginal: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.classification in (CONVERGES, STATIONARY)

    def to_jsonable(self):
        def plain(value):
            if isinstance(value, (np.floating, np.integer)):
                return value.item()
            if isinstance(value, np.ndarray):
                return value.tolist()
            return value

        return {
            "classification": self.classification,
            "limit": None if self.limit is None else [float(v) for v in np.atleast_1d(self.limit)],
            "polynomial": None
            if self.polynomial is None
            else [float(c) for c in self.polynomial.coefficients],
            "residual": float(self.residual),
            "marginal": bool(self.marginal),
            "notes": {k: plain(v) for k, v in self.notes.items()},
        }


def classify_1d(q: Polynomial, x0, root_tol=1e-9) -> FixedPointReport:
    """Limit of dx/dt = Q(x) from x0 by root ordering and interval signs.

    Divergence labels carry the finite-horizon sense of superlinear flows;
    a degree-1 flow escapes in infinite time but is labeled the same way.
    """
    if q.degree < 1:
        raise ValueError("classification needs a polynomial of degree >= 1")
    roots = real_roots(q)
    x0 = float(x0)
    scale = max(1.0, abs(x0))
    dq = q.derivative()

    def report(kind, limit):
        if limit is None:
            return FixedPointReport(kind, None, q, float("inf"))
        marginal = abs(dq(limit)) <= 1e-8 * max(1.0, abs(q.leading))
        return FixedPointReport(kind, np.array([limit]), q, abs(q(limit)), marginal=marginal)

    if roots.size and np.min(np.abs(roots - x0)) <= root_tol * scale:
        nearest = roots[np.argmin(np.abs(roots - x0))]
        rep = report(STATIONARY, nearest)
        return rep
    value = q(x0)
    if value == 0.0:  # exactly at a root that the finder missed
        return report(STATIONARY, x0)
    if roots.size == 0:
        return report(DIVERGES_PLUS if value > 0 else DIVERGES_MINUS, None)
    if x0 < roots[0]:
        return report(CONVERGES, roots[0]) if value > 0 else report(DIVERGES_MINUS, None)
    if x0 > roots[-1]:
        return report(DIVERGES_PLUS, None) if value > 0 else report(CONVERGES, roots[-1])
    left = roots[np.searchsorted(roots, x0) - 1]
    right = roots[np.searchsorted(roots, x0)]
    return report(CONVERGES, right if value > 0 else left)
