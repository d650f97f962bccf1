"""Phase-portrait export for the two-weight chain.

Produces the raw vector field on a rectangular grid (with the sign of the
product rate at each node) plus sampled overlay polylines for the two
distinguished curves: the critical hyperbola a1 a2 = alpha/beta and the
parabola a2 = -a1^2/c1 separating stable from unstable critical points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import A111


@dataclass
class VectorField:
    a1: np.ndarray  # flattened grid
    a2: np.ndarray
    da1: np.ndarray
    da2: np.ndarray
    dp_sign: np.ndarray
    hyperbola: np.ndarray  # (k, 2) polyline points, NaN row-separated branches
    parabola: np.ndarray  # (k, 2)

    def rows(self):
        """Tidy rows: (kind, a1, a2, da1, da2, sign_dP)."""
        out = []
        for i in range(self.a1.size):
            out.append(
                ("node", self.a1[i], self.a2[i], self.da1[i], self.da2[i], self.dp_sign[i])
            )
        for name, line in (("hyperbola", self.hyperbola), ("parabola", self.parabola)):
            for x, y in line:
                out.append((name, x, y, "", "", ""))
        return out


def vector_field(c1, alpha, beta, a1_range, a2_range, samples=400) -> VectorField:
    """Evaluate the exact rhs of the two-weight system on a grid.

    a1_range/a2_range are (lo, hi, count) triples.
    """
    system = A111(c1=c1, alpha=alpha, beta=beta)
    a1_axis = np.linspace(*a1_range)
    a2_axis = np.linspace(*a2_range)
    g1, g2 = np.meshgrid(a1_axis, a2_axis, indexing="ij")
    states = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    vel = system.rhs(states)
    dp = system.product_rate(states)
    lo, hi = a1_range[0], a1_range[1]
    xs = np.linspace(lo, hi, samples)
    para = np.stack([xs, -(xs**2) / c1], axis=-1) if c1 != 0 else np.empty((0, 2))
    # hyperbola a2 = alpha/(beta a1), one branch per sign, NaN separator
    eps = 1e-3 * max(1.0, abs(hi - lo))
    branches = []
    for sel in (xs < -eps, xs > eps):
        if np.any(sel):
            branches.append(np.stack([xs[sel], alpha / (beta * xs[sel])], axis=-1))
            branches.append(np.array([[np.nan, np.nan]]))
    hyper = np.concatenate(branches[:-1]) if branches else np.empty((0, 2))
    return VectorField(
        a1=states[:, 0],
        a2=states[:, 1],
        da1=vel[:, 0],
        da2=vel[:, 1],
        dp_sign=np.sign(dp),
        hyperbola=hyper,
        parabola=para,
    )
