import numpy as np
import pytest

from funcexp.bspline import make_basis


def simpson_gram(basis, per_span=2000):
    """Gram matrix by composite Simpson quadrature on each knot span.

    Span endpoints are nudged inward so one-sided limits are used at the
    jumps of order-1 bases.
    """
    s = np.linspace(0.0, 1.0, per_span + 1)
    w = np.full(per_span + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w /= 3.0 * per_span
    knots = basis.distinct_knots
    G = np.zeros((basis.K, basis.K))
    for a, b in zip(knots[:-1], knots[1:]):
        t = a + (b - a) * s
        t[0] += 1e-13
        t[-1] -= 1e-13
        B = basis(t)
        G += (b - a) * (B * w[:, None]).T @ B
    return G


def naive_bspline(knots, i, m, t):
    """Textbook Cox-de Boor recursion, scalar and unvectorized (0-based i)."""
    if m == 1:
        if knots[i] <= t < knots[i + 1]:
            return 1.0
        # t = 1 belongs to the last nonempty span
        if t == knots[-1] and knots[i] < knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = right = 0.0
    d1 = knots[i + m - 1] - knots[i]
    if d1 > 0:
        left = (t - knots[i]) / d1 * naive_bspline(knots, i, m - 1, t)
    d2 = knots[i + m] - knots[i + 1]
    if d2 > 0:
        right = (knots[i + m] - t) / d2 * naive_bspline(knots, i + 1, m - 1, t)
    return left + right


# Divisible by every span count up to 12, so no grid cell straddles a knot.
MIDPOINT_CELLS = 4 * 27720


def curve_l2_midpoint(basis, A, B):
    """L2 distances between rows of ``A`` and ``B`` by a dense midpoint rule."""
    t = (np.arange(MIDPOINT_CELLS) + 0.5) / MIDPOINT_CELLS
    diff = basis(t) @ (np.atleast_2d(A) - np.atleast_2d(B)).T
    return np.sqrt(np.mean(diff**2, axis=0))


ALL_BASES = [(K, m) for m in range(1, 6) for K in range(m, 13)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cubic7():
    return make_basis(7, 4)
