"""Clamped uniform B-spline bases on [0, 1].

A basis of ``K`` functions of order ``m`` (degree ``m - 1``) is built on a
knot vector of length ``K + m`` whose first and last ``m`` knots are pinned to
0 and 1. Everything downstream (distances, designs, kernels) works on the
coefficient vector of a curve, so the basis also carries the Gram matrix
``J[i, j] = int_0^1 B_i B_j dt`` and the location where each basis function
peaks.

Indices are zero-based throughout: basis function ``i`` runs from 0 to K-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "BSplineBasis",
    "FunctionalCurve",
    "make_basis",
    "basis_matrix",
    "eval_basis",
    "eval_curve",
    "gram_matrix",
    "moment_vector",
    "basis_peak",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """Clamped uniform B-spline basis.

    Attributes
    ----------
    K : int
        Number of basis functions.
    m : int
        Spline order; 1 is piecewise constant, 4 is cubic.
    knots : ndarray, shape (K + m,)
        Clamped knot vector.
    gram : ndarray, shape (K, K)
        Exact Gram matrix of pairwise basis products.
    peaks : ndarray, shape (K,)
        Argmax of each basis function on [0, 1].
    """

    K: int
    m: int
    knots: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    peaks: np.ndarray = field(repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BSplineBasis):
            return NotImplemented
        return self.K == other.K and self.m == other.m

    def __hash__(self) -> int:
        return hash((self.K, self.m))

    @property
    def distinct_knots(self) -> np.ndarray:
        return np.unique(self.knots)

    def __call__(self, t) -> np.ndarray:
        return basis_matrix(self, t)


def _clamped_knots(K: int, m: int) -> np.ndarray:
    interior = np.linspace(0.0, 1.0, K - m + 2)[1:-1]
    return np.concatenate([np.zeros(m), interior, np.ones(m)])


def _cox_de_boor(knots: np.ndarray, K: int, m: int, t: np.ndarray) -> np.ndarray:
    """Evaluate all K basis functions at ``t``; returns shape (len(t), K)."""
    t = np.asarray(t, dtype=float)
    n_spans = K + m - 1
    lo, hi = knots[:-1], knots[1:]
    N = ((t[:, None] >= lo[None, :]) & (t[:, None] < hi[None, :])).astype(float)
    # t == 1 goes to the last nonempty span so the bases still sum to one there.
    N[t == 1.0, :] = 0.0
    N[t == 1.0, K - 1] = 1.0

    for r in range(2, m + 1):
        count = n_spans - (r - 1)
        out = np.zeros((t.size, count))
        for j in range(count):
            left_den = knots[j + r - 1] - knots[j]
            right_den = knots[j + r] - knots[j + 1]
            if left_den > 0.0:
                out[:, j] += (t - knots[j]) / left_den * N[:, j]
            if right_den > 0.0:
                out[:, j] += (knots[j + r] - t) / right_den * N[:, j + 1]
        N = out
    return N


def _check_t(t) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    return arr


def basis_matrix(basis: BSplineBasis, t) -> np.ndarray:
    """Values of every basis function at the points ``t``.

    Returns an array of shape ``(len(t), K)``.
    """
    return _cox_de_boor(basis.knots, basis.K, basis.m, _check_t(t))


def eval_basis(basis: BSplineBasis, i: int, t):
    """Value of basis function ``i`` at ``t`` (scalar or array)."""
    if not 0 <= i < basis.K:
        raise IndexError(f"basis index {i} outside 0..{basis.K - 1}")
    vals = basis_matrix(basis, t)[:, i]
    return float(vals[0]) if np.ndim(t) == 0 else vals


def _span_quadrature(knots: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on every nonempty knot span."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    spans = np.unique(knots)
    a, b = spans[:-1], spans[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def gram_matrix(basis: BSplineBasis) -> np.ndarray:
    """Gram matrix ``J[i, j] = int_0^1 B_i(t) B_j(t) dt``.

    Exact up to rounding: the integrand has degree 2(m - 1) on each span and
    m Gauss-Legendre nodes per span integrate that exactly.
    """
    return _gram(basis.knots, basis.K, basis.m)


def _gram(knots: np.ndarray, K: int, m: int) -> np.ndarray:
    nodes, weights = _span_quadrature(knots, m)
    B = _cox_de_boor(knots, K, m, nodes)
    J = B.T @ (weights[:, None] * B)
    return 0.5 * (J + J.T)


def moment_vector(basis: BSplineBasis, p: int) -> np.ndarray:
    """Per-basis moments ``v[i] = int_0^1 t**p B_i(t) dt`` for ``p`` in {0, 1}.

    With these, ``int t**p f(t) dt`` for a curve is just ``beta @ v``.
    """
    if p not in (0, 1):
        raise ValueError("only moments of power 0 and 1 are supported")
    nodes, weights = _span_quadrature(basis.knots, basis.m + 1)
    B = _cox_de_boor(basis.knots, basis.K, basis.m, nodes)
    return (weights * nodes**p) @ B


def _golden_max(fun, a: float, b: float, tol: float = 1e-8) -> float:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _peaks(knots: np.ndarray, K: int, m: int) -> np.ndarray:
    if m == 1:
        # Flat pieces: take the midpoint of each span as the canonical argmax.
        return 0.5 * (knots[:K] + knots[1 : K + 1])
    grid = np.linspace(0.0, 1.0, 1001)
    B = _cox_de_boor(knots, K, m, grid)
    peaks = np.empty(K)
    for i in range(K):
        j = int(np.argmax(B[:, i]))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]

        def value(s, i=i):
            return _cox_de_boor(knots, K, m, np.array([s]))[0, i]

        s = _golden_max(value, a, b)
        # The bracket ends may beat the interior (clamped end bases), and a
        # knot inside the bracket is the exact peak of a kinked (order-2) basis.
        inner = knots[(knots > a) & (knots < b)]
        cands = np.concatenate([[a, s, b], inner])
        vals = _cox_de_boor(knots, K, m, cands)[:, i]
        peaks[i] = cands[int(np.argmax(vals))]
    return peaks


def basis_peak(basis: BSplineBasis, i: int) -> float:
    """Location on [0, 1] where basis function ``i`` attains its maximum."""
    if not 0 <= i < basis.K:
        raise IndexError(f"basis index {i} outside 0..{basis.K - 1}")
    return float(basis.peaks[i])


@lru_cache(maxsize=None)
def make_basis(K: int, m: int) -> BSplineBasis:
    """Build the clamped uniform basis with ``K`` functions of order ``m``.

    Bases are cached, so two calls with the same arguments return the same
    object and its Gram matrix is computed only once.
    """
    if int(K) != K or int(m) != m:
        raise ValueError("K and m must be integers")
    K, m = int(K), int(m)
    if m < 1:
        raise ValueError(f"spline order must be >= 1, got {m}")
    if K < m:
        raise ValueError(f"need K >= m, got K={K}, m={m}")
    knots = _clamped_knots(K, m)
    gram = _gram(knots, K, m)
    peaks = _peaks(knots, K, m)
    for arr in (knots, gram, peaks):
        arr.setflags(write=False)
    return BSplineBasis(K=K, m=m, knots=knots, gram=gram, peaks=peaks)


@dataclass(frozen=True, eq=False)
class FunctionalCurve:
    """One functional input: ``f(t) = sum_i beta[i] * B_i(t)`` with beta in [0, 1]^K."""

    basis: BSplineBasis
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.shape != (self.basis.K,):
            raise ValueError(f"expected {self.basis.K} coefficients, got shape {beta.shape}")
        if np.any(~np.isfinite(beta)) or np.any(beta < 0.0) or np.any(beta > 1.0):
            raise ValueError("curve coefficients must lie in [0, 1]")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def __call__(self, t):
        return eval_curve(self, t)


def eval_curve(curve: FunctionalCurve, t):
    """Evaluate a curve at ``t`` (scalar or array)."""
    vals = basis_matrix(curve.basis, t) @ curve.beta
    return float(vals[0]) if np.ndim(t) == 0 else vals
