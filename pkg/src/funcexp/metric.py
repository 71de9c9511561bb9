"""Distances between runs with scalar and functional inputs.

For two curves on the same basis the L2 distance collapses to a quadratic
form in the coefficient difference, ``sqrt(delta' J delta)``. The weighted
variant rescales each coefficient difference before applying ``J``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bspline import BSplineBasis, FunctionalCurve

__all__ = [
    "RunPoint",
    "RunSet",
    "WeightMatrix",
    "functional_dist",
    "weighted_functional_dist",
    "combined_dist",
    "beta_weight_matrix",
    "beta_weights",
    "pairwise_sq_functional",
    "cross_sq_functional",
    "BETA_EPS",
]

# Beta densities diverge or vanish at 0 and 1, where clamped bases peak.
BETA_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class RunPoint:
    """Inputs of a single run: scalars ``x`` in [0, 1]^d_s and ``d_f`` curves."""

    x: np.ndarray
    f: tuple[FunctionalCurve, ...] = ()

    def __post_init__(self):
        x = np.atleast_1d(np.array(self.x, dtype=float)) if np.size(self.x) else np.zeros(0)
        if x.ndim != 1:
            raise ValueError("scalar inputs must be a flat vector")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("scalar inputs must lie in [0, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", tuple(self.f))

    @property
    def d_s(self) -> int:
        return self.x.size

    @property
    def d_f(self) -> int:
        return len(self.f)


@dataclass(frozen=True, eq=False)
class RunSet:
    """A batch of runs stored column-wise.

    ``x`` has shape (n, d_s); ``coefs[k]`` has shape (n, K_k) and holds the
    coefficients of functional input ``k`` on ``bases[k]``.
    """

    x: np.ndarray
    coefs: tuple[np.ndarray, ...] = ()
    bases: tuple[BSplineBasis, ...] = ()

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        coefs = tuple(np.array(c, dtype=float) for c in self.coefs)
        bases = tuple(self.bases)
        if len(coefs) != len(bases):
            raise ValueError("one basis is required per functional input")
        for c, b in zip(coefs, bases):
            if c.ndim != 2 or c.shape != (x.shape[0], b.K):
                raise ValueError(f"coefficient block has shape {c.shape}, expected ({x.shape[0]}, {b.K})")
            if np.any(c < 0.0) or np.any(c > 1.0):
                raise ValueError("curve coefficients must lie in [0, 1]")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("scalar inputs must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "bases", bases)

    @classmethod
    def from_points(cls, points: Sequence[RunPoint]) -> "RunSet":
        if isinstance(points, RunSet):
            return points
        points = list(points)
        if not points:
            raise ValueError("need at least one run")
        d_s, d_f = points[0].d_s, points[0].d_f
        if any(p.d_s != d_s or p.d_f != d_f for p in points):
            raise ValueError("all runs must have the same input dimensions")
        bases = tuple(c.basis for c in points[0].f)
        for p in points:
            if any(c.basis != b for c, b in zip(p.f, bases)):
                raise ValueError("functional input k must use the same basis in every run")
        x = np.array([p.x for p in points], dtype=float).reshape(len(points), d_s)
        coefs = tuple(np.array([p.f[k].beta for p in points]) for k in range(d_f))
        return cls(x=x, coefs=coefs, bases=bases)

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> RunPoint:
        return RunPoint(self.x[i], tuple(FunctionalCurve(b, c[i]) for b, c in zip(self.bases, self.coefs)))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def d_s(self) -> int:
        return self.x.shape[1]

    @property
    def d_f(self) -> int:
        return len(self.coefs)

    def conformable(self, other: "RunSet") -> bool:
        return self.d_s == other.d_s and self.bases == other.bases


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Diagonal, nonnegative, trace-one weighting of basis coefficients."""

    diag: np.ndarray = field()

    def __post_init__(self):
        d = np.array(self.diag, dtype=float)
        if d.ndim != 1 or np.any(d < 0.0):
            raise ValueError("weights must be a nonnegative vector")
        if abs(d.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {d.sum()!r}")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


def _delta(f: FunctionalCurve, g: FunctionalCurve) -> np.ndarray:
    if f.basis != g.basis:
        raise ValueError("curves are on different bases")
    return f.beta - g.beta


def _quad(delta: np.ndarray, J: np.ndarray) -> float:
    # Roundoff can push a tiny PSD form below zero.
    return max(float(delta @ J @ delta), 0.0)


def functional_dist(f: FunctionalCurve, g: FunctionalCurve) -> float:
    """L2 distance between two curves on the same basis."""
    return np.sqrt(_quad(_delta(f, g), f.basis.gram))


def weighted_functional_dist(f: FunctionalCurve, g: FunctionalCurve, W: WeightMatrix) -> float:
    """``sqrt(delta' W J W delta)`` for a diagonal weight matrix ``W``."""
    delta = _delta(f, g)
    if W.diag.shape != delta.shape:
        raise ValueError(f"weight vector has {W.diag.size} entries, basis has {delta.size}")
    return np.sqrt(_quad(W.diag * delta, f.basis.gram))


def combined_dist(a: RunPoint, b: RunPoint) -> float:
    """Euclidean combination of scalar differences and functional L2 distances."""
    if a.d_s != b.d_s or a.d_f != b.d_f:
        raise ValueError("runs have different input dimensions")
    sq = float(np.sum((a.x - b.x) ** 2))
    sq += sum(functional_dist(fa, fb) ** 2 for fa, fb in zip(a.f, b.f))
    return np.sqrt(sq)


def beta_weights(omega, peaks: np.ndarray) -> np.ndarray:
    """Normalized beta(alpha, beta) density at the given peak locations."""
    alpha, beta = (float(v) for v in omega)
    if not (alpha > 0.0 and beta > 0.0):
        raise ValueError(f"beta parameters must be positive, got {omega!r}")
    t = np.clip(peaks, BETA_EPS, 1.0 - BETA_EPS)
    # Log-density up to its normalizing constant, which cancels below.
    logw = (alpha - 1.0) * np.log(t) + (beta - 1.0) * np.log1p(-t)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def beta_weight_matrix(omega, basis: BSplineBasis) -> WeightMatrix:
    """Weight matrix with entries proportional to a beta density at each basis peak."""
    return WeightMatrix(beta_weights(omega, basis.peaks))


def pairwise_sq_functional(coefs: np.ndarray, J: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """All squared (optionally weighted) functional distances within one coefficient block."""
    return cross_sq_functional(coefs, coefs, J, w)


def cross_sq_functional(A: np.ndarray, B: np.ndarray, J: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Squared distances between every row of ``A`` and every row of ``B``."""
    delta = A[:, None, :] - B[None, :, :]
    if w is not None:
        delta = delta * w
    sq = np.einsum("abi,ij,abj->ab", delta, J, delta, optimize=True)
    return np.maximum(sq, 0.0)
