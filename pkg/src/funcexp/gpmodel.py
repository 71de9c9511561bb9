"""Gaussian-process surrogate over scalar and functional inputs.

The model is ``Y = mu + Z`` with a tensor-product correlation: one kernel
factor per scalar input acting on ``|x_l - x'_l|`` and one per functional
input acting on the L2 distance of the two curves. With weighting enabled,
each functional distance is replaced by its beta-weighted version and the
two beta parameters of every functional input are estimated along with the
ranges.

Parameters are estimated by maximizing the concentrated likelihood (the
constant trend and the process variance have closed forms given the
ranges), starting a bounded Nelder-Mead search from the best of a batch of
random log-uniform starting points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .bspline import BSplineBasis, basis_matrix, moment_vector
from .errors import IllConditionedError
from .metric import RunPoint, RunSet, beta_weights, cross_sq_functional

__all__ = [
    "KernelSpec",
    "GpParams",
    "FitBounds",
    "ExperimentRecord",
    "GpModel",
    "WeightProfile",
    "kernel_eval",
    "correlation",
    "correlation_matrix",
    "log_likelihood",
    "profile_log_likelihood",
    "fit",
    "input_labels",
]

logger = logging.getLogger(__name__)

NUGGET = 1e-8
MAX_NUGGET = 1e-4

_ALIASES = {"gauss": "gaussian", "gaussian": "gaussian", "matern52": "matern52", "matern5_2": "matern52"}
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Stationary correlation kernel ``g(h, theta)`` with ``g(0) = 1``."""

    family: str = "matern52"

    def __post_init__(self):
        family = _ALIASES.get(str(self.family).lower())
        if family is None:
            raise ValueError(f"unknown kernel family {self.family!r}; use 'gaussian' or 'matern52'")
        object.__setattr__(self, "family", family)

    def __call__(self, h, theta):
        h = np.abs(h)
        if self.family == "gaussian":
            return np.exp(-0.5 * (h / theta) ** 2)
        s = _SQRT5 * h / theta
        return (1.0 + s + s * s / 3.0) * np.exp(-s)


def kernel_eval(spec: KernelSpec | str, h, theta):
    """Correlation at distance ``h`` for range ``theta``."""
    if np.any(np.asarray(theta) <= 0.0):
        raise ValueError("kernel range must be positive")
    if np.any(np.asarray(h) < 0.0):
        raise ValueError("distance must be nonnegative")
    spec = spec if isinstance(spec, KernelSpec) else KernelSpec(spec)
    out = spec(h, theta)
    return float(out) if np.ndim(out) == 0 else out


def input_labels(d_s: int, d_f: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d_s)] + [f"f{k + 1}" for k in range(d_f)]


@dataclass(frozen=True)
class GpParams:
    mu: float
    sigma2: float
    theta_s: np.ndarray
    theta_f: np.ndarray
    omega: np.ndarray | None = None
    nugget: float = NUGGET

    def __post_init__(self):
        object.__setattr__(self, "theta_s", np.atleast_1d(np.asarray(self.theta_s, dtype=float)).reshape(-1))
        object.__setattr__(self, "theta_f", np.atleast_1d(np.asarray(self.theta_f, dtype=float)).reshape(-1))
        if self.omega is not None:
            omega = np.asarray(self.omega, dtype=float).reshape(-1, 2)
            if omega.shape[0] != self.theta_f.size:
                raise ValueError("need one (alpha, beta) pair per functional input")
            if np.any(omega <= 0.0):
                raise ValueError("beta parameters must be positive")
            object.__setattr__(self, "omega", omega)
        if np.any(self.theta_s <= 0.0) or np.any(self.theta_f <= 0.0):
            raise ValueError("ranges must be positive")
        if self.sigma2 < 0.0:
            raise ValueError("process variance must be nonnegative")
        if not self.nugget >= 0.0:
            raise ValueError("nugget must be nonnegative")

    @property
    def weighted(self) -> bool:
        return self.omega is not None


@dataclass(frozen=True)
class FitBounds:
    """Search box: ranges in ``[theta_lower, theta_factor * max pairwise distance]``."""

    theta_lower: float = 1e-3
    theta_factor: float = 10.0
    omega_lower: float = 0.05
    omega_upper: float = 50.0


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    """Evaluated runs: inputs and one scalar output per run."""

    runs: RunSet
    y: np.ndarray

    def __post_init__(self):
        runs = self.runs if isinstance(self.runs, RunSet) else RunSet.from_points(self.runs)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != len(runs):
            raise ValueError(f"{len(runs)} runs but {y.size} outputs")
        if not np.all(np.isfinite(y)):
            raise ValueError("outputs must be finite")
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size


class _Distances:
    """Per-input distance matrices between two run sets, reused across parameter values."""

    def __init__(self, A: RunSet, B: RunSet):
        if A.d_s != B.d_s or A.d_f != B.d_f or A.bases != B.bases:
            raise ValueError("run sets have different input structure")
        self.scalar = [np.abs(A.x[:, None, l] - B.x[None, :, l]) for l in range(A.d_s)]
        self.functional = [np.sqrt(cross_sq_functional(a, b, basis.gram)) for a, b, basis in zip(A.coefs, B.coefs, A.bases)]
        self.deltas = [a[:, None, :] - b[None, :, :] for a, b in zip(A.coefs, B.coefs)]
        self.bases = A.bases
        zero = np.ones((len(A), len(B)), dtype=bool)
        for H in self.scalar + self.functional:
            zero &= H == 0.0
        for d in self.deltas:
            zero &= np.all(d == 0.0, axis=-1)
        self.coincident = zero

    def weighted(self, k: int, omega) -> np.ndarray:
        basis = self.bases[k]
        d = self.deltas[k] * beta_weights(omega, basis.peaks)
        sq = np.einsum("abi,ij,abj->ab", d, basis.gram, d, optimize=True)
        return np.sqrt(np.maximum(sq, 0.0))

    def correlation(self, params: GpParams, kernel: KernelSpec) -> np.ndarray:
        R = np.ones_like(self.coincident, dtype=float)
        for H, th in zip(self.scalar, params.theta_s):
            R *= kernel(H, th)
        for k, th in enumerate(params.theta_f):
            H = self.weighted(k, params.omega[k]) if params.weighted else self.functional[k]
            R *= kernel(H, th)
        return R


def _check_dims(params: GpParams, runs: RunSet):
    if params.theta_s.size != runs.d_s or params.theta_f.size != runs.d_f:
        raise ValueError(
            f"parameters cover {params.theta_s.size} scalar / {params.theta_f.size} functional inputs, "
            f"data has {runs.d_s} / {runs.d_f}"
        )


def correlation(a: RunPoint, b: RunPoint, params: GpParams, kernel: KernelSpec | str = "matern52") -> float:
    """Correlation between two runs (nugget excluded)."""
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    A, B = RunSet.from_points([a]), RunSet.from_points([b])
    _check_dims(params, A)
    return float(_Distances(A, B).correlation(params, kernel)[0, 0])


def correlation_matrix(runs: RunSet, params: GpParams, kernel: KernelSpec | str = "matern52") -> np.ndarray:
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    _check_dims(params, runs)
    return _Distances(runs, runs).correlation(params, kernel)


def _factor(R: np.ndarray, nugget: float) -> tuple[np.ndarray, float]:
    """Cholesky factor of ``R + nugget * I``, escalating the nugget tenfold on failure."""
    n = R.shape[0]
    nug = nugget
    while True:
        try:
            return linalg.cholesky(R + nug * np.eye(n), lower=True), nug
        except linalg.LinAlgError:
            if nug >= MAX_NUGGET:
                raise IllConditionedError(f"correlation matrix not positive definite with nugget {nug:g}") from None
            nug = min(nug * 10.0, MAX_NUGGET) if nug > 0 else NUGGET


def _gls(L: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Closed-form trend and variance given the correlation factor; returns (mu, sigma2, logdet)."""
    n = y.size
    one = np.ones(n)
    a = linalg.solve_triangular(L, one, lower=True)
    b = linalg.solve_triangular(L, y, lower=True)
    mu = float(a @ b / (a @ a))
    r = b - mu * a
    sigma2 = float(r @ r / n)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return mu, sigma2, logdet


def log_likelihood(params: GpParams, data: ExperimentRecord, kernel: KernelSpec | str = "matern52") -> float:
    """Gaussian log-likelihood of ``y ~ N(mu 1, sigma2 (R + nugget I))``.

    Uses ``params.nugget`` as the starting jitter.
    """
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    _check_dims(params, data.runs)
    R = _Distances(data.runs, data.runs).correlation(params, kernel)
    L, _ = _factor(R, params.nugget)
    n = data.n
    r = linalg.solve_triangular(L, data.y - params.mu, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    if params.sigma2 <= 0.0:
        return float("-inf")
    return float(-0.5 * (n * np.log(2.0 * np.pi * params.sigma2) + logdet + r @ r / params.sigma2))


def _profile(dist: _Distances, y: np.ndarray, params: GpParams, kernel: KernelSpec):
    R = dist.correlation(params, kernel)
    L, nug = _factor(R, params.nugget)
    mu, sigma2, logdet = _gls(L, y)
    n = y.size
    if sigma2 <= 0.0:
        # Constant data: the likelihood is unbounded; report a finite ceiling.
        sigma2 = np.finfo(float).tiny
    ll = -0.5 * (n * np.log(2.0 * np.pi * sigma2) + logdet + n)
    return ll, mu, sigma2, nug, L


def profile_log_likelihood(
    data: ExperimentRecord,
    theta_s,
    theta_f,
    omega=None,
    kernel: KernelSpec | str = "matern52",
    nugget: float = NUGGET,
) -> tuple[float, GpParams]:
    """Concentrated log-likelihood: trend and variance replaced by their maximizers."""
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    params = GpParams(0.0, 1.0, theta_s, theta_f, omega, nugget)
    _check_dims(params, data.runs)
    ll, mu, sigma2, nug, _ = _profile(_Distances(data.runs, data.runs), data.y, params, kernel)
    return ll, replace(params, mu=mu, sigma2=sigma2, nugget=nug)


@dataclass(frozen=True)
class WeightProfile:
    """Fitted weighting of one functional input, drawn as a B-spline with the weights as coefficients."""

    t: np.ndarray
    values: np.ndarray
    omega: np.ndarray
    weights: np.ndarray
    basis: BSplineBasis

    @property
    def mean_location(self) -> float:
        """Centre of mass of the profile on [0, 1]."""
        m0 = self.weights @ moment_vector(self.basis, 0)
        m1 = self.weights @ moment_vector(self.basis, 1)
        return float(m1 / m0)

    @property
    def integral(self) -> float:
        return float(self.weights @ moment_vector(self.basis, 0))


@dataclass(frozen=True, eq=False)
class GpModel:
    """A fitted model. Build with :func:`fit` or :meth:`GpModel.from_params`."""

    params: GpParams
    data: ExperimentRecord
    kernel: KernelSpec
    factor: np.ndarray = field(repr=False)
    loglik: float
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_params(cls, params: GpParams, data: ExperimentRecord, kernel: KernelSpec | str = "matern52",
                    diagnostics: dict | None = None) -> "GpModel":
        kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
        _check_dims(params, data.runs)
        R = _Distances(data.runs, data.runs).correlation(params, kernel)
        L, nug = _factor(R, params.nugget)
        params = replace(params, nugget=nug)
        ll = log_likelihood(params, data, kernel)
        return cls(params, data, kernel, L, ll, dict(diagnostics or {}))

    @property
    def weighted(self) -> bool:
        return self.params.weighted

    @property
    def labels(self) -> list[str]:
        return input_labels(self.data.runs.d_s, self.data.runs.d_f)

    def _solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.factor, True), b)

    def predict(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Kriging mean and variance at new runs.

        The nugget is treated as part of the covariance at zero distance, so
        predictions at training runs reproduce the observations exactly.
        """
        runs = points if isinstance(points, RunSet) else RunSet.from_points(points)
        if runs.d_s != self.data.runs.d_s or runs.d_f != self.data.runs.d_f or runs.bases != self.data.runs.bases:
            raise ValueError("prediction points do not match the training inputs")
        p = self.params
        dist = _Distances(runs, self.data.runs)
        r = dist.correlation(p, self.kernel)
        r[dist.coincident] += p.nugget
        alpha = self._solve(self.data.y - p.mu)
        mean = p.mu + r @ alpha
        v = linalg.solve_triangular(self.factor, r.T, lower=True)
        var = p.sigma2 * np.maximum(1.0 + p.nugget - np.sum(v * v, axis=0), 0.0)
        return mean, var

    def loo(self) -> tuple[np.ndarray, np.ndarray]:
        """Leave-one-out predictions with frozen ranges, weights and variance.

        The trend is re-estimated from the remaining runs. Closed form: with
        ``Q = C^-1 - a a' / (1' a)``, ``a = C^-1 1``, the residual at run i is
        ``(Q y)_i / Q_ii`` and the predictive variance is ``sigma2 / (C^-1)_ii``.
        """
        n = self.data.n
        if n < 3:
            raise ValueError("leave-one-out needs at least three runs")
        Cinv = self._solve(np.eye(n))
        a = Cinv @ np.ones(n)
        Q = Cinv - np.outer(a, a) / a.sum()
        y = self.data.y
        resid = (Q @ y) / np.diag(Q)
        var = self.params.sigma2 / np.diag(Cinv)
        return y - resid, var

    def sensitivity(self) -> np.ndarray:
        """``1 - g(1, theta_k)`` per input, scalar inputs first; larger means more influential."""
        theta = np.concatenate([self.params.theta_s, self.params.theta_f])
        return 1.0 - self.kernel(1.0, theta)

    def weight_profile(self, k: int, grid: int = 101) -> WeightProfile:
        """Fitted weights of functional input ``k`` drawn as a B-spline on a uniform grid."""
        if not self.weighted:
            raise ValueError("model was fitted without weighting")
        if not 0 <= k < self.data.runs.d_f:
            raise IndexError(f"functional input {k} out of range")
        if grid < 2:
            raise ValueError("grid needs at least two points")
        basis = self.data.runs.bases[k]
        omega = self.params.omega[k]
        w = beta_weights(omega, basis.peaks)
        t = np.linspace(0.0, 1.0, grid)
        return WeightProfile(t, basis_matrix(basis, t) @ w, omega.copy(), w, basis)


def _theta_bounds(dist: _Distances, bounds: FitBounds) -> list[tuple[float, float]]:
    out = []
    for H in dist.scalar + dist.functional:
        upper = max(bounds.theta_factor * float(H.max()), 10.0 * bounds.theta_lower)
        out.append((bounds.theta_lower, upper))
    return out


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def fit(
    data: ExperimentRecord,
    kernel: KernelSpec | str = "matern52",
    weighting: bool = False,
    bounds: FitBounds | None = None,
    multistart: int = 50,
    seed=None,
    nugget: float = NUGGET,
    maxfev: int = 500,
    restarts: int = 2,
) -> GpModel:
    """Maximum-likelihood fit.

    ``multistart`` random points (log-uniform within the bounds) are scored
    and a bounded Nelder-Mead search in log-parameter space runs from the
    best one; the simplex is rebuilt up to ``restarts`` times while that
    still improves the likelihood. With weighting, the unweighted model is
    fitted first and its optimum, mapped to uniform weights, joins the
    candidate starts, so the weighted fit never ends below the unweighted
    one. Deterministic for a fixed ``seed``.
    """
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    bounds = bounds or FitBounds()
    runs = data.runs
    d_s, d_f = runs.d_s, runs.d_f
    if d_s + d_f == 0:
        raise ValueError("data has no inputs")
    if data.n < 2:
        raise ValueError("need at least two runs")
    weighting = bool(weighting) and d_f > 0
    dist = _Distances(runs, runs)
    if np.any(dist.coincident[~np.eye(data.n, dtype=bool)]):
        raise ValueError("training runs must be distinct")
    s_nested, s_main = _seed_sequence(seed).spawn(2)

    box = _theta_bounds(dist, bounds)
    if weighting:
        box += [(bounds.omega_lower, bounds.omega_upper)] * (2 * d_f)
    lo = np.log([b[0] for b in box])
    hi = np.log([b[1] for b in box])

    def unpack(z):
        v = np.exp(np.clip(z, lo, hi))
        omega = v[d_s + d_f:].reshape(d_f, 2) if weighting else None
        return GpParams(0.0, 1.0, v[:d_s], v[d_s:d_s + d_f], omega, nugget)

    n_evals = 0

    def objective(z):
        nonlocal n_evals
        n_evals += 1
        try:
            ll = _profile(dist, data.y, unpack(z), kernel)[0]
        except IllConditionedError:
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    rng = np.random.default_rng(s_main)
    starts = lo + (hi - lo) * rng.random((max(int(multistart), 1), lo.size))
    if weighting:
        # Uniform weights scale every functional distance by 1/K.
        base = fit(data, kernel, False, bounds, multistart, s_nested, nugget, maxfev, restarts)
        K = np.array([b.K for b in runs.bases], dtype=float)
        nested = np.concatenate([np.log(base.params.theta_s), np.log(base.params.theta_f / K), np.zeros(2 * d_f)])
        starts = np.vstack([starts, np.clip(nested, lo, hi)])
    scores = np.array([objective(z) for z in starts])
    if not np.any(np.isfinite(scores)):
        raise IllConditionedError("every starting point failed to factorize the correlation matrix")
    best = int(np.argmin(scores))
    z_best, f_best = starts[best], scores[best]

    iterations = 0
    converged = False
    for _ in range(max(int(restarts), 0) + 1):
        step = 0.1 * (hi - lo) * np.where(z_best < 0.5 * (lo + hi), 1.0, -1.0)
        simplex = np.vstack([z_best, z_best + np.diag(step)])
        res = optimize.minimize(
            objective, z_best, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"maxfev": maxfev, "xatol": 1e-8, "fatol": 1e-8, "initial_simplex": simplex},
        )
        iterations += int(res.nit)
        gain = f_best - res.fun
        if res.fun < f_best:
            z_best, f_best = np.clip(res.x, lo, hi), float(res.fun)
        if not gain > 1e-8 * max(abs(f_best), 1.0):
            converged = True
            break

    ll, mu, sigma2, nug, L = _profile(dist, data.y, unpack(z_best), kernel)
    params = replace(unpack(z_best), mu=mu, sigma2=sigma2, nugget=nug)
    diagnostics = {
        "loglik": float(ll),
        "starts": int(starts.shape[0]),
        "evaluations": int(n_evals),
        "iterations": iterations,
        "converged": converged,
    }
    logger.debug("fit: loglik %.6g after %d evaluations", ll, n_evals)
    return GpModel(params, data, kernel, L, float(ll), diagnostics)
