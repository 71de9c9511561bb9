"""Analytic test functions and the replication studies built on them.

Both test functions take three scalar and three functional inputs; the third
of each kind is inactive. Integrals of curves are evaluated exactly through
basis moments: ``int t**p f(t) dt = beta @ moment_vector(basis, p)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bspline import make_basis, moment_vector
from .design import SaConfig, free_maximin_demo, extreme_fraction, generalized_lhd
from .errors import FuncexpError
from .gpmodel import ExperimentRecord, fit, input_labels
from .metric import RunPoint, RunSet

__all__ = [
    "TEST_FUNCTIONS",
    "EvalReport",
    "g1",
    "g2",
    "branin",
    "evaluate",
    "random_test_points",
    "rmse",
    "experiment_weighting",
    "experiment_order",
    "experiment_example1",
    "experiment_remark1",
    "OrderStudy",
]

logger = logging.getLogger(__name__)

D_S = 3
D_F = 3


def _as_runs(points) -> tuple[RunSet, bool]:
    if isinstance(points, RunSet):
        runs, single = points, False
    elif isinstance(points, RunPoint):
        runs, single = RunSet.from_points([points]), True
    else:
        runs, single = RunSet.from_points(points), False
    if runs.d_s != D_S or runs.d_f != D_F:
        raise ValueError(f"test functions take {D_S} scalar and {D_F} functional inputs, got {runs.d_s} and {runs.d_f}")
    return runs, single


def _integral(runs: RunSet, k: int, p: int) -> np.ndarray:
    return runs.coefs[k] @ moment_vector(runs.bases[k], p)


def g1(points):
    """``x1 + 2 x2 + 4 int t f1(t) dt + int f2(t) dt`` (x3 and f3 inactive)."""
    runs, single = _as_runs(points)
    x = runs.x
    y = x[:, 0] + 2.0 * x[:, 1] + 4.0 * _integral(runs, 0, 1) + _integral(runs, 1, 0)
    return float(y[0]) if single else y


def branin(x1, x2):
    """Classical Branin function in its natural coordinates."""
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - 1.0 / (8.0 * np.pi)) * np.cos(x1) + 10.0


def g2(points):
    """Branin in (x1, x2) plus functional terms with an x1 interaction.

    Scalar inputs in [0, 1] are mapped to x1 in [-5, 10] and x2 in [0, 15]
    before evaluation.
    """
    runs, single = _as_runs(points)
    x1 = -5.0 + 15.0 * runs.x[:, 0]
    x2 = 15.0 * runs.x[:, 1]
    int_f1_one_minus_t = _integral(runs, 0, 0) - _integral(runs, 0, 1)
    int_t_f2 = _integral(runs, 1, 1)
    functional = 42.0 * int_f1_one_minus_t + np.pi * ((x1 + 5.0) / 5.0 + 15.0) * int_t_f2
    y = branin(x1, x2) + 4.0 * np.pi / 3.0 * functional
    return float(y[0]) if single else y


TEST_FUNCTIONS = {"g1": g1, "g2": g2}


def evaluate(name: str, points):
    try:
        func = TEST_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}") from None
    return func(points)


def random_test_points(count: int, basis, seed=None, d_s: int = D_S, d_f: int = D_F) -> RunSet:
    """I.i.d. uniform scalars and curve coefficients."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random((count, d_s))
    coefs = tuple(rng.random((count, basis.K)) for _ in range(d_f))
    return RunSet(x, coefs, (basis,) * d_f)


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} true values")
    if pred.size == 0:
        raise ValueError("need at least one value")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass(frozen=True, eq=False)
class EvalReport:
    rmse: float
    residuals: np.ndarray
    normalized_rmse: float
    sensitivity: np.ndarray
    meta: dict = field(default_factory=dict)


def _report(model, test: RunSet, truth: np.ndarray, meta: dict) -> EvalReport:
    mean, _ = model.predict(test)
    resid = mean - truth
    err = rmse(mean, truth)
    span = float(truth.max() - truth.min())
    return EvalReport(err, resid, err / span if span > 0 else float("nan"), model.sensitivity(),
                      dict(meta, loglik=model.loglik))


def _spawn(seed, count):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def experiment_weighting(
    n: int = 40,
    K: int = 7,
    m: int = 4,
    reps: int = 20,
    seed=None,
    test_size: int = 300,
    multistart: int = 50,
    sa: SaConfig | None = None,
    function: str = "g2",
) -> list[tuple[EvalReport, EvalReport] | None]:
    """Weighted versus unweighted Matern-5/2 models on the same designs.

    Returns one ``(weighted, unweighted)`` pair per replication, or ``None``
    for a replication whose fit failed.
    """
    basis = make_basis(K, m)
    out = []
    for r, ss in enumerate(_spawn(seed, reps)):
        s_design, s_test, s_fit_w, s_fit_u = ss.spawn(4)
        meta = {"rep": r, "n": n, "K": K, "m": m, "seed": seed}
        try:
            design = generalized_lhd(n, D_S, D_F, K, m, sa=sa, seed=s_design)
            record = ExperimentRecord(design.runs, evaluate(function, design.runs))
            test = random_test_points(test_size, basis, s_test)
            truth = evaluate(function, test)
            weighted = fit(record, "matern52", weighting=True, multistart=multistart, seed=s_fit_w)
            plain = fit(record, "matern52", weighting=False, multistart=multistart, seed=s_fit_u)
            out.append((_report(weighted, test, truth, dict(meta, weighting=True)),
                        _report(plain, test, truth, dict(meta, weighting=False))))
        except (FuncexpError, np.linalg.LinAlgError) as exc:
            logger.warning("weighting replication %d failed: %s", r, exc)
            out.append(None)
    return out


@dataclass(frozen=True, eq=False)
class OrderStudy:
    orders: tuple[int, ...]
    reports: dict[int, list[EvalReport]]
    failures: dict[int, int]
    labels: list[str]

    def average_rmse(self) -> dict[int, float]:
        return {m: float(np.mean([r.rmse for r in self.reports[m]])) if self.reports[m] else float("nan")
                for m in self.orders}

    def std_rmse(self) -> dict[int, float]:
        return {m: float(np.std([r.rmse for r in self.reports[m]], ddof=1)) if len(self.reports[m]) > 1 else float("nan")
                for m in self.orders}

    def sensitivity_samples(self, m: int) -> np.ndarray:
        return np.array([r.sensitivity for r in self.reports[m]])


def experiment_order(
    orders: Sequence[int] = (1, 2, 3, 4, 5),
    n: int = 20,
    K: int = 7,
    reps: int = 100,
    seed=None,
    test_size: int = 600,
    kernel: str = "matern52",
    weighting: bool = False,
    multistart: int = 50,
    sa: SaConfig | None = None,
) -> OrderStudy:
    """Surrogate accuracy on g2 as a function of spline order at fixed K.

    Each order gets its own test set; replication ``r`` uses the same seed
    material across orders.
    """
    orders = tuple(int(m) for m in orders)
    if any(m < 1 or m > K for m in orders):
        raise ValueError("every order must satisfy 1 <= m <= K")
    s_tests, s_reps = _spawn(seed, 2)
    test_seeds = s_tests.spawn(len(orders))
    rep_seeds = s_reps.spawn(reps)
    reports: dict[int, list[EvalReport]] = {}
    failures: dict[int, int] = {}
    for m, ts in zip(orders, test_seeds):
        basis = make_basis(K, m)
        test = random_test_points(test_size, basis, ts)
        truth = g2(test)
        reports[m], failures[m] = [], 0
        for r, ss in enumerate(rep_seeds):
            s_design, s_fit = ss.spawn(2)
            try:
                design = generalized_lhd(n, D_S, D_F, K, m, sa=sa, seed=s_design)
                record = ExperimentRecord(design.runs, g2(design.runs))
                model = fit(record, kernel, weighting=weighting, multistart=multistart, seed=s_fit)
                reports[m].append(_report(model, test, truth, {"rep": r, "n": n, "K": K, "m": m, "seed": seed}))
            except (FuncexpError, np.linalg.LinAlgError) as exc:
                logger.warning("order %d replication %d failed: %s", m, r, exc)
                failures[m] += 1
    return OrderStudy(orders, reports, failures, input_labels(D_S, D_F))


def experiment_example1(
    n: int = 20,
    K: int = 7,
    m: int = 4,
    reps: int = 10,
    seed=None,
    multistart: int = 50,
    sa: SaConfig | None = None,
) -> list[dict | None]:
    """Weighted Matern-5/2 fits of g1: sensitivities and weight-profile locations."""
    out = []
    for r, ss in enumerate(_spawn(seed, reps)):
        s_design, s_fit = ss.spawn(2)
        try:
            design = generalized_lhd(n, D_S, D_F, K, m, sa=sa, seed=s_design)
            record = ExperimentRecord(design.runs, g1(design.runs))
            model = fit(record, "matern52", weighting=True, multistart=multistart, seed=s_fit)
        except (FuncexpError, np.linalg.LinAlgError) as exc:
            logger.warning("example-1 replication %d failed: %s", r, exc)
            out.append(None)
            continue
        profiles = [model.weight_profile(k) for k in range(D_F)]
        out.append({
            "rep": r,
            "sensitivity": model.sensitivity(),
            "mean_location": np.array([p.mean_location for p in profiles]),
            "omega": model.params.omega.copy(),
            "loglik": model.loglik,
        })
    return out


def experiment_remark1(
    n: int = 15,
    d_s: int = 2,
    d_f: int = 2,
    K: int = 8,
    m: int = 4,
    seed=None,
    sa: SaConfig | None = None,
    tol: float = 0.05,
) -> dict:
    """Free versus LHD-constrained coefficient optimization on the same instance."""
    basis = make_basis(K, m)
    s_free, s_lhd = _spawn(seed, 2)
    free = free_maximin_demo(n, d_s, d_f, basis, seed=s_free, sa=sa)
    constrained = generalized_lhd(n, d_s, d_f, K, m, sa=sa, seed=s_lhd)
    return {
        "free": free,
        "constrained": constrained,
        "free_extreme_fraction": extreme_fraction(np.concatenate(free.functionals), tol),
        "constrained_extreme_fraction": extreme_fraction(np.concatenate(constrained.functionals), tol),
    }
