"""Space-filling designs for runs with scalar and B-spline functional inputs.

Construction has two stages. First a candidate set of ``n`` curves is found
by treating the K basis coefficients as the columns of a Latin hypercube and
annealing it on the Morris-Mitchell criterion over L2 distances. Then the
candidate set(s) and a scalar LHD are aligned row-wise by annealing over
within-column swaps on the same criterion computed with the combined
distance. Neither stage changes the one-dimensional level sets, so the
result is a generalized Latin hypercube.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bspline import BSplineBasis, FunctionalCurve, make_basis
from .errors import DegenerateDesignError
from .metric import RunSet, pairwise_sq_functional

__all__ = [
    "Design",
    "SaConfig",
    "SaResult",
    "lhd",
    "phi_q",
    "phi_qc",
    "mm_criterion",
    "candidate_set",
    "assemble_design",
    "generalized_lhd",
    "free_maximin_demo",
    "extreme_fraction",
]

logger = logging.getLogger(__name__)

DEFAULT_Q = 5.0


@dataclass(frozen=True)
class SaConfig:
    """Simulated-annealing schedule.

    The starting temperature is the mean absolute criterion change over
    ``probe_moves`` random moves. Temperature is multiplied by ``cooling``
    after every ``inner`` proposals; the search stops after ``max_steps``
    temperature levels or after ``patience`` consecutive levels without a
    new best.
    """

    probe_moves: int = 100
    cooling: float = 0.95
    inner: int = 100
    max_steps: int = 200
    patience: int = 20

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        for name in ("probe_moves", "inner", "max_steps", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SaResult:
    state: Any
    value: float
    initial_value: float
    steps: int
    accepted: int


@dataclass(frozen=True, eq=False)
class Design:
    """An n-run design.

    ``scalars`` has shape (n, d_s); ``functionals[k]`` is the (n, K) block of
    curve coefficients for functional input ``k``, expressed on ``bases[k]``.
    """

    scalars: np.ndarray
    functionals: tuple[np.ndarray, ...]
    bases: tuple[BSplineBasis, ...]
    criterion: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        scalars = np.asarray(self.scalars, dtype=float)
        if scalars.ndim == 1:
            scalars = scalars[:, None]
        object.__setattr__(self, "scalars", scalars)
        object.__setattr__(self, "functionals", tuple(np.asarray(c, dtype=float) for c in self.functionals))
        object.__setattr__(self, "bases", tuple(self.bases))
        if len(self.functionals) != len(self.bases):
            raise ValueError("one basis is required per functional input")
        for c in self.functionals:
            if c.shape[0] != scalars.shape[0]:
                raise ValueError("all design columns must have n rows")

    @property
    def n(self) -> int:
        return self.scalars.shape[0]

    @property
    def d_s(self) -> int:
        return self.scalars.shape[1]

    @property
    def d_f(self) -> int:
        return len(self.functionals)

    @property
    def runs(self) -> RunSet:
        return RunSet(self.scalars, self.functionals, self.bases)

    def curves(self, k: int) -> list[FunctionalCurve]:
        return [FunctionalCurve(self.bases[k], row) for row in self.functionals[k]]


def lhd(n: int, d: int, seed=None) -> np.ndarray:
    """Random Latin hypercube on the levels ``0, 1/(n-1), ..., 1``."""
    if n < 2:
        raise ValueError(f"a Latin hypercube needs n >= 2 runs, got {n}")
    if d < 0:
        raise ValueError("dimension must be nonnegative")
    rng = np.random.default_rng(seed)
    levels = np.arange(n) / (n - 1)
    return np.column_stack([levels[rng.permutation(n)] for _ in range(d)]) if d else np.zeros((n, 0))


def mm_criterion(sq_dists: np.ndarray, q: float = DEFAULT_Q) -> float:
    """Morris-Mitchell criterion from a matrix of squared pairwise distances.

    Only the strict upper triangle is used. Lower values are better.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    iu = np.triu_indices(sq_dists.shape[0], k=1)
    d = np.sqrt(sq_dists[iu])
    if d.size == 0:
        raise DegenerateDesignError("the criterion needs at least two runs")
    dmin = d.min()
    if not dmin > 0.0:
        raise DegenerateDesignError("design contains coincident runs")
    # Factor out the smallest distance so large q cannot overflow.
    return float(np.sum((d / dmin) ** (-q)) ** (1.0 / q) / dmin)


def phi_q(curves: Sequence[FunctionalCurve], q: float = DEFAULT_Q) -> float:
    """Criterion over the pairwise L2 distances of a set of curves."""
    curves = list(curves)
    basis = curves[0].basis
    if any(c.basis != basis for c in curves):
        raise ValueError("all curves must share one basis")
    coefs = np.array([c.beta for c in curves])
    return mm_criterion(pairwise_sq_functional(coefs, basis.gram), q)


def _combined_sq(runs: RunSet) -> np.ndarray:
    x = runs.x
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    for c, b in zip(runs.coefs, runs.bases):
        sq = sq + pairwise_sq_functional(c, b.gram)
    return sq


def phi_qc(design: Design | RunSet, q: float = DEFAULT_Q) -> float:
    """Criterion over the combined scalar and functional distances of full runs."""
    runs = design.runs if isinstance(design, Design) else design
    return mm_criterion(_combined_sq(runs), q)


class _PairSums:
    """Running sum of ``d_ij**-q`` over pairs, with cheap row-replacement trials."""

    def __init__(self, sq: np.ndarray, q: float):
        self.q = q
        self.sq = sq.copy()
        self._refresh()

    def _inv(self, sq):
        with np.errstate(divide="ignore"):
            return sq ** (-0.5 * self.q)

    def _refresh(self):
        P = self._inv(self.sq)
        np.fill_diagonal(P, 0.0)
        self.P = P
        self.total = P.sum() / 2.0

    @property
    def value(self) -> float:
        return float(self.total ** (1.0 / self.q))

    def trial(self, rows: dict[int, np.ndarray]) -> tuple[float, dict[int, np.ndarray]]:
        idx = list(rows)
        old = sum(self.P[i].sum() for i in idx)
        new_P = {}
        for i, sq_row in rows.items():
            p = self._inv(sq_row)
            p[i] = 0.0
            new_P[i] = p
        new = sum(p.sum() for p in new_P.values())
        if len(idx) == 2:
            i, j = idx
            old -= self.P[i, j]
            new -= new_P[i][j]
        total = self.total - old + new
        return float(max(total, 0.0) ** (1.0 / self.q)), rows

    def apply(self, rows: dict[int, np.ndarray]):
        for i, sq_row in rows.items():
            self.sq[i, :] = sq_row
            self.sq[:, i] = sq_row
        self._refresh()


def _anneal(problem, config: SaConfig, rng: np.random.Generator) -> SaResult:
    """Generic annealing loop.

    ``problem`` provides ``value``, ``propose(rng)``, ``trial(move)`` returning
    ``(value, token)``, ``apply(token)`` and ``snapshot()``.
    """
    current = problem.value
    initial = current
    best, best_state = current, problem.snapshot()

    deltas = []
    for _ in range(config.probe_moves):
        v, _ = problem.trial(problem.propose(rng))
        if np.isfinite(v):
            deltas.append(abs(v - current))
    temp = float(np.mean(deltas)) if deltas else 0.0
    if not temp > 0.0:
        temp = 1e-12 * max(abs(current), 1.0)

    accepted = 0
    stale = 0
    steps = 0
    for steps in range(1, config.max_steps + 1):
        improved = False
        for _ in range(config.inner):
            v, token = problem.trial(problem.propose(rng))
            delta = v - current
            if not np.isfinite(v):
                continue
            if delta <= 0.0 or rng.random() < np.exp(-delta / temp):
                problem.apply(token)
                current = problem.value
                accepted += 1
                if current < best:
                    best, best_state = current, problem.snapshot()
                    improved = True
        temp *= config.cooling
        stale = 0 if improved else stale + 1
        if stale >= config.patience:
            break
    return SaResult(best_state, best, initial, steps, accepted)


class _CandidateProblem:
    """Within-column swaps of an (n, K) LHD of coefficients."""

    def __init__(self, coefs: np.ndarray, J: np.ndarray, q: float):
        self.C = coefs.copy()
        self.J = J
        self.pairs = _PairSums(pairwise_sq_functional(self.C, J), q)

    @property
    def value(self):
        return self.pairs.value

    def propose(self, rng):
        n, K = self.C.shape
        i, j = rng.choice(n, size=2, replace=False)
        return int(rng.integers(K)), int(i), int(j)

    def _row_sq(self, C, i):
        d = C - C[i]
        return np.maximum(np.einsum("ak,kl,al->a", d, self.J, d), 0.0)

    def trial(self, move):
        k, i, j = move
        C = self.C.copy()
        C[i, k], C[j, k] = C[j, k], C[i, k]
        value, _ = self.pairs.trial({i: self._row_sq(C, i), j: self._row_sq(C, j)})
        return value, (move, C)

    def apply(self, token):
        (k, i, j), C = token
        rows = {i: self._row_sq(C, i), j: self._row_sq(C, j)}
        self.C = C
        self.pairs.apply(rows)

    def snapshot(self):
        return self.C.copy()


def _seeds(seed, count: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def candidate_set(
    n: int,
    basis: BSplineBasis,
    q: float = DEFAULT_Q,
    sa: SaConfig | None = None,
    seed=None,
    restarts: int = 1,
) -> list[FunctionalCurve]:
    """Space-filling set of ``n`` curves whose coefficients form a Latin hypercube.

    Each restart starts from an independent random LHD; the restart with the
    lowest criterion wins, earlier restarts winning ties.
    """
    if n < 2:
        raise ValueError(f"a candidate set needs n >= 2 curves, got {n}")
    sa = sa or SaConfig()
    best = None
    for r, ss in enumerate(_seeds(seed, max(int(restarts), 1))):
        rng = np.random.default_rng(ss)
        start = lhd(n, basis.K, rng)
        problem = _CandidateProblem(start, basis.gram, q)
        if not np.isfinite(problem.value):
            raise DegenerateDesignError("initial candidate set contains coincident curves")
        res = _anneal(problem, sa, rng)
        logger.debug("candidate restart %d: %.6g -> %.6g in %d steps", r, res.initial_value, res.value, res.steps)
        if best is None or res.value < best.value:
            best = res
    return [FunctionalCurve(basis, row) for row in best.state]


class _AlignProblem:
    """Row permutations of fixed columns, scored on combined distances."""

    def __init__(self, blocks: list[np.ndarray], q: float):
        # blocks[c] is the (n, n) squared-distance matrix of column c's own entries.
        self.blocks = blocks
        n = blocks[0].shape[0]
        self.perms = [np.arange(n) for _ in blocks]
        self.pairs = _PairSums(self._total_sq(), q)

    def _total_sq(self):
        return sum(Q[np.ix_(p, p)] for Q, p in zip(self.blocks, self.perms))

    @property
    def value(self):
        return self.pairs.value

    def propose(self, rng):
        n = self.perms[0].size
        i, j = rng.choice(n, size=2, replace=False)
        return int(rng.integers(len(self.blocks))), int(i), int(j)

    def trial(self, move):
        c, i, j = move
        Q, p = self.blocks[c], self.perms[c]
        p_new = p.copy()
        p_new[i], p_new[j] = p[j], p[i]
        sq = self.pairs.sq
        rows = {r: sq[r] - Q[p[r], p] + Q[p_new[r], p_new] for r in (i, j)}
        value, _ = self.pairs.trial(rows)
        return value, (c, p_new, rows)

    def apply(self, token):
        c, p_new, rows = token
        self.perms[c] = p_new
        self.pairs.apply(rows)

    def snapshot(self):
        return [p.copy() for p in self.perms]


def _scalar_block(v: np.ndarray) -> np.ndarray:
    return (v[:, None] - v[None, :]) ** 2


def _as_coefs(curves) -> tuple[np.ndarray, BSplineBasis]:
    curves = list(curves)
    basis = curves[0].basis
    if any(c.basis != basis for c in curves):
        raise ValueError("a candidate set must use one basis")
    return np.array([c.beta for c in curves]), basis


def assemble_design(
    scalar_lhd: np.ndarray,
    candidate_sets: Sequence[Sequence[FunctionalCurve]],
    q: float = DEFAULT_Q,
    sa: SaConfig | None = None,
    seed=None,
) -> Design:
    """Align a scalar LHD with one candidate set per functional input.

    Only the pairing of rows changes: annealing swaps two rows inside one
    randomly chosen column, so each column keeps its contents.
    """
    sa = sa or SaConfig()
    X = np.asarray(scalar_lhd, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    sets = [_as_coefs(cs) for cs in candidate_sets]
    for coefs, _ in sets:
        if coefs.shape[0] != n:
            raise ValueError(f"candidate set has {coefs.shape[0]} curves, scalar LHD has {n} rows")
    if n < 2:
        raise ValueError("need at least two runs")

    blocks = [_scalar_block(X[:, c]) for c in range(X.shape[1])]
    blocks += [pairwise_sq_functional(coefs, b.gram) for coefs, b in sets]
    if not blocks:
        raise ValueError("design has no inputs")
    problem = _AlignProblem(blocks, q)
    rng = np.random.default_rng(seed)
    res = _anneal(problem, sa, rng)

    perms = res.state
    d_s = X.shape[1]
    scalars = np.column_stack([X[perms[c], c] for c in range(d_s)]) if d_s else np.zeros((n, 0))
    functionals = tuple(coefs[perms[d_s + k]] for k, (coefs, _) in enumerate(sets))
    design = Design(scalars, functionals, tuple(b for _, b in sets))
    crit = phi_qc(design, q)
    return Design(scalars, functionals, design.bases, crit, {"q": q, "initial_criterion": res.initial_value})


def generalized_lhd(
    n: int,
    d_s: int,
    d_f: int,
    K: int,
    m: int,
    q: float = DEFAULT_Q,
    sa: SaConfig | None = None,
    seed=None,
    restarts: int = 1,
) -> Design:
    """Both construction stages; one candidate set is shared by all functional inputs."""
    if n < 2:
        raise ValueError(f"a design needs n >= 2 runs, got {n}")
    if d_s < 0 or d_f < 0 or d_s + d_f == 0:
        raise ValueError("need at least one input")
    basis = make_basis(K, m)
    s_cand, s_lhd, s_align = _seeds(seed, 3)
    cands = candidate_set(n, basis, q, sa, s_cand, restarts) if d_f else []
    X = lhd(n, d_s, s_lhd)
    design = assemble_design(X, [cands] * d_f, q, sa, s_align)
    meta = dict(design.meta, n=n, d_s=d_s, d_f=d_f, K=K, m=m, seed=seed)
    return Design(design.scalars, design.functionals, (basis,) * d_f, design.criterion, meta)


class _FreeProblem:
    """Unconstrained coefficients plus scalar row swaps, scored on combined distances."""

    def __init__(self, X: np.ndarray, coefs: list[np.ndarray], J: np.ndarray, q: float, step: float):
        self.X = X.copy()
        self.coefs = [c.copy() for c in coefs]
        self.J = J
        self.step = step
        self.f_sq = [pairwise_sq_functional(c, J) for c in self.coefs]
        self.pairs = _PairSums(self._scalar_sq() + sum(self.f_sq), q)

    def _scalar_sq(self):
        return np.sum((self.X[:, None, :] - self.X[None, :, :]) ** 2, axis=-1)

    @property
    def value(self):
        return self.pairs.value

    def propose(self, rng):
        n, d_s = self.X.shape
        n_coef = sum(c.size for c in self.coefs)
        n_swap = d_s * n
        if rng.random() < n_swap / (n_swap + n_coef):
            i, j = rng.choice(n, size=2, replace=False)
            return ("swap", int(rng.integers(d_s)), int(i), int(j))
        k = int(rng.integers(len(self.coefs)))
        i = int(rng.integers(n))
        c = int(rng.integers(self.coefs[k].shape[1]))
        value = float(np.clip(self.coefs[k][i, c] + self.step * rng.standard_normal(), 0.0, 1.0))
        return ("coef", k, i, c, value)

    def trial(self, move):
        sq = self.pairs.sq
        if move[0] == "swap":
            _, c, i, j = move
            x = self.X[:, c]
            x_new = x.copy()
            x_new[i], x_new[j] = x[j], x[i]
            rows = {r: sq[r] - (x[r] - x) ** 2 + (x_new[r] - x_new) ** 2 for r in (i, j)}
            value, _ = self.pairs.trial(rows)
            return value, (move, rows, None)
        _, k, i, c, v = move
        row = self.coefs[k][i].copy()
        row[c] = v
        d = self.coefs[k] - row
        d[i] = 0.0
        f_row = np.maximum(np.einsum("ak,kl,al->a", d, self.J, d), 0.0)
        rows = {i: sq[i] - self.f_sq[k][i] + f_row}
        value, _ = self.pairs.trial(rows)
        return value, (move, rows, f_row)

    def apply(self, token):
        move, rows, f_row = token
        if move[0] == "swap":
            _, c, i, j = move
            self.X[[i, j], c] = self.X[[j, i], c]
        else:
            _, k, i, c, v = move
            self.coefs[k][i, c] = v
            self.f_sq[k][i, :] = f_row
            self.f_sq[k][:, i] = f_row
        self.pairs.apply(rows)

    def snapshot(self):
        return self.X.copy(), [c.copy() for c in self.coefs]


def free_maximin_demo(
    n: int,
    d_s: int,
    d_f: int,
    basis: BSplineBasis,
    q: float = DEFAULT_Q,
    seed=None,
    sa: SaConfig | None = None,
    step: float = 0.25,
) -> Design:
    """Anneal curve coefficients freely in [0, 1] instead of on LHD levels.

    Used to show what goes wrong without the Latin hypercube restriction:
    optimal coefficients pile up at 0 and 1.
    """
    if n < 2 or d_f < 1:
        raise ValueError("need n >= 2 runs and at least one functional input")
    if n * basis.K * d_f > 5000:
        raise ValueError("free_maximin_demo is meant for small instances")
    sa = sa or SaConfig()
    s_init, s_anneal = _seeds(seed, 2)
    rng0 = np.random.default_rng(s_init)
    X = lhd(n, d_s, rng0)
    coefs = [rng0.random((n, basis.K)) for _ in range(d_f)]
    problem = _FreeProblem(X, coefs, basis.gram, q, step)
    res = _anneal(problem, sa, np.random.default_rng(s_anneal))
    X_best, coefs_best = res.state
    design = Design(X_best, tuple(coefs_best), (basis,) * d_f)
    meta = {"q": q, "n": n, "d_s": d_s, "d_f": d_f, "K": basis.K, "m": basis.m, "seed": seed,
            "initial_criterion": res.initial_value}
    return Design(X_best, tuple(coefs_best), design.bases, phi_qc(design, q), meta)


def extreme_fraction(coefs: np.ndarray, tol: float = 0.05) -> float:
    """Share of coefficients within ``tol`` of 0 or 1."""
    c = np.asarray(coefs)
    return float(np.mean((c <= tol) | (c >= 1.0 - tol)))
