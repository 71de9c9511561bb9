import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from funcexp.bspline import make_basis
from funcexp.errors import IllConditionedError
from funcexp.gpmodel import (
    ExperimentRecord,
    GpModel,
    GpParams,
    KernelSpec,
    correlation,
    correlation_matrix,
    fit,
    kernel_eval,
    log_likelihood,
    profile_log_likelihood,
)
from funcexp.gpmodel import _factor
from funcexp.metric import RunSet, functional_dist, weighted_functional_dist, beta_weight_matrix

B7 = make_basis(7, 4)


def random_runs(rng, n, d_s=2, d_f=1, basis=B7):
    return RunSet(rng.random((n, d_s)), tuple(rng.random((n, basis.K)) for _ in range(d_f)), (basis,) * d_f)


def params_for(runs, rng, omega=False, nugget=1e-8):
    return GpParams(
        mu=float(rng.normal()),
        sigma2=float(rng.uniform(0.5, 2.0)),
        theta_s=rng.uniform(0.2, 1.0, runs.d_s),
        theta_f=rng.uniform(0.1, 0.5, runs.d_f),
        omega=rng.uniform(0.5, 4.0, (runs.d_f, 2)) if omega else None,
        nugget=nugget,
    )


def dense_corr(runs, p, kernel):
    """Correlation matrix assembled entry by entry from the metric functions."""
    n = len(runs)
    pts = list(runs)
    R = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            for l in range(runs.d_s):
                R[i, j] *= kernel_eval(kernel, abs(pts[i].x[l] - pts[j].x[l]), p.theta_s[l])
            for k in range(runs.d_f):
                f, g = pts[i].f[k], pts[j].f[k]
                h = (weighted_functional_dist(f, g, beta_weight_matrix(p.omega[k], f.basis))
                     if p.weighted else functional_dist(f, g))
                R[i, j] *= kernel_eval(kernel, h, p.theta_f[k])
    return R


def test_kernel_values():
    for fam in ("gaussian", "matern52"):
        assert kernel_eval(fam, 0.0, 0.7) == 1.0
    assert kernel_eval("gaussian", 0.3, 0.3) == pytest.approx(0.6065306597126334, abs=1e-15)
    expected = (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5))
    assert kernel_eval("matern52", 1.0, 1.0) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.523994, abs=1e-6)
    assert KernelSpec("gauss").family == "gaussian"
    with pytest.raises(ValueError):
        kernel_eval("matern52", 0.1, 0.0)
    with pytest.raises(ValueError):
        kernel_eval("gaussian", -0.1, 1.0)
    with pytest.raises(ValueError):
        KernelSpec("cubic")


@pytest.mark.parametrize("fam", ["gaussian", "matern52"])
def test_kernel_monotone_and_bounded(fam):
    h = np.linspace(0, 5, 501)
    g = kernel_eval(fam, h, 0.8)
    assert np.all(np.diff(g) < 0) and np.all(g > 0) and g[0] == 1.0


def test_correlation_product(rng):
    runs = random_runs(rng, 2, d_s=1, d_f=1)
    a, b = runs
    # Pick ranges so that each factor equals one half.
    hx = abs(a.x[0] - b.x[0])
    hf = functional_dist(a.f[0], b.f[0])
    scale = np.sqrt(2 * np.log(2))
    p = GpParams(0.0, 1.0, [hx / scale], [hf / scale])
    assert correlation(a, b, p, "gaussian") == pytest.approx(0.25, abs=1e-14)
    assert correlation(a, a, p, "gaussian") == 1.0


@pytest.mark.parametrize("kernel", ["gaussian", "matern52"])
@pytest.mark.parametrize("weighted", [False, True])
def test_correlation_matrix_componentwise_oracle(kernel, weighted, rng):
    runs = random_runs(rng, 6, d_s=2, d_f=2)
    p = params_for(runs, rng, omega=weighted)
    np.testing.assert_allclose(correlation_matrix(runs, p, kernel), dense_corr(runs, p, kernel), atol=1e-12)


def test_correlation_matrices_psd(rng):
    for r in range(50):
        n = int(rng.integers(5, 61))
        runs = random_runs(rng, n, d_s=int(rng.integers(0, 3)), d_f=int(rng.integers(1, 3)))
        p = params_for(runs, rng, omega=bool(r % 2))
        R = correlation_matrix(runs, p, "gaussian" if r % 3 else "matern52")
        ev = np.linalg.eigvalsh(R)
        assert ev.min() >= -1e-8 * ev.max()
        model = GpModel.from_params(p, ExperimentRecord(runs, rng.normal(size=n)), "gaussian" if r % 3 else "matern52")
        L = model.factor
        np.testing.assert_allclose(L @ L.T, R + model.params.nugget * np.eye(n), rtol=0, atol=1e-8)


def test_weighting_identifiability(rng):
    runs = random_runs(rng, 12, d_s=2, d_f=3)
    p = params_for(runs, rng)
    K = B7.K
    pw = GpParams(p.mu, p.sigma2, p.theta_s, p.theta_f / K, np.ones((3, 2)), p.nugget)
    for kernel in ("gaussian", "matern52"):
        np.testing.assert_allclose(correlation_matrix(runs, pw, kernel), correlation_matrix(runs, p, kernel),
                                   rtol=0, atol=1e-12)


def dense_loglik(runs, y, p, kernel):
    C = p.sigma2 * (dense_corr(runs, p, kernel) + p.nugget * np.eye(len(y)))
    r = y - p.mu
    _, logdet = np.linalg.slogdet(C)
    return -0.5 * (len(y) * np.log(2 * np.pi) + logdet + r @ np.linalg.inv(C) @ r)


@pytest.mark.parametrize("weighted", [False, True])
def test_log_likelihood_dense_oracle(weighted, rng):
    for n in (3, 8, 20):
        runs = random_runs(rng, n)
        p = params_for(runs, rng, omega=weighted, nugget=1e-6)
        y = rng.normal(size=n)
        for kernel in ("gaussian", "matern52"):
            ll = log_likelihood(p, ExperimentRecord(runs, y), kernel)
            assert ll == pytest.approx(dense_loglik(runs, y, p, kernel), abs=1e-8)


def test_log_likelihood_two_point_independent():
    runs = RunSet(np.array([[0.0], [1.0]]))
    y = np.array([0.3, -1.1])
    p = GpParams(0.2, 1.7, [1e-3], [], nugget=1e-8)
    ll = log_likelihood(p, ExperimentRecord(runs, y), "gaussian")
    cov = 1.7 * (1 + 1e-8) * np.eye(2)
    assert ll == pytest.approx(stats.multivariate_normal(mean=[0.2, 0.2], cov=cov).logpdf(y), abs=1e-12)


def test_profile_likelihood_is_concentrated(rng):
    runs = random_runs(rng, 10)
    y = rng.normal(size=10)
    data = ExperimentRecord(runs, y)
    ll, p = profile_log_likelihood(data, [0.4, 0.6], [0.3])
    assert ll == pytest.approx(log_likelihood(p, data), abs=1e-9)
    for dmu, ds in [(0.1, 1.0), (-0.1, 1.0), (0.0, 1.2), (0.0, 0.8)]:
        q = GpParams(p.mu + dmu, p.sigma2 * ds, p.theta_s, p.theta_f, nugget=p.nugget)
        assert log_likelihood(q, data) < ll


def test_scaling_outputs(rng):
    runs = random_runs(rng, 10)
    y = rng.normal(size=10)
    c = 7.5
    grid = [(a, b) for a in (0.2, 0.5, 1.0) for b in (0.1, 0.3)]
    base = [profile_log_likelihood(ExperimentRecord(runs, y), [a, a], [b]) for a, b in grid]
    scaled = [profile_log_likelihood(ExperimentRecord(runs, c * y), [a, a], [b]) for a, b in grid]
    assert int(np.argmax([v[0] for v in base])) == int(np.argmax([v[0] for v in scaled]))
    for (_, p), (_, q) in zip(base, scaled):
        assert q.sigma2 == pytest.approx(c**2 * p.sigma2, rel=1e-10)


def test_fit_beats_grid_on_1d_toy():
    x = np.array([0.05, 0.3, 0.45, 0.7, 0.95])
    y = np.sin(6 * x) + 0.5 * x
    data = ExperimentRecord(RunSet(x[:, None]), y)
    model = fit(data, "matern52", seed=1)
    upper = 10 * (x.max() - x.min())
    grid = np.exp(np.linspace(np.log(1e-3), np.log(upper), 10_000))
    lls = [profile_log_likelihood(data, [t], [], kernel="matern52")[0] for t in grid]
    assert model.loglik >= max(lls) - 1e-9 * abs(max(lls))


def test_fit_deterministic_and_bounded(rng):
    runs = random_runs(rng, 12)
    y = runs.x[:, 0] + 2 * runs.coefs[0] @ np.linspace(0, 1, 7)
    data = ExperimentRecord(runs, y)
    a = fit(data, "gaussian", weighting=True, multistart=10, seed=4)
    b = fit(data, "gaussian", weighting=True, multistart=10, seed=4)
    assert a.loglik == b.loglik
    np.testing.assert_array_equal(a.params.omega, b.params.omega)
    assert np.all((a.params.omega >= 0.05) & (a.params.omega <= 50))
    assert np.all(a.params.theta_s >= 1e-3)
    plain = fit(data, "gaussian", weighting=False, multistart=10, seed=4)
    assert a.loglik >= plain.loglik - 1e-9


def test_fit_rejects_duplicate_runs(rng):
    runs = random_runs(rng, 4)
    dup = RunSet(np.vstack([runs.x, runs.x[:1]]), (np.vstack([runs.coefs[0], runs.coefs[0][:1]]),), runs.bases)
    with pytest.raises(ValueError):
        fit(ExperimentRecord(dup, np.arange(5.0)), multistart=2)


def test_record_validation(rng):
    runs = random_runs(rng, 4)
    with pytest.raises(ValueError):
        ExperimentRecord(runs, np.zeros(3))
    with pytest.raises(ValueError):
        ExperimentRecord(runs, [0, 1, np.nan, 2])


def test_parameter_validation():
    with pytest.raises(ValueError):
        GpParams(0.0, 1.0, [0.0], [])
    with pytest.raises(ValueError):
        GpParams(0.0, 1.0, [1.0], [1.0], omega=[[1.0, -1.0]])
    with pytest.raises(ValueError):
        GpParams(0.0, 1.0, [1.0], [1.0, 1.0], omega=[[1.0, 1.0]])


def test_nugget_escalation_and_failure():
    runs = RunSet(np.array([[0.0], [1e-9], [1.0]]))
    p = GpParams(0.0, 1.0, [5.0], [], nugget=0.0)
    model = GpModel.from_params(p, ExperimentRecord(runs, [0.0, 0.0, 1.0]), "gaussian")
    assert 0.0 <= model.params.nugget <= 1e-4
    L, nug = _factor(np.ones((3, 3)), 0.0)
    assert nug == 1e-8
    np.testing.assert_allclose(L @ L.T, np.ones((3, 3)) + 1e-8 * np.eye(3), atol=1e-15)
    with pytest.raises(IllConditionedError):
        _factor(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-8)
    with pytest.raises(ValueError):
        GpParams(0.0, 1.0, [1.0], [], nugget=-1.0)


def test_prediction_interpolates(rng):
    runs = random_runs(rng, 15, d_s=2, d_f=2)
    y = rng.normal(size=15) * 10
    model = fit(ExperimentRecord(runs, y), "matern52", weighting=True, multistart=8, seed=2)
    mean, var = model.predict(runs)
    np.testing.assert_allclose(mean, y, rtol=1e-6, atol=1e-6 * np.abs(y).max())
    assert np.all(var <= 1e-6 * model.params.sigma2)


def test_prediction_reverts_far_away(rng):
    x = np.array([[0.0], [0.1], [0.2], [0.3]])
    data = ExperimentRecord(RunSet(x), [1.0, 2.0, 0.5, 1.5])
    ll, p = profile_log_likelihood(data, [0.01], [], kernel="gaussian")
    model = GpModel.from_params(p, data, "gaussian")
    mean, var = model.predict(RunSet(np.array([[1.0]])))
    assert mean[0] == pytest.approx(p.mu, abs=1e-6)
    assert var[0] == pytest.approx(p.sigma2 * (1 + p.nugget), rel=1e-6)


def dense_predict(runs, y, p, kernel, new):
    C = dense_corr(runs, p, kernel) + p.nugget * np.eye(len(y))
    Ci = np.linalg.inv(C)
    n, m = len(runs), len(new)
    r = np.empty((m, n))
    combined = RunSet(np.vstack([new.x, runs.x]), tuple(np.vstack([a, b]) for a, b in zip(new.coefs, runs.coefs)), runs.bases)
    full = dense_corr(combined, p, kernel)
    r = full[:m, m:]
    mean = p.mu + r @ Ci @ (y - p.mu)
    var = p.sigma2 * (1 + p.nugget - np.einsum("ij,jk,ik->i", r, Ci, r))
    return mean, var


@pytest.mark.parametrize("kernel", ["gaussian", "matern52"])
def test_prediction_dense_oracle(kernel, rng):
    runs = random_runs(rng, 3, d_s=1, d_f=1)
    y = rng.normal(size=3)
    p = params_for(runs, rng, nugget=1e-6)
    model = GpModel.from_params(p, ExperimentRecord(runs, y), kernel)
    new = random_runs(rng, 5, d_s=1, d_f=1)
    mean, var = model.predict(new)
    m_ref, v_ref = dense_predict(runs, y, p, kernel, new)
    np.testing.assert_allclose(mean, m_ref, atol=1e-8)
    np.testing.assert_allclose(var, v_ref, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_prediction_linear_in_outputs(seed, a, b):
    rng = np.random.default_rng(seed)
    runs = random_runs(rng, 8)
    p = params_for(runs, rng)
    y, z = rng.normal(size=8), rng.normal(size=8)
    new = random_runs(rng, 4)
    pred = lambda v: GpModel.from_params(p, ExperimentRecord(runs, v)).predict(new)[0]
    # mu is held fixed, so the predictor is affine; remove the trend to test linearity.
    lin = lambda v: pred(v) - p.mu
    np.testing.assert_allclose(lin(a * y + b * z + (1 - a - b) * p.mu), a * lin(y) + b * lin(z), atol=1e-10)


def literal_loo(model):
    """Refit-free hold-out: drop run i, keep ranges, weights and variance, re-estimate the trend."""
    p, runs, y = model.params, model.data.runs, model.data.y
    C = correlation_matrix(runs, p, model.kernel) + p.nugget * np.eye(len(y))
    preds, vars_ = [], []
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        Ci = np.linalg.inv(C[np.ix_(keep, keep)])
        one = np.ones(keep.sum())
        mu = one @ Ci @ y[keep] / (one @ Ci @ one)
        c = C[i, keep]
        preds.append(mu + c @ Ci @ (y[keep] - mu))
        vars_.append(p.sigma2 * (C[i, i] - c @ Ci @ c))
    return np.array(preds), np.array(vars_)


@pytest.mark.parametrize("n", [3, 6, 10])
def test_loo_matches_hold_out(n, rng):
    runs = random_runs(rng, n)
    y = rng.normal(size=n)
    model = GpModel.from_params(params_for(runs, rng, nugget=1e-6), ExperimentRecord(runs, y), "matern52")
    pred, var = model.loo()
    ref_pred, ref_var = literal_loo(model)
    np.testing.assert_allclose(pred, ref_pred, atol=1e-8)
    np.testing.assert_allclose(var, ref_var, atol=1e-8)
    assert np.all(np.isfinite(pred)) and np.all(var > 0)


def test_loo_independence_limit(rng):
    runs = random_runs(rng, 6, d_s=1, d_f=0)
    y = rng.normal(size=6)
    model = GpModel.from_params(GpParams(0.0, 1.0, [1e-4], []), ExperimentRecord(runs, y), "gaussian")
    pred, _ = model.loo()
    others = (y.sum() - y) / 5
    np.testing.assert_allclose(pred, others, atol=1e-10)


def test_loo_needs_three_runs():
    data = ExperimentRecord(RunSet(np.array([[0.0], [1.0]])), [0.0, 1.0])
    with pytest.raises(ValueError):
        GpModel.from_params(GpParams(0.0, 1.0, [1.0], []), data).loo()


def test_sensitivity(rng):
    runs = random_runs(rng, 4, d_s=1, d_f=1)
    data = ExperimentRecord(runs, rng.normal(size=4))
    model = GpModel.from_params(GpParams(0.0, 1.0, [1.0], [1e6]), data, "gaussian")
    s = model.sensitivity()
    assert s[0] == pytest.approx(0.3934693402873666, abs=1e-15)
    assert s[1] == pytest.approx(0.0, abs=1e-11)
    for fam in ("gaussian", "matern52"):
        vals = [GpModel.from_params(GpParams(0.0, 1.0, [t], [1.0]), data, fam).sensitivity()[0]
                for t in (0.2, 0.5, 1, 3, 10, 100)]
        assert np.all(np.diff(vals) < 0) and all(0 <= v < 1 for v in vals)


def test_weight_profiles(rng):
    runs = random_runs(rng, 5, d_s=1, d_f=2)
    data = ExperimentRecord(runs, rng.normal(size=5))
    model = GpModel.from_params(GpParams(0.0, 1.0, [1.0], [0.1, 0.1], omega=[[1, 1], [20, 1]]), data)
    flat = model.weight_profile(0, grid=41)
    np.testing.assert_allclose(flat.values, 1 / 7, atol=1e-15)
    assert flat.mean_location == pytest.approx(0.5, abs=1e-14)
    skew = model.weight_profile(1, grid=101)
    assert skew.mean_location > 0.8 and skew.values[-1] > skew.values[0]
    with pytest.raises(IndexError):
        model.weight_profile(2)
    plain = GpModel.from_params(GpParams(0.0, 1.0, [1.0], [0.1, 0.1]), data)
    with pytest.raises(ValueError):
        plain.weight_profile(0)


def test_weight_profile_integral_quadrature(rng):
    runs = random_runs(rng, 5, d_s=0, d_f=1)
    data = ExperimentRecord(runs, rng.normal(size=5))
    model = GpModel.from_params(GpParams(0.0, 1.0, [], [0.1], omega=[[2.5, 0.7]]), data)
    N = 4 * 27720
    prof = model.weight_profile(0, grid=N + 1)
    w = np.full(N + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    simpson = float(w @ prof.values) / (3 * N)
    assert prof.integral == pytest.approx(simpson, abs=1e-10)
    from funcexp.bspline import moment_vector
    assert prof.integral == pytest.approx(prof.weights @ moment_vector(B7, 0), abs=1e-15)


@pytest.mark.slow
def test_fit_recovers_generating_ranges():
    rng = np.random.default_rng(77)
    theta_s, theta_f = np.array([0.3]), np.array([0.25])
    truth = GpParams(0.0, 1.0, theta_s, theta_f, nugget=1e-10)
    hits = 0
    reps = 50
    for r in range(reps):
        runs = random_runs(rng, 40, d_s=1, d_f=1)
        R = correlation_matrix(runs, truth, "matern52") + 1e-10 * np.eye(40)
        y = np.linalg.cholesky(R) @ rng.normal(size=40)
        model = fit(ExperimentRecord(runs, y), "matern52", multistart=20, seed=r)
        ratio = np.concatenate([model.params.theta_s / theta_s, model.params.theta_f / theta_f])
        hits += bool(np.all((ratio > 0.5) & (ratio < 2.0)))
    assert hits >= 0.8 * reps
