"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.
Output paths default to ``$FUNCEXP_OUTPUT_DIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .bspline import make_basis
from .design import DEFAULT_Q, SaConfig, generalized_lhd
from .errors import DegenerateDesignError, FuncexpError, IllConditionedError
from .gpmodel import ExperimentRecord, fit
from .testbed import (
    evaluate,
    experiment_example1,
    experiment_order,
    experiment_remark1,
    experiment_weighting,
    random_test_points,
)
from .design import Design

logger = logging.getLogger("funcexp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "FUNCEXP_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _out_path(value: str | None, default_name: str) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _sa_config(args) -> SaConfig:
    try:
        return SaConfig(
            probe_moves=args.sa_probe,
            cooling=args.sa_cooling,
            inner=args.sa_inner,
            max_steps=args.sa_steps,
            patience=args.sa_patience,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_sa_flags(p):
    g = p.add_argument_group("annealing schedule")
    g.add_argument("--sa-probe", type=int, default=100, help="random moves used to set the start temperature")
    g.add_argument("--sa-cooling", type=float, default=0.95)
    g.add_argument("--sa-inner", type=int, default=100, help="proposals per temperature level")
    g.add_argument("--sa-steps", type=int, default=200, help="maximum temperature levels")
    g.add_argument("--sa-patience", type=int, default=20, help="levels without improvement before stopping")


def cmd_design(args) -> int:
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.scalars < 0 or args.functionals < 0 or args.scalars + args.functionals == 0:
        raise UsageError("need at least one scalar or functional input")
    if args.order < 1 or args.K < args.order:
        raise UsageError("need K >= order >= 1")
    design = generalized_lhd(args.n, args.scalars, args.functionals, args.K, args.order,
                             q=args.q, sa=_sa_config(args), seed=args.seed, restarts=args.restarts)
    out = _out_path(args.out, "design.json")
    io.write_design(out, design)
    print(f"criterion {io.fmt(design.criterion)}")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    basis = make_basis(args.K, args.order)
    runs = random_test_points(args.count, basis, args.seed, args.scalars, args.functionals)
    design = Design(runs.x, runs.coefs, runs.bases, meta={"seed": args.seed, "K": args.K, "m": args.order})
    io.write_design(_out_path(args.out, "points.json"), design)
    return EXIT_OK


def cmd_eval(args) -> int:
    design = io.read_design(args.design)
    try:
        y = evaluate(args.function, design.runs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [(str(i), io.run_hash(design, i), y[i]) for i in range(design.n)]
    io.write_csv(_out_path(args.out, "data.csv"), ["run", "input_hash", "y"], rows)
    return EXIT_OK


def _read_outputs(path, design: Design) -> np.ndarray:
    header, rows = io.read_csv(path)
    if "y" not in header:
        raise UsageError(f"{path} has no 'y' column")
    col = header.index("y")
    y = np.array([float(r[col]) for r in rows])
    if y.size != design.n:
        raise UsageError(f"{path} has {y.size} rows, design has {design.n} runs")
    return y


def cmd_fit(args) -> int:
    design = io.read_design(args.design)
    y = _read_outputs(args.data, design)
    weighting = args.weighting == "on"
    if weighting and design.d_f == 0:
        raise UsageError("--weighting on needs functional inputs")
    model = fit(ExperimentRecord(design.runs, y), args.kernel, weighting=weighting,
                multistart=args.starts, seed=args.seed)
    io.write_model(_out_path(args.out, "model.json"), model, design)
    print(f"loglik {io.fmt(model.loglik)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = io.read_model(args.model)
    points = io.read_design(args.points)
    try:
        mean, var = model.predict(points.runs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [(str(i), mean[i], var[i]) for i in range(mean.size)]
    io.write_csv(_out_path(args.out, "predictions.csv"), ["point", "mean", "variance"], rows)
    return EXIT_OK


def cmd_loo(args) -> int:
    model = io.read_model(args.model)
    mean, var = model.loo()
    y = model.data.y
    rows = [(str(i), y[i], mean[i], var[i], y[i] - mean[i]) for i in range(y.size)]
    io.write_csv(_out_path(args.out, "loo.csv"), ["run", "y", "loo_mean", "loo_variance", "residual"], rows)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    model = io.read_model(args.model)
    sens = model.sensitivity()
    theta = np.concatenate([model.params.theta_s, model.params.theta_f])
    rows = [(label, theta[i], sens[i]) for i, label in enumerate(model.labels)]
    io.write_csv(_out_path(args.out, "sensitivity.csv"), ["input", "theta", "sensitivity"], rows)
    return EXIT_OK


def cmd_weights(args) -> int:
    model = io.read_model(args.model)
    if not model.weighted:
        raise UsageError("model was fitted without weighting")
    d_f = model.data.runs.d_f
    profiles = [model.weight_profile(k, args.grid) for k in range(d_f)]
    header = ["t"] + [f"f{k + 1}" for k in range(d_f)]
    rows = [[t] + [p.values[i] for p in profiles] for i, t in enumerate(profiles[0].t)]
    io.write_csv(_out_path(args.out, "weights.csv"), header, rows)
    params_rows = []
    for k, p in enumerate(profiles):
        params_rows.append([f"f{k + 1}", p.omega[0], p.omega[1], p.mean_location] + list(p.weights))
    K = profiles[0].weights.size
    io.write_csv(
        _out_path(args.params_out, "weight_params.csv"),
        ["input", "alpha", "beta", "mean_location"] + [f"w{i + 1}" for i in range(K)],
        params_rows,
    )
    return EXIT_OK


def _exit_for(ok: int, total: int) -> int:
    return EXIT_OK if total and ok >= 0.8 * total else EXIT_NUMERIC


def _exp_weighting(args, out_dir: Path) -> int:
    res = experiment_weighting(n=args.n or 40, K=args.K or 7, m=args.order or 4, reps=args.reps,
                               seed=args.seed, test_size=args.test_size or 300,
                               multistart=args.starts, sa=_sa_config(args))
    rows, ok = [], [r for r in res if r is not None]
    for i, r in enumerate(res):
        if r is None:
            rows.append([str(i), "failed", "", "", "", ""])
        else:
            w, u = r
            rows.append([str(i), "ok", w.rmse, u.rmse, w.normalized_rmse, u.normalized_rmse])
    io.write_csv(out_dir / "weighting_replications.csv",
                 ["rep", "status", "rmse_weighted", "rmse_unweighted", "nrmse_weighted", "nrmse_unweighted"], rows)
    if ok:
        nw = np.array([w.normalized_rmse for w, _ in ok])
        nu = np.array([u.normalized_rmse for _, u in ok])
        summary = [[len(ok), len(res) - len(ok), np.mean([w.rmse for w, _ in ok]), np.mean([u.rmse for _, u in ok]),
                    nw.mean(), nu.mean(), float(np.mean(nw < nu))]]
    else:
        summary = [[0, len(res), "", "", "", "", ""]]
    io.write_csv(out_dir / "weighting_summary.csv",
                 ["ok", "failed", "mean_rmse_weighted", "mean_rmse_unweighted", "mean_nrmse_weighted",
                  "mean_nrmse_unweighted", "fraction_weighted_better"], summary)
    return _exit_for(len(ok), len(res))


def _exp_order(args, out_dir: Path) -> int:
    study = experiment_order(n=args.n or 20, K=args.K or 7, reps=args.reps, seed=args.seed,
                             test_size=args.test_size or 600, multistart=args.starts, sa=_sa_config(args))
    rows = []
    for m in study.orders:
        for r in study.reports[m]:
            rows.append([m, r.meta["rep"], r.rmse] + list(r.sensitivity))
    io.write_csv(out_dir / "order_replications.csv", ["order", "rep", "rmse"] + study.labels, rows)
    avg, std = study.average_rmse(), study.std_rmse()
    header = ["statistic"] + [f"m{m}" for m in study.orders]
    io.write_csv(out_dir / "order_summary.csv", header, [
        ["average_rmse"] + [avg[m] for m in study.orders],
        ["std_rmse"] + [std[m] for m in study.orders],
        ["ok"] + [len(study.reports[m]) for m in study.orders],
        ["failed"] + [study.failures[m] for m in study.orders],
    ])
    ok = sum(len(v) for v in study.reports.values())
    return _exit_for(ok, ok + sum(study.failures.values()))


def _exp_remark1(args, out_dir: Path) -> int:
    res = experiment_remark1(n=args.n or 15, K=args.K or 8, m=args.order or 4, seed=args.seed, sa=_sa_config(args))
    t = np.linspace(0.0, 1.0, 101)
    rows = []
    for name in ("free", "constrained"):
        design = res[name]
        curves = design.curves(0)
        for i, c in enumerate(curves):
            vals = c(t)
            rows.extend([name, i, tj, v] for tj, v in zip(t, vals))
    io.write_csv(out_dir / "remark1_curves.csv", ["design", "run", "t", "f1"], rows)
    io.write_csv(out_dir / "remark1_summary.csv",
                 ["design", "extreme_fraction", "criterion"],
                 [["free", res["free_extreme_fraction"], res["free"].criterion],
                  ["constrained", res["constrained_extreme_fraction"], res["constrained"].criterion]])
    return EXIT_OK


def _exp_example1(args, out_dir: Path) -> int:
    res = experiment_example1(n=args.n or 20, K=args.K or 7, m=args.order or 4, reps=args.reps,
                              seed=args.seed, multistart=args.starts, sa=_sa_config(args))
    from .gpmodel import input_labels

    labels = input_labels(3, 3)
    rows = []
    for i, r in enumerate(res):
        if r is None:
            rows.append([str(i), "failed"] + [""] * 9)
        else:
            rows.append([str(i), "ok"] + list(r["sensitivity"]) + list(r["mean_location"]))
    io.write_csv(out_dir / "example1_replications.csv",
                 ["rep", "status"] + labels + ["loc_f1", "loc_f2", "loc_f3"], rows)
    done = [r for r in res if r is not None]
    if done:
        sens = np.mean([r["sensitivity"] for r in done], axis=0)
        share = float(np.mean([r["mean_location"][0] > 0.5 for r in done]))
        summary = [[len(done), len(res) - len(done)] + list(sens) + [share]]
    else:
        summary = [[0, len(res)] + [""] * 7]
    io.write_csv(out_dir / "example1_summary.csv",
                 ["ok", "failed"] + [f"mean_{l}" for l in labels] + ["fraction_loc_f1_above_half"], summary)
    ok = len(done)
    return _exit_for(ok, len(res))


EXPERIMENTS = {
    "weighting": _exp_weighting,
    "order-comparison": _exp_order,
    "remark1": _exp_remark1,
    "example1": _exp_example1,
}


def cmd_experiment(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    out_dir = Path(args.out_dir) if args.out_dir else Path(os.environ.get(OUTPUT_ENV, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    return EXPERIMENTS[args.name](args, out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcexp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="build a generalized Latin hypercube design")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--scalars", type=int, default=0)
    p.add_argument("--functionals", type=int, default=1)
    p.add_argument("--K", type=int, default=7)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--q", type=float, default=DEFAULT_Q)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out")
    _add_sa_flags(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("sample", help="draw random test points in design-file format")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--scalars", type=int, default=3)
    p.add_argument("--functionals", type=int, default=3)
    p.add_argument("--K", type=int, default=7)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="evaluate a test function on a design")
    p.add_argument("--design", required=True)
    p.add_argument("--function", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit", help="fit a GP model by maximum likelihood")
    p.add_argument("--data", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--kernel", choices=["gauss", "gaussian", "matern52"], default="matern52")
    p.add_argument("--weighting", choices=["on", "off"], default="off")
    p.add_argument("--starts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict at points stored in a design file")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    for name, func, default, helptext in (
        ("loo", cmd_loo, "loo.csv", "leave-one-out predictions"),
        ("sensitivity", cmd_sensitivity, "sensitivity.csv", "1 - g(1; theta) per input"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("weights", help="fitted weight profiles of a weighted model")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--out")
    p.add_argument("--params-out")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("experiment", help="replication studies")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--starts", type=int, default=50)
    p.add_argument("--out-dir")
    _add_sa_flags(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"funcexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateDesignError, IllConditionedError, FuncexpError, np.linalg.LinAlgError) as exc:
        print(f"funcexp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"funcexp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"funcexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
