"""On-disk formats: JSON for designs and models, CSV for tables.

JSON is written by a small deterministic emitter so that every float is
printed with 17 significant digits; reading a file and writing it back
reproduces it byte for byte. Non-finite floats are stored as ``null``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .bspline import make_basis
from .design import Design
from .gpmodel import ExperimentRecord, GpModel, GpParams, KernelSpec

__all__ = [
    "DESIGN_SCHEMA",
    "MODEL_SCHEMA",
    "dumps",
    "design_to_dict",
    "design_from_dict",
    "write_design",
    "read_design",
    "model_to_dict",
    "model_from_dict",
    "write_model",
    "read_model",
    "write_csv",
    "read_csv",
    "run_hash",
    "fmt",
]

DESIGN_SCHEMA = "funcexp.design/1"
MODEL_SCHEMA = "funcexp.model/1"


def fmt(x) -> str:
    """Locale-independent text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    text = f"{x:.17g}"
    if all(c not in text for c in ".en"):
        text += ".0"
    return text


def _emit(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return fmt(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    return _emit(obj, indent, 0) + "\n"


def _num(v) -> float:
    return float("nan") if v is None else float(v)


def _check_schema(d: dict, schema: str):
    if d.get("schema") != schema:
        raise ValueError(f"expected schema {schema!r}, found {d.get('schema')!r}")


def design_to_dict(design: Design) -> dict:
    meta = design.meta
    K = design.bases[0].K if design.bases else meta.get("K")
    m = design.bases[0].m if design.bases else meta.get("m")
    seed = meta.get("seed")
    return {
        "schema": DESIGN_SCHEMA,
        "n": design.n,
        "d_s": design.d_s,
        "d_f": design.d_f,
        "K": K,
        "m": m,
        "q": meta.get("q"),
        "seed": seed if isinstance(seed, (int, np.integer)) else None,
        "scalars": design.scalars,
        "functionals": list(design.functionals),
        "criterion": design.criterion,
    }


def design_from_dict(d: dict) -> Design:
    _check_schema(d, DESIGN_SCHEMA)
    n, d_s, d_f = int(d["n"]), int(d["d_s"]), int(d["d_f"])
    scalars = np.array(d["scalars"], dtype=float).reshape(n, d_s)
    bases = ()
    functionals = ()
    if d_f:
        basis = make_basis(int(d["K"]), int(d["m"]))
        functionals = tuple(np.array(c, dtype=float).reshape(n, basis.K) for c in d["functionals"])
        if len(functionals) != d_f:
            raise ValueError(f"design declares {d_f} functional inputs but stores {len(functionals)}")
        bases = (basis,) * d_f
    meta = {k: d.get(k) for k in ("n", "d_s", "d_f", "K", "m", "q", "seed")}
    return Design(scalars, functionals, bases, _num(d.get("criterion")), meta)


def write_design(path, design: Design) -> None:
    Path(path).write_text(dumps(design_to_dict(design)), encoding="utf-8")


def read_design(path) -> Design:
    return design_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def model_to_dict(model: GpModel, design: Design | None = None) -> dict:
    p = model.params
    runs = model.data.runs
    if design is None:
        design = Design(runs.x, runs.coefs, runs.bases)
    diagnostics = dict(model.diagnostics)
    diagnostics["loglik"] = model.loglik
    return {
        "schema": MODEL_SCHEMA,
        "kernel": model.kernel.family,
        "weighting": p.weighted,
        "params": {
            "mu": p.mu,
            "sigma2": p.sigma2,
            "theta_s": p.theta_s,
            "theta_f": p.theta_f,
            "omega": p.omega,
            "nugget": p.nugget,
        },
        "design": design_to_dict(design),
        "y": model.data.y,
        "diagnostics": diagnostics,
    }


def model_from_dict(d: dict) -> GpModel:
    _check_schema(d, MODEL_SCHEMA)
    design = design_from_dict(d["design"])
    record = ExperimentRecord(design.runs, np.array(d["y"], dtype=float))
    pd = d["params"]
    omega = pd.get("omega")
    if bool(d["weighting"]) != (omega is not None):
        raise ValueError("weighting flag and stored beta parameters disagree")
    params = GpParams(
        mu=float(pd["mu"]),
        sigma2=float(pd["sigma2"]),
        theta_s=np.array(pd["theta_s"], dtype=float),
        theta_f=np.array(pd["theta_f"], dtype=float),
        omega=None if omega is None else np.array(omega, dtype=float),
        nugget=float(pd["nugget"]),
    )
    return GpModel.from_params(params, record, KernelSpec(d["kernel"]), d.get("diagnostics", {}))


def write_model(path, model: GpModel, design: Design | None = None) -> None:
    Path(path).write_text(dumps(model_to_dict(model, design)), encoding="utf-8")


def read_model(path) -> GpModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def run_hash(design: Design, i: int) -> str:
    """Short digest identifying the inputs of run ``i``."""
    parts = [fmt(v) for v in design.scalars[i]]
    for c in design.functionals:
        parts.extend(fmt(v) for v in c[i])
    return hashlib.sha256(",".join(parts).encode()).hexdigest()[:16]
