"""File formats: model/test-spec JSON and per-k CSV tables.

CSV tables are UTF-8 with LF line endings. Floats are written with
``repr`` (shortest round-tripping form), so re-reading is lossless and
identical inputs give byte-identical files.

Model JSON::

    {"n": 2, "p": 1, "K_max": 20,
     "X": [1, 1],                       # row-major, n*p numbers (nested rows also accepted)
     "spectrum": {"kind": "power-law", "params": {"scale": 1.0, "exponent": 2.0}},
     "rho": [[1, 0], [0, 1]],           # optional, identity by default
     "beta": [[...], ...],              # optional, K_max rows of p numbers
     "sigma": 1.0}

Test-spec JSON::

    {"K": [[[...]]] or {"base": m x p, "decay": a},
     "C": K_max x m (optional, zeros by default),
     "alpha": 0.05}

The generator form sets ``K_l = base * l**-decay``.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, ValidationError
from .model import ModelSpec, SpectrumFamily, build_lambda
from .spectral import BasisMeta, CoefficientBlock, SpectralMatrixOperator
from .testing import TestSpec


def _matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 1 and a.size == rows * cols:
        a = a.reshape(rows, cols)
    if a.shape != (rows, cols):
        raise DimensionError(f"{name} must be {rows}x{cols} (row-major), got shape {a.shape}")
    return a


def _require(doc: dict, keys: Sequence[str], what: str):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ValidationError(f"{what} is missing field(s): {', '.join(missing)}")


def model_from_dict(doc: dict, K_max: Optional[int] = None) -> ModelSpec:
    """Build a model from its JSON document; ``K_max`` overrides the file value.

    A smaller override truncates ``beta``; a larger one needs ``beta`` to be
    absent or long enough.
    """
    _require(doc, ("n", "p", "K_max", "X", "spectrum"), "model document")
    n, p = int(doc["n"]), int(doc["p"])
    K = int(K_max if K_max is not None else doc["K_max"])
    if K < 1:
        raise ValidationError("K_max must be at least 1")
    X = _matrix(doc["X"], n, p, "X")
    spec = doc["spectrum"]
    _require(spec, ("kind",), "spectrum block")
    rho = doc.get("rho")
    if rho is None and spec["kind"] == "power-law":
        rho = np.eye(n)  # lets a scalar law cover all n components
    family = SpectrumFamily(spec["kind"], dict(spec.get("params", {})), rho)
    if family.n != n:
        raise DimensionError(f"spectrum describes {family.n} components, model has n={n}")
    lam = build_lambda(family, K)
    beta = None
    if doc.get("beta") is not None:
        b = np.asarray(doc["beta"], dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, p)
        if b.ndim != 2 or b.shape[1] != p:
            raise DimensionError(f"beta must have p={p} columns, got shape {b.shape}")
        if b.shape[0] < K:
            raise DimensionError(f"beta has {b.shape[0]} rows, K_max={K} requested")
        beta = CoefficientBlock(b[:K], lam.basis)
    return ModelSpec(X, lam, beta, float(doc.get("sigma", 1.0)), family)


def model_to_dict(model: ModelSpec) -> dict:
    if model.family is None:
        raise ValidationError("only models built from a spectrum family can be serialized")
    fam = model.family.to_dict()
    return {
        "n": model.n,
        "p": model.p,
        "K_max": model.K_max,
        "X": model.X.ravel().tolist(),
        "spectrum": {"kind": fam["kind"], "params": fam["params"]},
        "rho": fam["rho"],
        "beta": model.beta.data.tolist(),
        "sigma": model.sigma,
    }


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def write_json(path, doc: dict):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_model(path, K_max: Optional[int] = None) -> ModelSpec:
    return model_from_dict(read_json(path), K_max)


def model_hash(doc: dict) -> str:
    """SHA-256 of the canonical (sorted, compact) JSON form."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# -- CSV -------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def table_to_csv(header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, header: Sequence[str], rows):
    Path(path).write_text(table_to_csv(header, rows), encoding="utf-8", newline="\n")


def read_table(path) -> tuple:
    """Return ``(header, float array)`` of a CSV written by :func:`write_table`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV file") from None
        try:
            data = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric entry ({exc})") from None
    arr = np.asarray(data, dtype=float).reshape(-1, len(header))
    return header, arr


def write_block(path, block: CoefficientBlock, prefix: str = "y"):
    """Columns ``k, <prefix>_1 .. <prefix>_d``; one row per frequency."""
    K, d = block.data.shape
    header = ["k"] + [f"{prefix}_{j + 1}" for j in range(d)]
    rows = ([k + 1, *block.data[k]] for k in range(K))
    write_table(path, header, rows)


def read_block(path, basis: Optional[BasisMeta] = None) -> CoefficientBlock:
    header, arr = read_table(path)
    if not header or header[0] != "k":
        raise ValidationError(f"{path}: first column must be 'k'")
    k = arr[:, 0]
    if not np.array_equal(k, np.arange(1, k.size + 1)):
        raise ValidationError(f"{path}: column k must run 1..K_max in order")
    data = arr[:, 1:]
    if basis is not None and data.shape[0] != basis.K_max:
        raise DimensionError(f"{path} has {data.shape[0]} rows, model has K_max={basis.K_max}")
    return CoefficientBlock(data, basis or BasisMeta(data.shape[0]))


# -- test specs ---------------------------------------------------------------------

def test_spec_from_dict(doc: dict, basis: BasisMeta, p: int) -> TestSpec:
    _require(doc, ("K",), "test-spec document")
    K = basis.K_max
    rule = doc["K"]
    if isinstance(rule, dict):
        _require(rule, ("base",), "contrast generator")
        base = np.atleast_2d(np.asarray(rule["base"], dtype=float))
        decay = float(rule.get("decay", 0.0))
        scale = np.arange(1, K + 1, dtype=float) ** (-decay)
        mats = scale[:, None, None] * base[None]
    else:
        mats = np.asarray(rule, dtype=float)
        if mats.ndim != 3:
            raise DimensionError("K must be a list of per-l m x p matrices")
        if mats.shape[0] < K:
            raise DimensionError(f"K lists {mats.shape[0]} matrices, K_max={K} requested")
        mats = mats[:K]
    if mats.shape[2] != p:
        raise DimensionError(f"contrast matrices have {mats.shape[2]} columns, model has p={p}")
    m = mats.shape[1]
    if doc.get("C") is None:
        C = np.zeros((K, m))
    else:
        C = np.asarray(doc["C"], dtype=float)
        if C.ndim == 1:
            C = C.reshape(-1, m)
        if C.shape[0] < K or C.shape[1] != m:
            raise DimensionError(f"C must have at least {K} rows of {m} numbers, got {C.shape}")
        C = C[:K]
    return TestSpec(SpectralMatrixOperator(mats, basis), CoefficientBlock(C, basis),
                    float(doc.get("alpha", 0.05)))


def test_spec_to_dict(spec: TestSpec) -> dict:
    return {"K": spec.K.mats.tolist(), "C": spec.C.data.tolist(), "alpha": spec.alpha}


# keep pytest from collecting the two helpers above by name
test_spec_from_dict.__test__ = False
test_spec_to_dict.__test__ = False
