"""Model specification, error covariance families and structural checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, RankError, ValidationError
from .spectral import (
    BasisMeta,
    CoefficientBlock,
    SpectralMatrixOperator,
    series_report,
)

SPECTRUM_KINDS = ("power-law", "pseudodiff", "explicit")


# -- continuous-function descriptors ---------------------------------------

def evaluate_descriptor(desc: Mapping, x: np.ndarray) -> np.ndarray:
    """Evaluate a function descriptor at ``x``.

    Supported kinds (closed set, evaluated exactly)::

        {"kind": "polynomial", "coeffs": [a0, a1, ...]}        a0 + a1 x + ...
        {"kind": "power", "exponent": s, "scale": c}           c * x**s
        {"kind": "affine-power", "a": a, "b": b, "exponent": s}  a + b * x**s
    """
    x = np.asarray(x, dtype=float)
    kind = desc.get("kind")
    if kind == "polynomial":
        coeffs = np.asarray(desc["coeffs"], dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ValidationError("polynomial descriptor needs a non-empty coeffs list")
        return np.polynomial.polynomial.polyval(x, coeffs)
    if kind == "power":
        return float(desc.get("scale", 1.0)) * np.power(x, float(desc["exponent"]))
    if kind == "affine-power":
        return float(desc["a"]) + float(desc["b"]) * np.power(x, float(desc["exponent"]))
    raise ValidationError(f"unknown function descriptor kind {kind!r}")


def operator_eigenvalues(law: Mapping, K_max: int) -> np.ndarray:
    """Eigenvalues ``lambda_k(L) = scale * k**exponent`` for k = 1..K_max."""
    k = np.arange(1, K_max + 1, dtype=float)
    return float(law.get("scale", 1.0)) * k ** float(law.get("exponent", 1.0))


def pseudodiff_spectrum(f_specs: Sequence, op_law, K_max: int) -> np.ndarray:
    """Per-component eigenvalues ``lambda_ki = |f_i(lambda_k(L))|**-2``.

    ``f_specs`` holds one descriptor dict (or plain callable) per component;
    ``op_law`` is a descriptor for :func:`operator_eigenvalues` or a callable
    ``k -> lambda_k(L)``. Returns a ``K_max x n`` array.
    """
    if callable(op_law):
        lk = np.array([op_law(k) for k in range(1, K_max + 1)], dtype=float)
    else:
        lk = operator_eigenvalues(op_law, K_max)
    cols = []
    for i, f in enumerate(f_specs):
        vals = np.asarray(f(lk) if callable(f) else evaluate_descriptor(f, lk), dtype=float)
        zero = np.flatnonzero(vals == 0)
        if zero.size:
            raise DomainError(f"f_{i + 1} vanishes on the spectrum at k={zero[0] + 1}")
        cols.append(np.abs(vals) ** -2.0)
    return np.column_stack(cols)


# -- spectrum families -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectrumFamily:
    """Per-component eigenvalue law plus a full-rank cross-correlation.

    ``params`` by kind:

    * ``power-law``: ``{"scale": [c_i], "exponent": [a_i]}`` with
      ``lambda_ki = c_i * k**-a_i``;
    * ``pseudodiff``: ``{"f": [descriptor, ...], "operator": {"scale", "exponent"}}``;
    * ``explicit``: ``{"eigenvalues": K x n array}``.
    """

    kind: str
    params: Mapping
    rho: np.ndarray = None

    def __post_init__(self):
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"spectrum kind must be one of {SPECTRUM_KINDS}, got {self.kind!r}")
        n = self._n_components()
        if self.rho is not None and n == 1 and self.kind == "power-law":
            n = np.shape(self.rho)[0]  # scalar law shared by every component
        rho = np.eye(n) if self.rho is None else np.array(self.rho, dtype=float)
        if rho.shape != (n, n):
            raise DimensionError(f"rho must be {n}x{n}, got {rho.shape}")
        validate_correlation(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def _n_components(self) -> int:
        p = self.params
        if self.kind == "power-law":
            scale = np.atleast_1d(np.asarray(p.get("scale", 1.0), dtype=float))
            expo = np.atleast_1d(np.asarray(p["exponent"], dtype=float))
            return max(scale.size, expo.size)
        if self.kind == "pseudodiff":
            return len(p["f"])
        return np.asarray(p["eigenvalues"], dtype=float).shape[1]

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def eigenvalues(self, K_max: int) -> np.ndarray:
        """``K_max x n`` array of ``lambda_ki``."""
        p = self.params
        if self.kind == "power-law":
            scale = np.broadcast_to(np.asarray(p.get("scale", 1.0), dtype=float), (self.n,))
            expo = np.broadcast_to(np.asarray(p["exponent"], dtype=float), (self.n,))
            k = np.arange(1, K_max + 1, dtype=float)[:, None]
            lam = scale * k ** (-expo)
        elif self.kind == "pseudodiff":
            lam = pseudodiff_spectrum(p["f"], p.get("operator", {}), K_max)
        else:
            lam = np.asarray(p["eigenvalues"], dtype=float)
            if lam.shape[0] < K_max:
                raise DimensionError(f"explicit spectrum has {lam.shape[0]} rows, K_max={K_max} requested")
            lam = lam[:K_max]
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("component eigenvalues must be finite and strictly positive")
        return lam

    def to_dict(self) -> dict:
        params = {}
        for key, val in self.params.items():
            params[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return {"kind": self.kind, "params": params, "rho": self.rho.tolist()}


def validate_correlation(rho: np.ndarray):
    if not np.allclose(rho, rho.T, rtol=0, atol=1e-12):
        raise ValidationError("rho must be symmetric")
    if not np.allclose(np.diag(rho), 1.0, rtol=0, atol=1e-12):
        raise ValidationError("rho must have unit diagonal")
    if np.linalg.eigvalsh(rho)[0] <= 0:
        raise ValidationError("rho must be strictly positive definite")


def build_lambda(family: SpectrumFamily, K_max: int, basis: Optional[BasisMeta] = None) -> SpectralMatrixOperator:
    """``Lambda_k[i, j] = sqrt(lambda_ki * lambda_kj) * rho[i, j]``."""
    lam = family.eigenvalues(K_max)
    root = np.sqrt(lam)
    mats = root[:, :, None] * family.rho[None] * root[:, None, :]
    return SpectralMatrixOperator(mats, basis or BasisMeta(K_max), symmetric=True, positive_definite=True)


# -- A0 diagnostics ------------------------------------------------------------

@dataclass(frozen=True)
class A0Diagnostics:
    min_eigenvalue: np.ndarray = field(repr=False)
    rank: np.ndarray = field(repr=False)
    trace_partial_sums: np.ndarray = field(repr=False)
    trace_tail_ratio: float
    symmetry_violations: tuple
    nonpositive: tuple
    rank_one: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return not (self.symmetry_violations or self.nonpositive or self.rank_one.any())

    def flags(self) -> list:
        out = []
        if self.symmetry_violations:
            out.append(f"non-symmetric at k={list(self.symmetry_violations)}")
        if self.nonpositive:
            out.append(f"not positive definite at k={list(self.nonpositive)}")
        if self.rank_one.any():
            out.append(f"numerically rank one at {int(self.rank_one.sum())} frequencies")
        return out


def validate_a0(lam) -> A0Diagnostics:
    """Structural diagnostics for a covariance sequence; never raises on content.

    Reports the per-k minimum eigenvalue and numerical rank, trace partial
    sums, symmetry violations and a flag wherever ``Lambda_k`` is numerically
    rank one (the degenerate perfectly-correlated case).
    """
    mats = np.asarray(lam.mats if isinstance(lam, SpectralMatrixOperator) else lam, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise DimensionError("validate_a0 expects a stack of square matrices")
    K, n, _ = mats.shape
    scale = np.maximum(np.abs(mats).max(axis=(1, 2)), np.finfo(float).tiny)
    asym = np.abs(mats - np.swapaxes(mats, 1, 2)).max(axis=(1, 2)) > 1e-12 * scale
    sym = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    w = np.linalg.eigvalsh(sym)
    wmax = np.maximum(np.abs(w).max(axis=1), np.finfo(float).tiny)
    rank = (np.abs(w) > n * np.finfo(float).eps * 16 * wmax[:, None]).sum(axis=1)
    rank_one = (rank == 1) if n > 1 else np.zeros(K, dtype=bool)
    rep = series_report(np.trace(mats, axis1=1, axis2=2))
    return A0Diagnostics(
        min_eigenvalue=w[:, 0],
        rank=rank,
        trace_partial_sums=rep.partial_sums,
        trace_tail_ratio=rep.tail_ratio,
        symmetry_violations=tuple(int(k) + 1 for k in np.flatnonzero(asym)),
        nonpositive=tuple(int(k) + 1 for k in np.flatnonzero(w[:, 0] <= 0)),
        rank_one=rank_one,
    )


# -- model --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Fixed-effect model ``Y = X beta + sigma * eps`` in coefficient space.

    ``lam`` is the error covariance sequence of ``eps``; the response
    coefficients at frequency k have covariance ``sigma**2 * lam[k]``.
    ``beta`` defaults to zero.
    """

    X: np.ndarray
    lam: SpectralMatrixOperator
    beta: Optional[CoefficientBlock] = None
    sigma: float = 1.0
    family: Optional[SpectrumFamily] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DimensionError("design matrix must be 2-D")
        n, p = X.shape
        if not n >= p >= 1:
            raise ValidationError(f"need n >= p >= 1, got n={n}, p={p}")
        if np.linalg.matrix_rank(X) < p:
            raise RankError("design matrix X is not of full column rank")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        lam = self.lam
        if lam.shape != (n, n):
            raise DimensionError(f"Lambda_k must be {n}x{n}, got {lam.shape}")
        if not (lam.symmetric and lam.positive_definite):
            lam = SpectralMatrixOperator(lam.mats, lam.basis, symmetric=True, positive_definite=True)
            object.__setattr__(self, "lam", lam)
        beta = self.beta
        if beta is None:
            beta = CoefficientBlock(np.zeros((lam.K_max, p)), lam.basis)
        elif not isinstance(beta, CoefficientBlock):
            beta = CoefficientBlock(np.asarray(beta, dtype=float), lam.basis)
        if beta.basis != lam.basis or beta.d != p:
            raise DimensionError(f"beta must be a K_max x {p} block on the model basis")
        object.__setattr__(self, "beta", beta)
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValidationError("sigma must be a finite non-negative scale")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def K_max(self) -> int:
        return self.lam.K_max

    @property
    def basis(self) -> BasisMeta:
        return self.lam.basis

    def mean(self) -> np.ndarray:
        """``K_max x n`` array of ``X beta_k``."""
        return self.beta.data @ self.X.T

    def error_covariance(self) -> np.ndarray:
        """``sigma**2 * Lambda_k`` stacked, the covariance of ``Y_k``."""
        return self.sigma ** 2 * self.lam.mats

    def with_beta(self, beta) -> "ModelSpec":
        return ModelSpec(self.X, self.lam, beta, self.sigma, self.family)


def model_from_family(X, family: SpectrumFamily, K_max: int, beta=None, sigma: float = 1.0) -> ModelSpec:
    lam = build_lambda(family, K_max)
    return ModelSpec(X, lam, beta, sigma, family)


def power_law_family(n: int, exponent=2.0, scale=1.0, rho=None) -> SpectrumFamily:
    """Shorthand for ``lambda_ki = scale_i * k**-exponent_i``."""
    expo = np.broadcast_to(np.asarray(exponent, dtype=float), (n,)).tolist()
    sc = np.broadcast_to(np.asarray(scale, dtype=float), (n,)).tolist()
    return SpectrumFamily("power-law", {"scale": sc, "exponent": expo}, rho)


def equicorrelation(n: int, r: float) -> np.ndarray:
    rho = np.full((n, n), float(r))
    np.fill_diagonal(rho, 1.0)
    return rho

