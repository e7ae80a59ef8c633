"""Transformed variance components and their expectations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError
from .estimation import _factor_gram, chol_solve, whitened_design
from .model import ModelSpec
from .spectral import CoefficientBlock, SeriesReport, series_report
from .weights import WeightOperator

COMPONENTS = ("sst", "ssr", "sse")
CLAMP_RTOL = 1e-12


def residual_projector(X, lambda_k) -> np.ndarray:
    """``M_k = I - X (X^T L^-1 X)^-1 X^T L^-1`` for a single covariance matrix."""
    return residual_projectors(X, np.asarray(lambda_k, dtype=float)[None])[0]


def residual_projectors(X, lam) -> np.ndarray:
    """Stacked residual projectors, shape ``(K, n, n)``."""
    X = np.asarray(X, dtype=float)
    mats = lam.mats if hasattr(lam, "mats") else np.asarray(lam, dtype=float)
    G, H = whitened_design(X, mats)
    # hat_k = X G_k^-1 H_k^T
    hat = X @ chol_solve(_factor_gram(G), np.swapaxes(H, 1, 2))
    return np.eye(X.shape[0])[None] - hat


def _inverse_stack(mats: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mats)
    inv = np.einsum("kij,kj,klj->kil", v, 1.0 / w, v)
    return 0.5 * (inv + np.swapaxes(inv, 1, 2))


def component_kernels(model: ModelSpec, W: WeightOperator, which: str) -> np.ndarray:
    """Per-k symmetric kernels ``A^k`` with ``component_k = Y_k^T A^k Y_k``.

    * ``sst``: ``W^T L^-1 W``
    * ``ssr``: ``W^T L^-1 X (X^T L^-1 X)^-1 X^T L^-1 W``
    * ``sse``: their difference.
    """
    if which not in COMPONENTS:
        raise ValueError(f"component must be one of {COMPONENTS}")
    Wm = _weight_mats(model, W)
    lam_inv = _inverse_stack(model.lam.mats)
    if which == "sst":
        A = np.swapaxes(Wm, 1, 2) @ lam_inv @ Wm
    else:
        G, H = whitened_design(model.X, model.lam)
        # H_k G_k^-1 H_k^T = L^-1 X (X^T L^-1 X)^-1 X^T L^-1
        P = H @ chol_solve(_factor_gram(G), np.swapaxes(H, 1, 2))
        A_ssr = np.swapaxes(Wm, 1, 2) @ P @ Wm
        if which == "ssr":
            A = A_ssr
        else:
            A = np.swapaxes(Wm, 1, 2) @ lam_inv @ Wm - A_ssr
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def _weight_mats(model: ModelSpec, W) -> np.ndarray:
    Wm = W.mats if hasattr(W, "mats") else np.asarray(W, dtype=float)
    if Wm.shape != model.lam.mats.shape:
        raise DimensionError(f"weight stack {Wm.shape} does not match covariance stack {model.lam.mats.shape}")
    if isinstance(W, WeightOperator) and W.W.basis != model.basis:
        raise DimensionError("weight operator basis does not match the model basis")
    return Wm


def component_terms(model: ModelSpec, W, Y: np.ndarray) -> np.ndarray:
    """Raw per-k ``(sst_k, sse_k)`` for response arrays of shape ``(..., K, n)``.

    Returns ``(..., K, 2)``. No clamping is applied.
    """
    Wm = _weight_mats(model, W)
    Y = np.asarray(Y, dtype=float)
    lam_inv = _inverse_stack(model.lam.mats)
    M = residual_projectors(model.X, model.lam)
    WY = np.einsum("kij,...kj->...ki", Wm, Y)
    MWY = np.einsum("kij,...kj->...ki", M, WY)
    sst = np.einsum("...ki,kij,...kj->...k", WY, lam_inv, WY)
    sse = np.einsum("...ki,kij,...kj->...k", MWY, lam_inv, MWY)
    return np.stack([sst, sse], axis=-1)


@dataclass(frozen=True)
class VarianceComponents:
    """Totals and per-k contributions of the transformed sums of squares."""

    sst: float
    sse: float
    ssr: float
    sst_k: np.ndarray = field(repr=False)
    sse_k: np.ndarray = field(repr=False)
    ssr_k: np.ndarray = field(repr=False)
    clamped: int = 0
    tails: dict = field(default_factory=dict, repr=False)
    raw_sst_truncated: float = float("nan")

    def per_k(self) -> np.ndarray:
        return np.column_stack([self.sst_k, self.sse_k, self.ssr_k])


def _clamp(values: np.ndarray, scale: np.ndarray):
    tiny = (values < 0) & (values >= -CLAMP_RTOL * np.maximum(scale, np.finfo(float).tiny))
    out = np.where(tiny, 0.0, values)
    return out, int(tiny.sum())


def _ksum(v) -> float:
    total = 0.0
    for x in v:
        total += x
    return float(total)


def sum_squares(model: ModelSpec, W, Y: CoefficientBlock, verify: bool = False) -> VarianceComponents:
    """Transformed SST, SSE and SSR (= SST - SSE) of one dataset.

    ``verify=True`` recomputes SSR through its explicit kernel and raises
    :class:`NumericError` if the two routes differ by more than 1e-10
    relative.
    """
    if Y.basis != model.basis:
        raise DimensionError("response basis does not match the model basis")
    if Y.d != model.n:
        raise DimensionError(f"response has d={Y.d}, model has n={model.n}")
    if isinstance(W, WeightOperator) and W.conditions is not None and not W.conditions.converged:
        warnings.warn("weight operator does not pass the finiteness checks", RuntimeWarning, stacklevel=2)
    terms = component_terms(model, W, Y.data)
    sst_k, sse_k = terms[:, 0], terms[:, 1]
    ssr_k = sst_k - sse_k
    sst_k, c1 = _clamp(sst_k, np.abs(sst_k))
    sse_k, c2 = _clamp(sse_k, np.abs(sst_k))
    ssr_k, c3 = _clamp(ssr_k, np.abs(sst_k))
    if verify:
        A = component_kernels(model, W, "ssr")
        alt = np.einsum("ki,kij,kj->k", Y.data, A, Y.data)
        tol = 1e-10 * max(_ksum(np.abs(sst_k)), np.finfo(float).tiny)
        if abs(_ksum(alt) - _ksum(ssr_k)) > tol:
            raise NumericError("SSR difference route and explicit-kernel route disagree")
    lam_inv = _inverse_stack(model.lam.mats)
    raw = _ksum(np.einsum("ki,kij,kj->k", Y.data, lam_inv, Y.data))
    tails = {name: series_report(v).to_dict() for name, v in
             (("sst", sst_k), ("sse", sse_k), ("ssr", ssr_k))}
    return VarianceComponents(_ksum(sst_k), _ksum(sse_k), _ksum(ssr_k), sst_k, sse_k, ssr_k,
                              c1 + c2 + c3, tails, raw)


@dataclass(frozen=True)
class ExpectedComponents:
    E_sst: float
    E_sse: float
    E_ssr: float
    E_sst_k: np.ndarray = field(repr=False)
    E_sse_k: np.ndarray = field(repr=False)
    E_ssr_k: np.ndarray = field(repr=False)
    tails: dict = field(default_factory=dict, repr=False)

    def report(self, which: str, tail_tol: float = 1e-6) -> SeriesReport:
        return series_report(getattr(self, f"E_{which}_k"), tail_tol)

    def per_k(self) -> np.ndarray:
        return np.column_stack([self.E_sst_k, self.E_sse_k, self.E_ssr_k])


def expected_components(model: ModelSpec, W) -> ExpectedComponents:
    """Exact means: per k, ``trace(A^k Sigma_k) + mu_k^T A^k mu_k``.

    ``Sigma_k = sigma**2 Lambda_k`` and ``mu_k = X beta_k``.
    """
    Sigma = model.error_covariance()
    mu = model.mean()
    out = {}
    for which in ("sst", "sse"):
        A = component_kernels(model, W, which)
        out[which] = (np.einsum("kij,kji->k", A, Sigma)
                      + np.einsum("ki,kij,kj->k", mu, A, mu))
    e_sst, e_sse = out["sst"], out["sse"]
    e_ssr = e_sst - e_sse
    scale = np.abs(e_sst)
    e_sst, e_sse, e_ssr = (_clamp(v, scale)[0] for v in (e_sst, e_sse, e_ssr))
    tails = {name: series_report(v).to_dict() for name, v in
             (("sst", e_sst), ("sse", e_sse), ("ssr", e_ssr))}
    return ExpectedComponents(_ksum(e_sst), _ksum(e_sse), _ksum(e_ssr), e_sst, e_sse, e_ssr, tails)
