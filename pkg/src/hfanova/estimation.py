"""Per-frequency generalized least squares in the RKHS norm."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RankError, SingularityError, ValidationError
from .model import ModelSpec
from .spectral import (
    RCOND_MIN,
    CoefficientBlock,
    SeriesReport,
    SpectralMatrixOperator,
    series_report,
)

DEFAULT_TAIL_TOL = 1e-6


class EstimabilityWarning(UserWarning):
    """The summability condition on the estimator covariance looks violated."""


def _lam_mats(lam) -> np.ndarray:
    return lam.mats if isinstance(lam, SpectralMatrixOperator) else np.asarray(lam, dtype=float)


def _cholesky_stack(mats: np.ndarray, exc, what: str, fail: str = "is not positive definite") -> np.ndarray:
    """Batched Cholesky; on failure raise ``exc`` naming the first bad k."""
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        for k, m in enumerate(mats):
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                err = exc(f"{what} at k={k + 1} {fail}")
                if hasattr(err, "k"):
                    err.k = k + 1
                raise err from None
        raise


def chol_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) Z = B`` for stacked lower factors ``L``."""
    Z = np.linalg.solve(L, B)
    return np.linalg.solve(np.swapaxes(L, -1, -2), Z)


def whitened_design(X: np.ndarray, lam) -> tuple:
    """Return ``(G, H)`` stacked over k.

    ``G_k = X^T Lambda_k^{-1} X`` and ``H_k = Lambda_k^{-1} X``, both from a
    Cholesky factorization of each ``Lambda_k`` (no explicit inverse).
    """
    mats = _lam_mats(lam)
    K, n, _ = mats.shape
    if X.shape[0] != n:
        raise DimensionError(f"X has {X.shape[0]} rows but Lambda_k is {n}x{n}")
    L = _cholesky_stack(mats, SingularityError, "Lambda_k")
    H = chol_solve(L, np.broadcast_to(X, (K,) + X.shape))
    G = np.einsum("ni,knj->kij", X, H)
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    return G, H


def _factor_gram(G: np.ndarray) -> np.ndarray:
    """Stacked lower Cholesky factors of ``G_k``; :class:`RankError` names the first bad k."""
    w = np.linalg.eigvalsh(G)
    rcond = w[:, 0] / np.maximum(w[:, -1], np.finfo(float).tiny)
    bad = np.flatnonzero(rcond < RCOND_MIN)
    if bad.size:
        k = int(bad[0]) + 1
        raise RankError(f"X^T Lambda_k^-1 X is singular at k={k} (rcond={rcond[bad[0]]:.3g})", k=k)
    return _cholesky_stack(G, RankError, "X^T Lambda_k^-1 X")


def gls_operator(X: np.ndarray, lam) -> np.ndarray:
    """Stacked ``(X^T Lambda_k^-1 X)^-1 X^T Lambda_k^-1``, shape ``(K, p, n)``."""
    X = np.asarray(X, dtype=float)
    G, H = whitened_design(X, lam)
    return chol_solve(_factor_gram(G), np.swapaxes(H, 1, 2))


def gls_coefficients(X: np.ndarray, lam, Y: np.ndarray) -> np.ndarray:
    """GLS coefficients for raw arrays.

    ``Y`` has shape ``(..., K, n)``; leading axes are independent datasets.
    Returns ``(..., K, p)``.
    """
    B = gls_operator(X, lam)
    return np.einsum("kpn,...kn->...kp", B, np.asarray(Y, dtype=float))


def estimator_covariance(X, lam) -> SpectralMatrixOperator:
    """``Q_k = (X^T Lambda_k^-1 X)^-1``, the covariance of the k-th estimator
    coefficients for unit error scale (multiply by ``sigma**2`` otherwise)."""
    X = np.asarray(X, dtype=float)
    G, _ = whitened_design(X, lam)
    p = X.shape[1]
    Q = chol_solve(_factor_gram(G), np.broadcast_to(np.eye(p), G.shape))
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    basis = lam.basis if isinstance(lam, SpectralMatrixOperator) else None
    return SpectralMatrixOperator(Q, basis, symmetric=True, positive_definite=True)


def check_estimability(X, lam, K_max=None, tail_tol: float = DEFAULT_TAIL_TOL) -> SeriesReport:
    """Partial sums of ``trace((X^T Lambda_k^-1 X)^-1)`` and a convergence verdict.

    The verdict compares the last increment with the running total; it is a
    heuristic, as no finite prefix decides convergence of a series.
    """
    Q = estimator_covariance(X, lam)
    terms = np.trace(Q.mats, axis1=1, axis2=2)
    if K_max is not None:
        terms = terms[:K_max]
    return series_report(terms, tail_tol)


@dataclass(frozen=True)
class GlsFit:
    beta_hat: CoefficientBlock
    per_k_cov: SpectralMatrixOperator
    estimability: SeriesReport

    @property
    def converged(self) -> bool:
        return self.estimability.converged


def gls_fit(model: ModelSpec, Y: CoefficientBlock, tail_tol: float = DEFAULT_TAIL_TOL) -> GlsFit:
    """Fit ``beta_hat_k = (X^T L_k^-1 X)^-1 X^T L_k^-1 Y_k`` for every k.

    Per-k estimates are returned even when the summability check fails; an
    :class:`EstimabilityWarning` is emitted in that case.
    """
    if Y.basis != model.basis:
        raise DimensionError("response basis does not match the model basis")
    if Y.d != model.n:
        raise DimensionError(f"response has d={Y.d}, model has n={model.n}")
    beta = gls_coefficients(model.X, model.lam, Y.data)
    cov = estimator_covariance(model.X, model.lam)
    rep = series_report(np.trace(cov.mats, axis1=1, axis2=2), tail_tol)
    if not rep.converged:
        warnings.warn(
            f"estimator covariance trace series not judged convergent at K_max={model.K_max} "
            f"(tail ratio {rep.tail_ratio:.3g})", EstimabilityWarning, stacklevel=2)
    return GlsFit(CoefficientBlock(beta, model.basis), cov, rep)


def rkhs_objective(model: ModelSpec, Y: CoefficientBlock, b: CoefficientBlock) -> float:
    """``||Y - X b||^2`` in the norm induced by the inverse error covariance."""
    resid = Y.data - b.data @ model.X.T
    L = _cholesky_stack(model.lam.mats, SingularityError, "Lambda_k")
    sol = chol_solve(L, resid[..., None])[..., 0]
    terms = np.einsum("kn,kn->k", resid, sol)
    total = 0.0
    for t in terms:
        total += t
    return total


def expected_quadform(A, mu, V) -> float:
    """``E[y^T A y] = trace(A V) + mu^T A mu`` for ``y ~ N(mu, V)``."""
    A = np.asarray(A, dtype=float)
    mu = np.asarray(mu, dtype=float)
    V = np.asarray(V, dtype=float)
    r = A.shape[0]
    if A.shape != (r, r) or V.shape != (r, r) or mu.shape != (r,):
        raise DimensionError("expected_quadform: A, V must be r x r and mu of length r")
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(A).max())):
        raise ValidationError("expected_quadform: A must be symmetric")
    return float(np.trace(A @ V) + mu @ A @ mu)
