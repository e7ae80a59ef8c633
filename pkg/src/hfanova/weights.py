"""Weight operators sharing the eigenvectors of the error covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DomainError, ValidationError
from .estimation import _cholesky_stack, chol_solve
from .spectral import SeriesReport, SpectralMatrixOperator, series_report, sym_eig

MODES = ("sst", "ssr", "uniform")
DEFAULT_TAIL_TOL = 1e-6


def eig_lambda(lambda_k) -> tuple:
    """Eigenvectors ``Psi_k`` (columns) and descending eigenvalues of ``Lambda_k``.

    Sign convention: largest-magnitude entry of each eigenvector is positive.
    """
    lambda_k = np.asarray(lambda_k, dtype=float)
    if lambda_k.ndim != 2 or lambda_k.shape[0] != lambda_k.shape[1]:
        raise DomainError("eig_lambda expects a square matrix")
    if not np.allclose(lambda_k, lambda_k.T, rtol=1e-12, atol=0):
        raise DomainError("eig_lambda expects a symmetric matrix")
    w, v = sym_eig(lambda_k)
    if w[-1] <= 0:
        raise DomainError("eig_lambda expects a positive definite matrix")
    return v, w


@dataclass(frozen=True)
class WeightPlan:
    """Decay rule for the eigenvalues of ``W_k``.

    ``mode="sst"``:     ``omega_p(W_k) = k**-((rho_tilde[p] + varrho[p]) / 2)``
    ``mode="ssr"``:     ``omega_p(W_k) = k**-(rho_tilde[p] + varrho[p])``
    ``mode="uniform"``: ``omega_p(W_k) = M * k**-((rho + varrho) / 2)``

    ``rho_tilde`` may be left as ``None`` to estimate it from the covariance
    family (see :func:`estimate_decay`). In uniform mode it is a scalar
    bounding the decay of the smallest eigenvalue of ``Lambda_k``.
    """

    mode: str = "ssr"
    rho_tilde: Optional[Union[float, Sequence[float]]] = None
    varrho: Union[float, Sequence[float]] = 1.5
    M: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"weight mode must be one of {MODES}, got {self.mode!r}")
        if np.any(np.asarray(self.varrho, dtype=float) <= 1):
            raise ValidationError("every varrho exponent must exceed 1")
        if self.mode == "uniform":
            if np.ndim(self.varrho) != 0:
                raise ValidationError("uniform mode takes a scalar varrho")
            if self.rho_tilde is not None and (np.ndim(self.rho_tilde) != 0 or self.rho_tilde <= 1):
                raise ValidationError("uniform mode needs a scalar rho > 1")
            if not self.M > 0:
                raise ValidationError("uniform mode needs M > 0")

    def to_dict(self) -> dict:
        def conv(v):
            return np.asarray(v).tolist() if v is not None else None
        return {"mode": self.mode, "rho_tilde": conv(self.rho_tilde), "varrho": conv(self.varrho), "M": self.M}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightPlan":
        return cls(mode=d.get("mode", "ssr"), rho_tilde=d.get("rho_tilde"),
                   varrho=d.get("varrho", 1.5), M=d.get("M", 1.0))


def estimate_decay(values: np.ndarray, grid: float = 0.01) -> float:
    """Power-law decay exponent of a positive sequence indexed by k = 1, 2, ...

    Least-squares slope of ``log values`` on ``log k`` over the last half of
    the indices, rounded up to ``grid`` so that ``values >= C k**-rho``
    holds with the returned rate.
    """
    values = np.asarray(values, dtype=float)
    K = values.size
    if K < 2:
        return 0.0
    start = K // 2 if K >= 4 else 0
    k = np.arange(start + 1, K + 1, dtype=float)
    slope = np.polyfit(np.log(k), np.log(values[start:]), 1)[0]
    rate = -slope
    snapped = round(rate / grid)
    if abs(rate / grid - snapped) < 1e-6:
        return snapped * grid
    return math.ceil(rate / grid) * grid


@dataclass(frozen=True)
class WeightConditionReport:
    S_a: SeriesReport
    S_b: SeriesReport

    @property
    def converged(self) -> bool:
        return self.S_a.converged and self.S_b.converged

    def to_dict(self) -> dict:
        return {"S_a": self.S_a.to_dict(), "S_b": self.S_b.to_dict(), "converged": self.converged}


@dataclass(frozen=True)
class WeightOperator:
    W: SpectralMatrixOperator
    plan: Optional[WeightPlan]
    psi: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    conditions: Optional[WeightConditionReport] = None

    @property
    def mats(self) -> np.ndarray:
        return self.W.mats


def build_weights(lam: SpectralMatrixOperator, plan: WeightPlan,
                  tail_tol: float = DEFAULT_TAIL_TOL) -> WeightOperator:
    """Assemble ``W_k = Psi_k diag(omega(W_k)) Psi_k^T`` from the plan.

    The resolved plan (with any estimated ``rho_tilde``) is stored on the
    result together with the finiteness-condition report.
    """
    K, n, _ = lam.mats.shape
    lam_w, psi = sym_eig(lam.mats)
    if np.any(lam_w <= 0):
        raise DomainError("covariance sequence is not positive definite")
    k = np.arange(1, K + 1, dtype=float)[:, None]
    if plan.mode == "uniform":
        rho = plan.rho_tilde
        if rho is None:
            rho = max(estimate_decay(lam_w[:, -1]), 1.0 + 1e-2)
        plan = replace(plan, rho_tilde=float(rho))
        omega = plan.M * k ** (-(plan.rho_tilde + plan.varrho) / 2.0) * np.ones((1, n))
    else:
        rho_t = plan.rho_tilde
        if rho_t is None:
            rho_t = [estimate_decay(lam_w[:, j]) for j in range(n)]
        rho_t = np.broadcast_to(np.asarray(rho_t, dtype=float), (n,))
        varrho = np.broadcast_to(np.asarray(plan.varrho, dtype=float), (n,))
        plan = replace(plan, rho_tilde=rho_t.tolist())
        expo = rho_t + varrho
        if plan.mode == "sst":
            expo = expo / 2.0
        omega = k ** (-expo[None, :])
    W = np.einsum("kij,kj,klj->kil", psi, omega, psi)
    W = 0.5 * (W + np.swapaxes(W, 1, 2))
    Wop = SpectralMatrixOperator(W, lam.basis, symmetric=True)
    op = WeightOperator(Wop, plan, psi, omega)
    return replace(op, conditions=check_weight_conditions(op, lam, tail_tol))


def check_weight_conditions(W, lam: SpectralMatrixOperator,
                            tail_tol: float = DEFAULT_TAIL_TOL) -> WeightConditionReport:
    """Series ``sum_k trace(W_k^T L_k^-1 W_k)`` and ``sum_k trace(L_k^-1 W_k)``."""
    Wm = W.mats if hasattr(W, "mats") else np.asarray(W, dtype=float)
    L = _cholesky_stack(lam.mats, DomainError, "Lambda_k")
    LinvW = chol_solve(L, Wm)
    a_terms = np.einsum("kij,kij->k", Wm, LinvW)
    b_terms = np.trace(LinvW, axis1=1, axis2=2)
    return WeightConditionReport(series_report(a_terms, tail_tol), series_report(b_terms, tail_tol))


def identity_weights(lam: SpectralMatrixOperator) -> WeightOperator:
    """``W_k = I`` for every k (the untransformed model)."""
    K, n, _ = lam.mats.shape
    W = SpectralMatrixOperator(np.broadcast_to(np.eye(n), (K, n, n)), lam.basis, symmetric=True)
    lam_w, psi = sym_eig(lam.mats)
    op = WeightOperator(W, None, psi, np.ones((K, n)))
    return replace(op, conditions=check_weight_conditions(op, lam))
