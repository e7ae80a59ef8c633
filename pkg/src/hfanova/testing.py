"""Linear hypothesis tests ``H0: K beta = C`` on the functional parameter."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .distributions import QuadFormSpec, cdf, quantile
from .errors import DimensionError, RankError, ValidationError
from .estimation import _cholesky_stack, chol_solve, estimator_covariance, gls_fit
from .model import ModelSpec
from .spectral import CoefficientBlock, SpectralMatrixOperator, sym_eig


class ContrastConditionWarning(UserWarning):
    """The operator-norm condition on the contrast operator is violated."""


@dataclass(frozen=True)
class TestSpec:
    """Contrast operator ``K`` (``m x p`` per frequency), target ``C`` and level."""

    __test__ = False  # keep pytest from collecting this class

    K: SpectralMatrixOperator
    C: CoefficientBlock
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        m, _ = self.K.shape
        if self.C.d != m:
            raise DimensionError(f"C has d={self.C.d} but K maps into dimension {m}")
        if self.C.basis != self.K.basis:
            raise DimensionError("C and K are on different bases")

    @property
    def m(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class NullDistribution:
    """Null law of the global statistic with its cached critical value."""

    spec: QuadFormSpec
    alpha: float
    critical_value: float
    contrast_norm: float
    condition_ok: bool


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    per_l: np.ndarray = field(repr=False)
    contrast_norm: float = float("nan")
    condition_ok: bool = True
    alpha: float = 0.05
    dropped_mass: float = 0.0

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "per_l_chisq": self.per_l.tolist(),
            "contrast_condition": {"operator_norm": self.contrast_norm, "pass": self.condition_ok},
            "null_dropped_mass": self.dropped_mass,
        }


def _check(K: SpectralMatrixOperator, beta_hat: CoefficientBlock, C: CoefficientBlock):
    m, p = K.shape
    if beta_hat.d != p or C.d != m:
        raise DimensionError(f"K is {m}x{p}; beta_hat has d={beta_hat.d}, C has d={C.d}")
    if not (K.basis == beta_hat.basis == C.basis):
        raise DimensionError("K, beta_hat and C must share one basis")


def contrast_residual(K: SpectralMatrixOperator, beta_hat: CoefficientBlock, C: CoefficientBlock) -> np.ndarray:
    _check(K, beta_hat, C)
    return np.einsum("kmp,kp->km", K.mats, beta_hat.data) - C.data


def global_stat(K: SpectralMatrixOperator, beta_hat: CoefficientBlock, C: CoefficientBlock) -> float:
    """``S = sum_l ||K_l beta_hat_l - C_l||**2``."""
    r = contrast_residual(K, beta_hat, C)
    total = 0.0
    for v in np.einsum("km,km->k", r, r):
        total += v
    return float(total)


def _congruence(K: SpectralMatrixOperator, X, lam, sigma: float) -> tuple:
    """``Q_l^{1/2} K_l^T K_l Q_l^{1/2}`` stacked, plus ``Q`` itself."""
    Q = estimator_covariance(X, lam).mats
    w, v = np.linalg.eigh(Q)
    root = np.einsum("kij,kj,klj->kil", v, np.sqrt(w), v)
    KtK = np.swapaxes(K.mats, 1, 2) @ K.mats
    T = root @ KtK @ root
    T = 0.5 * (T + np.swapaxes(T, 1, 2))
    return T, Q


def contrast_norm(K: SpectralMatrixOperator, X, lam) -> float:
    """``sup_l || (X^T L_l^-1 X)^-1/2 K_l^T K_l (X^T L_l^-1 X)^-1/2 ||_2``."""
    T, _ = _congruence(K, X, lam, 1.0)
    return float(np.linalg.eigvalsh(T)[:, -1].max())


def null_distribution(K: SpectralMatrixOperator, X, lam, sigma: float = 1.0) -> QuadFormSpec:
    """Central canonical law of ``S`` under ``H0``.

    The weights are the eigenvalues of ``sigma**2 Q_l^{1/2} K_l^T K_l Q_l^{1/2}``
    with ``Q_l = (X^T L_l^-1 X)^-1``, over every ``l``.
    """
    T, _ = _congruence(K, X, lam, sigma)
    xi, _ = sym_eig(T)
    xi = sigma ** 2 * xi
    norm = float(np.linalg.eigvalsh(T)[:, -1].max())
    if norm >= 1.0:
        warnings.warn(f"contrast operator norm {norm:.4g} is not below 1", ContrastConditionWarning, stacklevel=2)
    return QuadFormSpec(xi.ravel(), np.zeros(xi.size),
                        {"component": "test", "K_max": K.K_max, "contrast_norm": norm})


def perk_chisq(K_l, beta_hat_l, C_l, X, lambda_l, sigma: float = 1.0) -> float:
    """Wald-type statistic at one frequency; ``chi2_m`` under ``H0``."""
    K_l = np.atleast_2d(np.asarray(K_l, dtype=float))
    r = K_l @ np.asarray(beta_hat_l, dtype=float) - np.atleast_1d(np.asarray(C_l, dtype=float))
    Q = estimator_covariance(X, np.asarray(lambda_l, dtype=float)[None]).mats[0]
    V = sigma ** 2 * K_l @ Q @ K_l.T
    if np.linalg.matrix_rank(K_l) < K_l.shape[0]:
        raise RankError("contrast matrix K_l is not of full row rank")
    try:
        c = cho_factor(V, lower=True)
    except np.linalg.LinAlgError:
        raise RankError("K_l Q_l K_l^T is not invertible") from None
    return float(r @ cho_solve(c, r))


def perk_chisq_all(K: SpectralMatrixOperator, beta_hat: CoefficientBlock, C: CoefficientBlock,
                   X, lam, sigma: float = 1.0) -> np.ndarray:
    r = contrast_residual(K, beta_hat, C)
    Q = estimator_covariance(X, lam).mats
    V = sigma ** 2 * K.mats @ Q @ np.swapaxes(K.mats, 1, 2)
    Lv = _cholesky_stack(V, RankError, "K_l Q_l K_l^T", "is not invertible")
    return np.einsum("km,km->k", r, chol_solve(Lv, r[..., None])[..., 0])


def prepare_null(model: ModelSpec, spec: TestSpec) -> NullDistribution:
    null = null_distribution(spec.K, model.X, model.lam, model.sigma)
    crit = quantile(null, 1.0 - spec.alpha)
    norm = null.provenance["contrast_norm"]
    return NullDistribution(null, spec.alpha, crit, norm, norm < 1.0)


def run_test(model: ModelSpec, Y: CoefficientBlock, spec: TestSpec,
             null: Optional[NullDistribution] = None, p_value: bool = True) -> TestResult:
    """Fit, compute ``S``, compare with the ``1 - alpha`` null quantile.

    ``null`` may carry a precomputed :func:`prepare_null` result for repeated
    use on many datasets under one model; ``p_value=False`` skips the
    (comparatively expensive) tail probability.
    """
    if spec.K.shape[1] != model.p:
        raise DimensionError(f"K has {spec.K.shape[1]} columns, model has p={model.p}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContrastConditionWarning)
        if null is None or null.alpha != spec.alpha:
            null = prepare_null(model, spec)
    fit = gls_fit(model, Y)
    S = global_stat(spec.K, fit.beta_hat, spec.C)
    try:
        per_l = perk_chisq_all(spec.K, fit.beta_hat, spec.C, model.X, model.lam, model.sigma)
    except RankError:
        per_l = np.full(spec.K.K_max, np.nan)
    pv = 1.0 - cdf(null.spec, S) if p_value else float("nan")
    return TestResult(S, null.critical_value, float(pv), bool(S > null.critical_value), per_l,
                      null.contrast_norm, null.condition_ok, spec.alpha, null.spec.dropped_mass)
