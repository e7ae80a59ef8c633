"""Seeded Monte Carlo generation in coefficient space and oracle helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SingularityError, ValidationError
from .model import ModelSpec
from .spectral import CoefficientBlock


@dataclass(frozen=True)
class SimConfig:
    seed: int
    N: int = 1
    K_max: int = None
    outputs: tuple = ("dataset",)

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("N must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


def stream(seed: int, k: int) -> np.random.Generator:
    """Counter-based generator for frequency ``k`` (0-based) of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(k),))
    return np.random.Generator(np.random.Philox(ss))


def _cholesky_stack(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularityError("covariance factorization failed: some Lambda_k is not positive definite") from None


def sample_datasets(model: ModelSpec, seed: int, N: int) -> np.ndarray:
    """``N`` independent datasets, shape ``(N, K_max, n)``.

    Frequency k draws its ``N x n`` standard normals from its own stream,
    so the result does not depend on how k is scheduled.
    """
    K, n = model.K_max, model.n
    L = _cholesky_stack(model.lam.mats)
    z = np.empty((N, K, n))
    for k in range(K):
        z[:, k, :] = stream(seed, k).standard_normal((N, n))
    noise = np.einsum("kij,Nkj->Nki", L, z)
    return model.mean()[None] + model.sigma * noise


def sample_dataset(model: ModelSpec, seed: int) -> CoefficientBlock:
    """One dataset ``Y_k = X beta_k + sigma L_k z_k``; equals replicate 0 of
    :func:`sample_datasets` with the same seed."""
    return CoefficientBlock(sample_datasets(model, seed, 1)[0], model.basis)


class EmpiricalCDF:
    """Right-continuous step function of a sample."""

    def __init__(self, values: Sequence[float]):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise ValidationError("empirical CDF of an empty sample")
        self.values = v

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.values.size

    def left(self, x):
        """Left limit ``P(X < x)``."""
        return np.searchsorted(self.values, x, side="left") / self.values.size


def empirical_cdf(values) -> EmpiricalCDF:
    return EmpiricalCDF(values)


def mc_moments(values) -> dict:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValidationError("moments of an empty sample")
    N = v.size
    mean = float(v.mean())
    var = float(v.var(ddof=1)) if N > 1 else 0.0
    m4 = float(np.mean((v - mean) ** 4))
    return {
        "N": N,
        "mean": mean,
        "var": var,
        "se_mean": float(np.sqrt(var / N)),
        "se_var": float(np.sqrt(max(m4 - var ** 2, 0.0) / N)),
    }


def sup_distance_bound(values, cdf_fn: Callable, grid_size: int = 1000) -> float:
    """Rigorous upper bound on ``sup_x |F_N(x) - F(x)|`` for a monotone ``F``.

    ``F`` is evaluated on sample quantiles spanning the whole sample; between
    grid points ``g_i < g_j`` both functions are monotone, so the gap is at
    most ``max(F_N(g_j-) - F(g_i), F(g_j) - F_N(g_i))``.
    """
    ecdf = EmpiricalCDF(values)
    probs = np.linspace(0.0, 1.0, grid_size)
    grid = np.unique(np.quantile(ecdf.values, probs))
    F = np.maximum.accumulate(np.asarray(cdf_fn(grid), dtype=float))
    Fn = ecdf(grid)
    Fn_left = ecdf.left(grid)
    inner = np.maximum(Fn_left[1:] - F[:-1], F[1:] - Fn[:-1])
    below = max(Fn_left[0], F[0])
    above = max(1.0 - Fn[-1], 1.0 - F[-1])
    at_points = np.maximum(np.abs(Fn - F), np.abs(Fn_left - F))
    return float(max(inner.max(initial=0.0), below, above, at_points.max()))
