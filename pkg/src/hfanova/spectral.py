"""Coefficient-space containers and per-k matrix operator algebra.

Every object here lives in the truncated coefficient space of a fixed
orthonormal eigenbasis: a vector of ``d`` functions becomes a ``K_max x d``
array whose row ``k`` holds the projections onto the k-th basis element, and
an operator diagonal in that basis becomes a stack of ``K_max`` small
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, SingularityError, ValidationError

#: reciprocal condition number below which a per-k matrix counts as singular
RCOND_MIN = 1e-12
SYMMETRY_RTOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BasisMeta:
    """Truncation level and optional per-k labels of the common eigenbasis."""

    K_max: int
    labels: Optional[Tuple] = None

    def __post_init__(self):
        if int(self.K_max) != self.K_max or self.K_max < 1:
            raise ValidationError(f"K_max must be a positive integer, got {self.K_max!r}")
        object.__setattr__(self, "K_max", int(self.K_max))
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != self.K_max:
                raise ValidationError("labels must have one entry per k")
            object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class CoefficientBlock:
    """``K_max x d`` basis coefficients of a d-vector of functions."""

    data: np.ndarray
    basis: BasisMeta = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DimensionError(f"coefficient block must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("coefficient block contains non-finite entries")
        basis = self.basis if self.basis is not None else BasisMeta(data.shape[0])
        if basis.K_max != data.shape[0]:
            raise DimensionError(f"block has {data.shape[0]} rows but basis K_max={basis.K_max}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "basis", basis)

    @property
    def K_max(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, k: int) -> np.ndarray:
        """Coefficient vector for 1-based frequency index ``k``."""
        return self.data[k - 1]

    def __eq__(self, other):
        if not isinstance(other, CoefficientBlock):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SpectralMatrixOperator:
    """Sequence of ``r x c`` matrices acting row-wise on coefficient blocks.

    ``mats[k-1]`` is the matrix at frequency ``k``. The ``symmetric`` and
    ``positive_definite`` flags are checked on construction.
    """

    mats: np.ndarray
    basis: BasisMeta = None
    symmetric: bool = False
    positive_definite: bool = False

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3:
            raise DimensionError(f"operator stack must be 3-D (K, r, c), got shape {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise ValidationError("operator contains non-finite entries")
        basis = self.basis if self.basis is not None else BasisMeta(mats.shape[0])
        if basis.K_max != mats.shape[0]:
            raise DimensionError(f"operator has {mats.shape[0]} matrices but basis K_max={basis.K_max}")
        if self.symmetric or self.positive_definite:
            if mats.shape[1] != mats.shape[2]:
                raise ValidationError("symmetric operator requires square matrices")
            asym = np.abs(mats - np.swapaxes(mats, 1, 2)).max(axis=(1, 2))
            scale = np.maximum(np.abs(mats).max(axis=(1, 2)), np.finfo(float).tiny)
            bad = np.flatnonzero(asym > SYMMETRY_RTOL * scale)
            if bad.size:
                raise ValidationError(f"matrix at k={bad[0] + 1} is not symmetric")
            object.__setattr__(self, "symmetric", True)
        if self.positive_definite:
            w = np.linalg.eigvalsh(mats)
            bad = np.flatnonzero(w[:, 0] <= 0)
            if bad.size:
                raise ValidationError(f"matrix at k={bad[0] + 1} is not positive definite")
        object.__setattr__(self, "mats", _frozen(mats))
        object.__setattr__(self, "basis", basis)

    @property
    def K_max(self) -> int:
        return self.mats.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mats.shape[1], self.mats.shape[2]

    def __getitem__(self, k: int) -> np.ndarray:
        """Matrix at 1-based frequency ``k``."""
        if not 1 <= k <= self.K_max:
            raise IndexError(f"k={k} outside 1..{self.K_max}")
        return self.mats[k - 1]


def identity_operator(K_max: int, n: int, basis: Optional[BasisMeta] = None) -> SpectralMatrixOperator:
    mats = np.broadcast_to(np.eye(n), (K_max, n, n))
    return SpectralMatrixOperator(mats, basis or BasisMeta(K_max), symmetric=True, positive_definite=True)


def diagonal_operator(diag: np.ndarray, basis: Optional[BasisMeta] = None) -> SpectralMatrixOperator:
    """Operator whose k-th matrix is ``diag(diag[k-1])``; ``diag`` is ``K x n``."""
    diag = np.asarray(diag, dtype=float)
    mats = np.zeros(diag.shape + (diag.shape[1],))
    idx = np.arange(diag.shape[1])
    mats[:, idx, idx] = diag
    return SpectralMatrixOperator(mats, basis or BasisMeta(diag.shape[0]), symmetric=True,
                                  positive_definite=bool(np.all(diag > 0)))


def _check_basis(a: BasisMeta, b: BasisMeta):
    if a != b:
        raise DimensionError(f"basis mismatch: {a} vs {b}")


def project(values, d: Optional[int] = None, basis: Optional[BasisMeta] = None) -> CoefficientBlock:
    """Pack per-k coefficient rows into a :class:`CoefficientBlock`.

    Raises :class:`DimensionError` for ragged input or a row width other
    than ``d``.
    """
    try:
        data = np.array(values, dtype=float)
    except ValueError as exc:
        raise DimensionError(f"ragged coefficient rows: {exc}") from None
    if data.ndim == 1 and d is not None and data.size == d:
        data = data[None]
    if data.ndim != 2:
        raise DimensionError(f"expected K_max rows of equal width, got shape {data.shape}")
    if d is not None and data.shape[1] != d:
        raise DimensionError(f"rows have width {data.shape[1]}, expected {d}")
    return CoefficientBlock(data, basis)


def reconstruct(block: CoefficientBlock) -> np.ndarray:
    """Inverse of :func:`project`: a fresh writable copy of the rows."""
    return np.array(block.data, copy=True)


def op_apply(A: SpectralMatrixOperator, f: CoefficientBlock) -> CoefficientBlock:
    _check_basis(A.basis, f.basis)
    if A.shape[1] != f.d:
        raise DimensionError(f"operator has {A.shape[1]} columns but block has d={f.d}")
    out = np.einsum("kij,kj->ki", A.mats, f.data)
    return CoefficientBlock(out, f.basis)


def bilinear_form(A: SpectralMatrixOperator, f: CoefficientBlock, g: CoefficientBlock) -> float:
    """``sum_k g_k^T A_k f_k``, accumulated in k order."""
    _check_basis(A.basis, f.basis)
    _check_basis(A.basis, g.basis)
    r, c = A.shape
    if c != f.d or r != g.d:
        raise DimensionError(f"operator {r}x{c} incompatible with blocks d={f.d}, d={g.d}")
    terms = np.einsum("ki,kij,kj->k", g.data, A.mats, f.data)
    return float(math_fsum(terms))


def math_fsum(values) -> float:
    """Sequential k-ordered sum (deterministic, no pairwise reordering)."""
    total = 0.0
    for v in np.asarray(values, dtype=float).ravel():
        total += v
    return total


def sym_eig(mats: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a stack of symmetric matrices.

    Eigenvalues come out in descending order; each eigenvector is signed so
    that its largest-magnitude component is positive.
    """
    w, v = np.linalg.eigh(mats)
    w = w[..., ::-1]
    v = v[..., ::-1]
    idx = np.argmax(np.abs(v), axis=-2)
    pivot = np.take_along_axis(v, idx[..., None, :], axis=-2)
    v = v * np.where(pivot < 0, -1.0, 1.0)
    return w, v


def _check_rcond(w: np.ndarray, what: str):
    absw = np.abs(w)
    rcond = absw.min(axis=-1) / np.maximum(absw.max(axis=-1), np.finfo(float).tiny)
    bad = np.flatnonzero(rcond < RCOND_MIN)
    if bad.size:
        k = bad[0]
        raise SingularityError(f"{what}: matrix at k={k + 1} is singular (rcond={rcond[k]:.3g})")


def op_inverse(A: SpectralMatrixOperator) -> SpectralMatrixOperator:
    r, c = A.shape
    if r != c:
        raise DimensionError("only square operators can be inverted")
    if A.symmetric:
        w, v = np.linalg.eigh(A.mats)
        _check_rcond(w, "op_inverse")
        inv = np.einsum("kij,kj,klj->kil", v, 1.0 / w, v)
        inv = 0.5 * (inv + np.swapaxes(inv, 1, 2))
        return SpectralMatrixOperator(inv, A.basis, symmetric=True, positive_definite=A.positive_definite)
    s = np.linalg.svd(A.mats, compute_uv=False)
    _check_rcond(s, "op_inverse")
    return SpectralMatrixOperator(np.linalg.inv(A.mats), A.basis)


def op_sqrt(A: SpectralMatrixOperator) -> SpectralMatrixOperator:
    """Symmetric positive-definite square root of each ``A_k``."""
    r, c = A.shape
    if r != c or not A.symmetric:
        raise DomainError("op_sqrt requires symmetric matrices")
    w, v = np.linalg.eigh(A.mats)
    if np.any(w <= 0):
        k = int(np.flatnonzero((w <= 0).any(axis=1))[0])
        raise DomainError(f"op_sqrt: matrix at k={k + 1} is not positive definite")
    root = np.einsum("kij,kj,klj->kil", v, np.sqrt(w), v)
    root = 0.5 * (root + np.swapaxes(root, 1, 2))
    return SpectralMatrixOperator(root, A.basis, symmetric=True, positive_definite=True)


def op_compose(A: SpectralMatrixOperator, B: SpectralMatrixOperator) -> SpectralMatrixOperator:
    """Per-k product ``A_k B_k``."""
    _check_basis(A.basis, B.basis)
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"cannot compose {A.shape} with {B.shape}")
    return SpectralMatrixOperator(A.mats @ B.mats, A.basis)


def op_transpose(A: SpectralMatrixOperator) -> SpectralMatrixOperator:
    return SpectralMatrixOperator(np.swapaxes(A.mats, 1, 2), A.basis, symmetric=A.symmetric,
                                  positive_definite=A.positive_definite)


@dataclass(frozen=True)
class SeriesReport:
    """Partial sums of a truncated series and its tail diagnostics."""

    partial_sums: np.ndarray = field(repr=False)
    last_term: float
    tail_ratio: float
    converged: bool
    tail_tol: float
    note: str = ("convergence is judged by the last-increment/partial-sum ratio, "
                 "a numerical heuristic and not a proof of summability")

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "last_term": self.last_term,
            "tail_ratio": self.tail_ratio,
            "converged": self.converged,
            "tail_tol": self.tail_tol,
            "note": self.note,
        }


def series_report(terms: Sequence[float], tail_tol: float = 1e-6) -> SeriesReport:
    """Sequential partial sums of ``terms`` with the tail-ratio verdict."""
    terms = np.asarray(terms, dtype=float)
    partial = np.empty_like(terms)
    total = 0.0
    for i, t in enumerate(terms):
        total += t
        partial[i] = total
    last = float(terms[-1]) if terms.size else 0.0
    denom = abs(partial[-1]) if terms.size else 0.0
    if denom > 0:
        ratio = abs(last) / denom
    else:
        ratio = 0.0 if last == 0 else np.inf
    partial.setflags(write=False)
    return SeriesReport(partial, last, float(ratio), bool(ratio < tail_tol), tail_tol)


def op_trace(A: SpectralMatrixOperator, tail_tol: Optional[float] = None) -> float:
    """``sum_k trace(A_k)`` summed in k order.

    With ``tail_tol`` set, raises :class:`ConvergenceError` when the last
    increment relative to the total is not below it.
    """
    r, c = A.shape
    if r != c:
        raise DimensionError("trace requires square matrices")
    terms = np.trace(A.mats, axis1=1, axis2=2)
    if tail_tol is not None:
        rep = series_report(terms, tail_tol)
        if not rep.converged:
            raise ConvergenceError(
                f"trace series not converged at K_max={A.K_max}: tail ratio {rep.tail_ratio:.3g} >= {tail_tol}")
        return rep.total
    return math_fsum(terms)
