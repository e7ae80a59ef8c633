"""Exact laws of Gaussian quadratic forms and of the variance components.

A quadratic form ``Q = sum_k Y_k^T A^k Y_k`` with independent
``Y_k ~ N(mu_k, Sigma_k)`` is reduced to ``sum_i xi_i * chi2_1(delta2_i)``.
Its MGF and characteristic function are evaluated as sums of logs over the
canonical terms and the CDF is recovered by numerical inversion of the
characteristic function.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .anova import component_kernels
from .errors import AccuracyError, DomainError, NumericError, ValidationError
from .model import ModelSpec
from .spectral import sym_eig

DROP_RTOL = 1e-14
ENVELOPE_FLOOR = 1e-10
CDF_TOL = 1e-6


@dataclass(frozen=True)
class QuadFormSpec:
    """Canonical terms ``(xi_i, delta2_i)`` of a sum of weighted noncentral chi-squares.

    Terms with ``|xi| < 1e-14 * max|xi|`` and ``delta2 < 1e-14`` (and exact
    zero weights) are dropped at construction; ``dropped_mass`` bounds their
    contribution to the mean.
    """

    weights: np.ndarray = field(repr=False)
    noncentralities: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)
    dropped_mass: float = 0.0

    def __post_init__(self):
        xi = np.asarray(self.weights, dtype=float).ravel()
        d2 = np.asarray(self.noncentralities, dtype=float).ravel()
        if xi.shape != d2.shape:
            raise ValidationError("weights and noncentralities must have equal length")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(d2))):
            raise ValidationError("canonical terms must be finite")
        if np.any(d2 < 0):
            if np.all(d2 > -1e-12 * max(1.0, np.abs(d2).max())):
                d2 = np.maximum(d2, 0.0)
            else:
                raise ValidationError("noncentralities must be non-negative")
        scale = np.abs(xi).max() if xi.size else 0.0
        drop = (xi == 0) | ((np.abs(xi) < DROP_RTOL * scale) & (d2 < DROP_RTOL))
        dropped = float(np.sum(np.abs(xi[drop]) * (1.0 + d2[drop])))
        xi, d2 = xi[~drop], d2[~drop]
        xi.setflags(write=False)
        d2.setflags(write=False)
        object.__setattr__(self, "weights", xi)
        object.__setattr__(self, "noncentralities", d2)
        object.__setattr__(self, "dropped_mass", float(self.dropped_mass) + dropped)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def max_weight(self) -> float:
        return float(self.weights.max()) if self.size else 0.0

    @property
    def trace_bound(self) -> float:
        """Upper limit for the MGF argument: ``1 / (2 * sum of positive weights)``."""
        pos = self.weights[self.weights > 0].sum()
        return math.inf if pos == 0 else 1.0 / (2.0 * pos)

    @property
    def theorem_condition(self) -> bool:
        """Whether every weight is strictly below one."""
        return bool(self.max_weight < 1.0)

    @property
    def theorem_k_bound(self) -> float:
        """``(1/xi_max) * (1 - 1/(1 - xi_max))`` when ``xi_max < 1``; diagnostic only."""
        m = self.max_weight
        if m <= 0 or m >= 1:
            return math.nan
        return (1.0 / m) * (1.0 - 1.0 / (1.0 - m))

    def mean(self) -> float:
        return float(np.sum(self.weights * (1.0 + self.noncentralities)))

    def variance(self) -> float:
        return float(np.sum(2.0 * self.weights ** 2 * (1.0 + 2.0 * self.noncentralities)))

    def scaled(self, c: float) -> "QuadFormSpec":
        return QuadFormSpec(self.weights * c, self.noncentralities, dict(self.provenance),
                            self.dropped_mass * abs(c))

    def summary(self) -> dict:
        return {
            "terms": int(self.size),
            "mean": self.mean(),
            "variance": self.variance(),
            "max_weight": self.max_weight,
            "trace_bound": self.trace_bound,
            "weights_below_one": self.theorem_condition,
            "dropped_mass": self.dropped_mass,
            **{k: v for k, v in self.provenance.items() if isinstance(v, (str, int, float, bool))},
        }

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        """Direct draws of ``sum xi_i (z_i + delta_i)**2``."""
        out = np.zeros(N)
        delta = np.sqrt(self.noncentralities)
        for xi, dl in zip(self.weights, delta):
            out += xi * (rng.standard_normal(N) + dl) ** 2
        return out


# -- canonical reduction ------------------------------------------------------

def _sym_sqrt(S: np.ndarray):
    w, v = np.linalg.eigh(S)
    if w[0] <= 0:
        raise DomainError("covariance matrix is not positive definite")
    root = (v * np.sqrt(w)) @ v.T
    iroot = (v / np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T), 0.5 * (iroot + iroot.T)


def quadform_canonical(A, cov, mu) -> tuple:
    """Terms of ``y^T A y`` with ``y ~ N(mu, cov)``.

    ``B = cov^{1/2} A cov^{1/2} = P diag(xi) P^T`` and
    ``delta2 = (P^T cov^{-1/2} mu)**2``.
    """
    A = np.asarray(A, dtype=float)
    cov = np.asarray(cov, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-14 * max(1.0, np.abs(A).max())):
        raise ValidationError("quadratic-form kernel must be symmetric")
    root, iroot = _sym_sqrt(cov)
    B = root @ A @ root
    xi, P = sym_eig(0.5 * (B + B.T))
    delta = P.T @ (iroot @ mu)
    return xi, delta ** 2


def canonical_terms(kernels: np.ndarray, covs: np.ndarray, means: np.ndarray) -> tuple:
    """Stacked reduction over k; returns ``(xi, delta2)`` of shape ``(K, n)``."""
    K, n, _ = kernels.shape
    xi = np.empty((K, n))
    d2 = np.empty((K, n))
    for k in range(K):
        xi[k], d2[k] = quadform_canonical(kernels[k], covs[k], means[k])
    return xi, d2


def quadform_spec(kernels, covs, means, provenance: Optional[dict] = None) -> QuadFormSpec:
    xi, d2 = canonical_terms(np.asarray(kernels, float), np.asarray(covs, float), np.asarray(means, float))
    return QuadFormSpec(xi.ravel(), d2.ravel(), dict(provenance or {}))


def component_spec(model: ModelSpec, W, which: str) -> QuadFormSpec:
    """Canonical law of ``sst``, ``ssr`` or ``sse`` for ``model`` and weights ``W``."""
    A = component_kernels(model, W, which)
    plan = getattr(W, "plan", None)
    prov = {"component": which, "K_max": model.K_max,
            "weight_mode": plan.mode if plan is not None else "explicit"}
    return quadform_spec(A, model.error_covariance(), model.mean(), prov)


# -- MGF / CF -------------------------------------------------------------------

def log_mgf(spec: QuadFormSpec, t: float) -> float:
    t = float(t)
    if t == 0.0:
        return 0.0
    bound = spec.trace_bound
    if t >= bound:
        raise DomainError(f"mgf argument t={t} is not below the trace bound {bound}", bound=bound)
    one = 1.0 - 2.0 * t * spec.weights
    if np.any(one <= 0):
        bad = 1.0 / (2.0 * spec.weights[one <= 0].max()) if t > 0 else 1.0 / (2.0 * spec.weights[one <= 0].min())
        raise DomainError(f"mgf argument t={t} outside the domain of a factor", bound=bad)
    xi, d2 = spec.weights, spec.noncentralities
    return float(np.sum(-0.5 * np.log(one) + t * xi * d2 / one))


def mgf(spec: QuadFormSpec, t: float) -> float:
    """``E[exp(t Q)] = prod (1 - 2 t xi)^-1/2 exp(t xi delta2 / (1 - 2 t xi))``.

    Raises :class:`DomainError` (carrying ``bound``) when ``t`` is not below
    the reciprocal-trace bound.
    """
    return math.exp(log_mgf(spec, t))


def log_cf(spec: QuadFormSpec, omega) -> np.ndarray:
    """Principal-branch log of the characteristic function, vectorized in ``omega``."""
    w = np.asarray(omega, dtype=float)
    flat = w.reshape(-1, 1)
    xi, d2 = spec.weights[None, :], spec.noncentralities[None, :]
    z = 1.0 - 2j * flat * xi
    out = np.sum(-0.5 * np.log(z) + 1j * flat * xi * d2 / z, axis=1)
    return out.reshape(w.shape)


def cf(spec: QuadFormSpec, omega):
    """``E[exp(i omega Q)]``; each linear factor on its principal branch."""
    out = np.exp(log_cf(spec, omega))
    if np.ndim(omega) == 0:
        out = complex(out)
        return 1 + 0j if omega == 0 else out
    return np.where(np.asarray(omega) == 0, 1 + 0j, out)


# -- determinant-form evaluation directly from matrices ---------------------------

def det_mgf_factor(A, cov, mu, t: float) -> float:
    """One factor of the MGF in determinant form, ``E[exp(t y^T A y)]``::

        det(I - 2t A S)^-1/2 * exp(-1/2 mu^T (I - (I - 2t A S)^-1) S^-1 mu)
    """
    A, S, mu = (np.asarray(a, dtype=float) for a in (A, cov, mu))
    n = S.shape[0]
    Mt = np.eye(n) - 2.0 * t * A @ S
    sign, logdet = np.linalg.slogdet(Mt)
    if sign <= 0:
        raise DomainError("determinant factor is not positive at this t")
    inner = (np.eye(n) - np.linalg.inv(Mt)) @ np.linalg.solve(S, mu)
    return float(math.exp(-0.5 * logdet - 0.5 * mu @ inner))


def det_cf_factor(A, cov, mu, omega: float, steps: int = 64) -> complex:
    """One factor of the characteristic function in determinant form.

    With ``B = S^{1/2} A S^{1/2}`` and ``b = S^{1/2} A mu``::

        det(I - 2 i w B)^-1/2 * exp(-2 w^2 b^T (I - 2 i w B)^-1 b) * exp(i w mu^T A mu)

    The branch of the half power follows the determinant continuously from
    ``w = 0`` along ``steps`` intermediate points.
    """
    A, S, mu = (np.asarray(a, dtype=float) for a in (A, cov, mu))
    n = S.shape[0]
    w, v = np.linalg.eigh(S)
    root = (v * np.sqrt(w)) @ v.T
    B = root @ A @ root
    b = root @ A @ mu
    eye = np.eye(n)
    phase = 0.0
    prev = 1.0 + 0j
    logabs = 0.0
    for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
        d = np.linalg.det(eye - 2j * s * omega * B)
        phase += np.angle(d / prev)
        prev = d
        logabs = math.log(abs(d))
    half = np.exp(-0.5 * (logabs + 1j * phase))
    Minv_b = np.linalg.solve(eye - 2j * omega * B, b.astype(complex))
    expo = -2.0 * omega ** 2 * (b @ Minv_b) + 1j * omega * (mu @ A @ mu)
    return complex(half * np.exp(expo))


# -- CDF by characteristic-function inversion ----------------------------------

def _phase_and_logmod(spec: QuadFormSpec, w: np.ndarray):
    """``theta(w)`` and ``log|cf(w)|`` for a vector of frequencies."""
    xi, d2 = spec.weights, spec.noncentralities
    w = np.atleast_1d(np.asarray(w, dtype=float))[:, None]
    a = 2.0 * w * xi
    a2 = a * a
    theta = np.sum(0.5 * np.arctan(a) + w * xi * d2 / (1.0 + a2), axis=1)
    logmod = -np.sum(0.25 * np.log1p(a2) + 0.5 * a2 * d2 / (1.0 + a2), axis=1)
    return theta, logmod


def _log_envelope(spec: QuadFormSpec, w: float) -> float:
    a2 = (2.0 * w * spec.weights) ** 2
    return float(-np.sum(0.25 * np.log1p(a2) + 0.5 * a2 * spec.noncentralities / (1.0 + a2)))


def _cutoff(spec: QuadFormSpec, floor: float) -> float:
    """Smallest frequency where ``|cf(w)| / w`` drops below ``floor`` (bisection)."""
    target = math.log(floor)

    def g(w):
        return _log_envelope(spec, w) - math.log(w) - target

    scale = 1.0 / np.abs(spec.weights).max()
    hi = scale
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    lo = hi / 2.0 if hi > scale else 0.0
    if lo == 0.0:
        return hi
    return optimize.brentq(g, lo, hi, xtol=1e-12 * hi)


class _Inverter:
    """Gil-Pelaez inversion on a cached Gauss-Legendre node grid.

    ``F(x) = 1/2 - (1/pi) int_0^inf |cf(w)| sin(theta(w) - w x) / w dw``.
    Phase and modulus of the characteristic function are tabulated once on
    ``[0, head_end]``; each ``x`` then costs one weighted sum. When the
    modulus decays too slowly for the grid to reach the cutoff, the
    remaining tail is integrated per ``x`` with an oscillatory-weight rule.
    """

    ORDER = 16
    MAX_NODES = 400_000
    CHUNK = 8192

    def __init__(self, spec: QuadFormSpec, epsabs: float = 1e-9):
        self.spec = spec
        self.epsabs = epsabs
        xi, d2 = spec.weights, spec.noncentralities
        self.ximax = float(np.abs(xi).max())
        self.rate0 = float(np.sum(np.abs(xi) * (1.0 + d2)))
        self.cutoff = _cutoff(spec, ENVELOPE_FLOOR)
        self.xcover = -1.0
        self.refine = 1

    def _build(self, xmax: float):
        rate = max(self.rate0 + xmax, 2.0 * self.ximax)
        h = math.pi / rate / self.refine
        max_panels = self.MAX_NODES // self.ORDER
        head_end = min(self.cutoff, max_panels * h)
        panels = max(1, int(math.ceil(head_end / h)))
        h = head_end / panels
        self.head_end = head_end
        self.has_tail = head_end < self.cutoff
        left = np.arange(panels) * h
        nodes, wts = [], []
        for order in (self.ORDER, self.ORDER // 2):
            t, w = np.polynomial.legendre.leggauss(order)
            nodes.append((left[:, None] + 0.5 * h * (t + 1.0)[None]).ravel())
            wts.append(np.tile(0.5 * h * w, panels))
        self.nodes, self.wts = nodes, wts
        self.tables = []
        for w_nodes in nodes:
            theta = np.empty_like(w_nodes)
            logmod = np.empty_like(w_nodes)
            for a in range(0, w_nodes.size, self.CHUNK):
                theta[a:a + self.CHUNK], logmod[a:a + self.CHUNK] = _phase_and_logmod(
                    self.spec, w_nodes[a:a + self.CHUNK])
            amp = np.exp(logmod) / w_nodes
            self.tables.append((theta, amp))
        self.xcover = xmax

    def _head(self, x: float) -> tuple:
        vals = []
        for w_nodes, wts, (theta, amp) in zip(self.nodes, self.wts, self.tables):
            vals.append(float(np.dot(wts * amp, np.sin(theta - w_nodes * x))))
        return vals[0], abs(vals[0] - vals[1])

    def _tail(self, x: float) -> tuple:
        a = self.head_end

        def fs(w):
            th, lm = _phase_and_logmod(self.spec, w)
            return float(math.exp(lm[0]) * math.sin(th[0]) / w)

        def fc(w):
            th, lm = _phase_and_logmod(self.spec, w)
            return float(math.exp(lm[0]) * math.cos(th[0]) / w)

        if x == 0:
            val, err = integrate.quad(fs, a, np.inf, limit=400, epsabs=self.epsabs)
            return val, err
        ax, sgn = abs(x), (1.0 if x > 0 else -1.0)
        v1, e1 = integrate.quad(fs, a, np.inf, weight="cos", wvar=ax, limlst=200, epsabs=self.epsabs)
        v2, e2 = integrate.quad(fc, a, np.inf, weight="sin", wvar=ax, limlst=200, epsabs=self.epsabs)
        return v1 - sgn * v2, e1 + e2

    def cdf(self, x: float, tol: float) -> tuple:
        for _ in range(4):
            if abs(x) > self.xcover:
                self._build(max(abs(x), 2.0 * self.xcover))
            head, err = self._head(x)
            if err / math.pi <= tol or self.refine >= 8:
                break
            self.refine *= 2
            self.xcover = -1.0
        total = head
        if self.has_tail:
            t, e = self._tail(x)
            total += t
            err += e
        return 0.5 - total / math.pi, err / math.pi


_INVERTERS: "dict[int, tuple]" = {}


def _inverter(spec: QuadFormSpec) -> _Inverter:
    hit = _INVERTERS.get(id(spec))
    if hit is not None and hit[0] is spec:
        return hit[1]
    inv = _Inverter(spec)
    if len(_INVERTERS) > 32:
        _INVERTERS.clear()
    _INVERTERS[id(spec)] = (spec, inv)
    return inv


def _degenerate(spec: QuadFormSpec) -> bool:
    return spec.size == 0


def cdf(spec: QuadFormSpec, x, tol: float = CDF_TOL):
    """``P(Q <= x)`` by numerical inversion of the characteristic function.

    Accepts a scalar or an array of points. Raises :class:`AccuracyError`
    when the quadrature error estimate exceeds ``tol``.
    """
    xs = np.asarray(x, dtype=float)
    flat = xs.ravel()
    out = np.empty(flat.shape)
    if _degenerate(spec):
        out[:] = (flat >= 0).astype(float)
        return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)
    inv = _inverter(spec)
    m, sd = spec.mean(), math.sqrt(spec.variance())
    if inv.xcover < 0:
        inv._build(max(np.abs(flat).max(), abs(m) + 12.0 * sd))
    all_pos = bool(np.all(spec.weights > 0))
    all_neg = bool(np.all(spec.weights < 0))
    for i, xv in enumerate(flat):
        if all_pos and xv <= 0:
            out[i] = 0.0
            continue
        if all_neg and xv >= 0:
            out[i] = 1.0
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = inv.cdf(float(xv), tol)
        if not err <= tol:
            raise AccuracyError(f"CF inversion at x={xv} reached only {err:.3g} (requested {tol})",
                                achieved=err)
        out[i] = min(1.0, max(0.0, val))
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


def sf(spec: QuadFormSpec, x, tol: float = CDF_TOL):
    return 1.0 - np.asarray(cdf(spec, x, tol)) if np.ndim(x) else 1.0 - cdf(spec, x, tol)


def quantile(spec: QuadFormSpec, p: float, tol: float = CDF_TOL) -> float:
    """Smallest ``x`` with ``cdf(x) = p`` to within ``tol``.

    The bracket comes from one-sided Chebyshev (Cantelli) bounds on the
    mean and variance.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    if _degenerate(spec):
        return 0.0
    m, sd = spec.mean(), math.sqrt(spec.variance())
    hi = m + sd * math.sqrt(p / (1.0 - p))
    lo = m - sd * math.sqrt((1.0 - p) / p)
    if np.all(spec.weights > 0):
        lo = max(lo, 0.0)
    f = lambda x: cdf(spec, x, tol) - p  # noqa: E731
    flo, fhi = f(lo), f(hi)
    grow = 0
    while fhi < 0 and grow < 60:
        hi += sd * 2.0 ** grow
        fhi = f(hi)
        grow += 1
    grow = 0
    while flo > 0 and grow < 60:
        lo -= sd * 2.0 ** grow
        flo = f(lo)
        grow += 1
    if flo > 0 or fhi < 0:
        raise NumericError(f"could not bracket the {p} quantile")
    if flo == 0:
        return lo
    x = optimize.brentq(f, lo, hi, xtol=1e-12 * max(1.0, abs(hi)), rtol=1e-12, maxiter=200)
    return float(x)
