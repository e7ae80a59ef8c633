import warnings

import numpy as np
import pytest
from scipy import stats

import hfanova as hf
from hfanova.distributions import QuadFormSpec
from hfanova.errors import DimensionError, ValidationError
from hfanova.estimation import gls_coefficients
from hfanova.simulation import sample_datasets
from hfanova.spectral import CoefficientBlock, SpectralMatrixOperator, bilinear_form, identity_operator
from hfanova.testing import ContrastConditionWarning, TestSpec, contrast_norm, prepare_null

from conftest import reference_model

pytestmark = pytest.mark.filterwarnings("ignore::hfanova.estimation.EstimabilityWarning")


def contrast(K, base, decay=1.0):
    l = np.arange(1, K + 1.0)
    return SpectralMatrixOperator(l[:, None, None] ** -decay * np.asarray(base, float)[None])


def test_global_stat_examples(rng):
    K = contrast(5, [[1.0, 0.0]], 0.0)
    b = CoefficientBlock(np.tile([3.0, 7.0], (5, 1)))
    assert hf.global_stat(K, b, CoefficientBlock(np.zeros((5, 1)))) == 45.0
    C = CoefficientBlock(np.full((5, 1), 3.0))
    assert hf.global_stat(K, b, C) == 0.0
    Kr = SpectralMatrixOperator(rng.standard_normal((6, 2, 3)))
    br = CoefficientBlock(rng.standard_normal((6, 3)))
    Cr = CoefficientBlock(rng.standard_normal((6, 2)))
    r = CoefficientBlock(np.einsum("kmp,kp->km", Kr.mats, br.data) - Cr.data)
    assert hf.global_stat(Kr, br, Cr) == pytest.approx(bilinear_form(identity_operator(6, 2), r, r), rel=1e-12)


def test_null_weights_identity_case():
    K = 7
    lam = identity_operator(K, 3)
    spec = hf.null_distribution(identity_operator(K, 3), np.eye(3), lam)
    assert spec.size == 21 and np.allclose(spec.weights, 1.0)


def test_null_weights_scalar_case():
    K = 6
    lam = SpectralMatrixOperator(np.arange(1, K + 1.0)[:, None, None] ** -2.0 * np.ones((1, 1, 1)))
    Kop = contrast(K, [[0.5]], 0.5)
    spec = hf.null_distribution(Kop, np.array([[2.0]]), lam, sigma=1.5)
    q = np.arange(1, K + 1.0) ** -2.0 / 4.0
    kl = 0.5 * np.arange(1, K + 1.0) ** -0.5
    assert np.sort(spec.weights) == pytest.approx(np.sort(1.5 ** 2 * q * kl ** 2), rel=1e-13)


def test_null_law_against_simulation():
    m = reference_model(K=20, beta_scale=0.0)
    Kop = SpectralMatrixOperator(contrast(20, [[1.0, 0.0], [0.0, 1.0]]).mats, m.basis)
    null = hf.null_distribution(Kop, m.X, m.lam, m.sigma)
    b = gls_coefficients(m.X, m.lam, sample_datasets(m, 21, 10_000))
    S = np.einsum("kmp,nkp->nkm", Kop.mats, b)
    S = (S ** 2).sum(axis=(1, 2))
    ks = stats.kstest(S, lambda x: hf.cdf(null, x)).statistic
    assert ks < 0.01


def test_perk_chisq_examples(rng):
    X = np.eye(2)
    b = rng.standard_normal(2)
    assert hf.perk_chisq(np.eye(2), b, b, X, np.eye(2)) == 0.0
    C = rng.standard_normal(2)
    assert hf.perk_chisq(np.eye(2), b, C, X, np.eye(2)) == pytest.approx(np.sum((b - C) ** 2), rel=1e-13)


def test_contrast_condition_warning():
    m = reference_model(K=5)
    big = SpectralMatrixOperator(contrast(5, [[100.0, 0.0]], 0.0).mats, m.basis)
    assert contrast_norm(big, m.X, m.lam) > 1
    with pytest.warns(ContrastConditionWarning):
        hf.null_distribution(big, m.X, m.lam)


def _h0(K=30, alpha=0.05, shift=0.0):
    m = reference_model(K, beta_scale=0.0)
    Kop = SpectralMatrixOperator(contrast(K, [[0.0, 1.0]]).mats, m.basis)
    beta = np.zeros((K, 2))
    beta[:, 1] = shift * np.arange(1, K + 1.0) ** -2
    m = m.with_beta(CoefficientBlock(beta, m.basis))
    return m, TestSpec(Kop, CoefficientBlock(np.zeros((K, 1)), m.basis), alpha)


def test_power_against_large_violation():
    m, spec = _h0(shift=20.0)
    null = prepare_null(m, spec)
    Y = sample_datasets(m, 31, 200)
    rej = [hf.run_test(m, CoefficientBlock(y, m.basis), spec, null, p_value=False).reject for y in Y]
    assert np.mean(rej) == 1.0


def test_p_values_uniform_under_null():
    m, spec = _h0(K=10, alpha=0.5)
    null = prepare_null(m, spec)
    Y = sample_datasets(m, 41, 400)
    pv = [hf.run_test(m, CoefficientBlock(y, m.basis), spec, null).p_value for y in Y]
    assert stats.kstest(pv, "uniform").pvalue > 0.01


def test_result_consistency():
    m, spec = _h0(K=10)
    res = hf.run_test(m, hf.sample_dataset(m, 5), spec)
    assert res.reject == (res.statistic > res.critical_value)
    assert res.reject == (res.p_value < spec.alpha) or abs(res.p_value - spec.alpha) < 1e-5
    d = res.to_dict()
    assert len(d["per_l_chisq"]) == 10 and d["contrast_condition"]["pass"]


def test_spec_validation():
    with pytest.raises(ValidationError):
        TestSpec(contrast(3, [[1.0]]), CoefficientBlock(np.zeros((3, 1))), alpha=1.5)
    with pytest.raises(DimensionError):
        TestSpec(contrast(3, [[1.0]]), CoefficientBlock(np.zeros((3, 2))))
    m, spec = _h0(K=4)
    bad = TestSpec(contrast(4, [[1.0, 0.0, 0.0]]), CoefficientBlock(np.zeros((4, 1))))
    with pytest.raises(DimensionError):
        hf.run_test(m, hf.sample_dataset(m, 1), bad)
