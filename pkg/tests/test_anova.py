import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hfanova as hf
from hfanova.anova import component_terms
from hfanova.simulation import sample_datasets
from hfanova.spectral import CoefficientBlock, SpectralMatrixOperator, bilinear_form, identity_operator
from hfanova.weights import WeightPlan, identity_weights

from conftest import random_model, reference_model

pytestmark = pytest.mark.filterwarnings("ignore:weight operator does not pass")


def test_residual_projector_examples(rng):
    assert np.abs(hf.residual_projector(np.eye(3), np.diag([1.0, 2.0, 3.0]))).max() < 1e-15
    M = hf.residual_projector(np.ones((2, 1)), np.eye(2))
    assert M == pytest.approx(np.array([[0.5, -0.5], [-0.5, 0.5]]), abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_projector_identities(seed):
    m = random_model(np.random.default_rng(seed), k_max=15)
    M = hf.residual_projectors(m.X, m.lam)
    assert np.abs(M @ M - M).max() < 1e-10 * max(1.0, np.abs(M).max())
    assert np.abs(M @ m.X).max() < 1e-10 * np.abs(m.X).max()


def test_zero_data_and_saturated(rng):
    m = random_model(rng)
    W = hf.build_weights(m.lam, WeightPlan("ssr"))
    zero = hf.sum_squares(m, W, CoefficientBlock(np.zeros((m.K_max, m.n)), m.basis))
    assert zero.sst == zero.sse == zero.ssr == 0
    sat = hf.model_from_family(np.eye(3), hf.power_law_family(3, 2.0), 10)
    Y = CoefficientBlock(rng.standard_normal((10, 3)), sat.basis)
    vc = hf.sum_squares(sat, hf.build_weights(sat.lam, WeightPlan("ssr")), Y)
    assert abs(vc.sse) < 1e-12 and vc.ssr == pytest.approx(vc.sst, rel=1e-12)
    assert np.abs(hf.component_kernels(sat, identity_weights(sat.lam), "sse")).max() < 1e-10


def test_bilinear_form_oracle(rng):
    fam = hf.power_law_family(2, [2.0, 3.0], rho=[[1, 0.4], [0.4, 1]])
    m = hf.model_from_family(np.array([[1.0], [2.0]]), fam, 3, beta=rng.standard_normal((3, 1)))
    W = hf.build_weights(m.lam, WeightPlan("sst"))
    Y = CoefficientBlock(m.mean() + rng.standard_normal((3, 2)), m.basis)
    vc = hf.sum_squares(m, W, Y, verify=True)
    for which, val in (("sst", vc.sst), ("ssr", vc.ssr), ("sse", vc.sse)):
        A = SpectralMatrixOperator(hf.component_kernels(m, W, which), m.basis)
        assert val == pytest.approx(bilinear_form(A, Y, Y), rel=1e-10)


def test_kernels(rng):
    m = random_model(rng)
    Id = identity_weights(m.lam)
    assert hf.component_kernels(m, Id, "sst") == pytest.approx(np.linalg.inv(m.lam.mats), rel=1e-9)
    W = hf.build_weights(m.lam, WeightPlan("ssr"))
    A = {w: hf.component_kernels(m, W, w) for w in ("sst", "ssr", "sse")}
    assert np.abs(A["sst"] - A["ssr"] - A["sse"]).max() <= 1e-12 * np.abs(A["sst"]).max()
    with pytest.raises(ValueError):
        hf.component_kernels(m, W, "msr")


def test_expectation_single_frequency():
    lam = SpectralMatrixOperator(np.array([[[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 3.0]]]), symmetric=True)
    m = hf.ModelSpec(np.ones((3, 1)), lam)
    ex = hf.expected_components(m, identity_weights(lam))
    assert ex.E_sst == pytest.approx(3.0, rel=1e-13)
    assert ex.E_sse == pytest.approx(2.0, rel=1e-13)


def test_saturated_expected_sse_is_zero():
    m = hf.model_from_family(np.eye(3), hf.power_law_family(3, 2.0), 20, beta=np.ones((20, 3)))
    ex = hf.expected_components(m, hf.build_weights(m.lam, WeightPlan("ssr")))
    assert abs(ex.E_sse) <= 1e-12 * ex.E_sst


def test_expectation_monte_carlo_small():
    m = reference_model(K=8)
    W = hf.build_weights(m.lam, WeightPlan("sst"))
    t = component_terms(m, W, sample_datasets(m, 5, 100_000)).sum(axis=1)
    ex = hf.expected_components(m, W)
    sst = t[:, 0]
    assert abs(sst.mean() - ex.E_sst) < 3 * sst.std() / np.sqrt(sst.size)


def test_noise_free_sse_vanishes_for_scalar_weights():
    m = reference_model(K=20, sigma=0.0)
    Y = hf.sample_dataset(m, 3)
    assert np.array_equal(Y.data, m.mean())
    vc = hf.sum_squares(m, hf.build_weights(m.lam, WeightPlan("uniform")), Y)
    assert abs(vc.sse) < 1e-12 * vc.sst


def test_diagnostics_are_reported(rng):
    m = reference_model(K=30)
    W = hf.build_weights(m.lam, WeightPlan("ssr"))
    vc = hf.sum_squares(m, W, hf.sample_dataset(m, 1))
    assert set(vc.tails) == {"sst", "sse", "ssr"}
    assert vc.per_k().shape == (30, 3)
    assert vc.sst == pytest.approx(vc.sse + vc.ssr, rel=1e-12)
    assert np.isfinite(vc.raw_sst_truncated)
