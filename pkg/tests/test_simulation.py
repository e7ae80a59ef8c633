import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hfanova as hf
from hfanova.errors import ValidationError
from hfanova.simulation import SimConfig, empirical_cdf, mc_moments, sample_datasets, sup_distance_bound
from hfanova.spectral import identity_operator

from conftest import reference_model


def test_noise_free_is_exact():
    m = reference_model(K=6, sigma=0.0)
    assert np.array_equal(hf.sample_dataset(m, 9).data, m.mean())


def test_zero_mean_identity_covariance():
    m = hf.ModelSpec(np.ones((3, 1)), identity_operator(4, 3))
    Y = sample_datasets(m, 2, 100_000)
    assert np.abs(Y.mean(axis=0)).max() < 4 / np.sqrt(100_000)


def test_covariance_matches_model():
    m = reference_model(K=5, sigma=1.7)
    Y = sample_datasets(m, 3, 100_000)
    Yc = Y - m.mean()[None]
    for k in range(5):
        emp = Yc[:, k].T @ Yc[:, k] / Y.shape[0]
        ref = m.error_covariance()[k]
        assert np.linalg.norm(emp - ref, 2) / np.linalg.norm(ref, 2) < 0.05


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 64 - 1))
def test_seed_determinism(seed):
    m = reference_model(K=4)
    a = sample_datasets(m, seed, 3)
    assert a.tobytes() == sample_datasets(m, seed, 3).tobytes()
    assert np.array_equal(hf.sample_dataset(m, seed).data, a[0])


def test_frequency_streams_independent_of_truncation():
    m10, m20 = reference_model(K=10), reference_model(K=20)
    a, b = sample_datasets(m10, 5, 4), sample_datasets(m20, 5, 4)
    assert np.array_equal(a, b[:, :10])


def test_different_seeds_differ():
    m = reference_model(K=4)
    assert not np.array_equal(sample_datasets(m, 1, 2), sample_datasets(m, 2, 2))


def test_empirical_helpers(rng):
    F = empirical_cdf([1, 2, 3])
    assert F(2) == pytest.approx(2 / 3) and F.left(2) == pytest.approx(1 / 3)
    assert mc_moments([4.0] * 10)["var"] == 0
    z = rng.standard_normal(100_000)
    assert abs(mc_moments(z)["mean"]) < 4 / np.sqrt(z.size)
    with pytest.raises(ValidationError):
        mc_moments([])


def test_sup_distance_bound_is_an_upper_bound(rng):
    from scipy import stats
    x = rng.standard_normal(5000)
    ks = stats.kstest(x, "norm").statistic
    bound = sup_distance_bound(x, stats.norm.cdf, grid_size=200)
    assert ks <= bound + 1e-15
    assert bound < ks + 1 / 200 + 1e-3


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(seed=-1)
    with pytest.raises(ValidationError):
        SimConfig(seed=1, N=0)
