import numpy as np
import pytest

import hfanova as hf
from hfanova.model import equicorrelation

ACCEPTANCE_LINES = []


def random_correlation(rng, n):
    A = rng.standard_normal((n, n + 2))
    S = A @ A.T + 0.5 * np.eye(n)
    d = np.sqrt(np.diag(S))
    return S / np.outer(d, d)


def random_model(rng, n_max=6, p_max=3, k_max=50, sigma=None, beta=True):
    """Random full-rank design on a power-law covariance family."""
    n = int(rng.integers(2, n_max + 1))
    p = int(rng.integers(1, min(p_max, n) + 1))
    K = int(rng.integers(2, k_max + 1))
    X = rng.standard_normal((n, p))
    fam = hf.power_law_family(n, exponent=rng.uniform(1.2, 3.0, n), scale=rng.uniform(0.5, 2.0, n),
                              rho=random_correlation(rng, n))
    b = rng.standard_normal((K, p)) * np.arange(1, K + 1)[:, None] ** -1.5 if beta else None
    s = float(rng.uniform(0.5, 2.0)) if sigma is None else sigma
    return hf.model_from_family(X, fam, K, beta=b, sigma=s)


def reference_model(K=50, sigma=1.0, beta_scale=1.0):
    """n=4, p=2 intercept + slope design with correlated power-law errors."""
    fam = hf.power_law_family(4, exponent=[2.0, 2.5, 3.0, 2.0], rho=equicorrelation(4, 0.3))
    X = np.column_stack([np.ones(4), np.arange(4.0)])
    beta = beta_scale * np.outer(np.arange(1, K + 1.0) ** -2, [1.0, 0.5])
    return hf.model_from_family(X, fam, K, beta=beta, sigma=sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def acceptance():
    """Record one labelled verdict; the line is echoed in the terminal summary."""

    def record(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
