import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hfanova.errors import ConvergenceError, DimensionError, DomainError
from hfanova.spectral import (
    BasisMeta,
    CoefficientBlock,
    SpectralMatrixOperator,
    bilinear_form,
    diagonal_operator,
    identity_operator,
    op_apply,
    op_compose,
    op_inverse,
    op_sqrt,
    op_trace,
    project,
    reconstruct,
    series_report,
    sym_eig,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def spd_stack(rng, K, n):
    A = rng.standard_normal((K, n, n))
    return A @ np.swapaxes(A, 1, 2) + n * np.eye(n)


def test_project_packs_rows():
    b = project([[1, 2], [3, 4]], d=2)
    assert np.array_equal(b.row(1), [1, 2]) and np.array_equal(b.row(2), [3, 4])
    assert np.array_equal(project(np.zeros((4, 3))).data, np.zeros((4, 3)))


def test_project_rejects_ragged_and_wrong_width():
    with pytest.raises(DimensionError):
        project([[1, 2], [3]])
    with pytest.raises(DimensionError):
        project([[1, 2, 3]], d=2)


@given(arrays(float, st.tuples(st.integers(1, 60), st.integers(1, 6)), elements=finite))
def test_round_trip_is_bit_identical(rows):
    back = reconstruct(project(rows))
    assert back.tobytes() == rows.tobytes()
    back[0, 0] = 1.0  # returned copy is writable and detached
    assert project(rows).data.flags.writeable is False


def test_single_row_round_trip():
    assert reconstruct(project([[5.0, 6.0]])).shape == (1, 2)


def test_identity_and_zero_operators(rng):
    f = project(rng.standard_normal((7, 3)))
    assert op_apply(identity_operator(7, 3), f) == f
    Z = SpectralMatrixOperator(np.zeros((7, 3, 3)))
    assert np.all(op_apply(Z, f).data == 0)


def test_apply_matches_naive_loop(rng):
    A = SpectralMatrixOperator(rng.standard_normal((9, 2, 2)))
    f = project(rng.standard_normal((9, 2)))
    out = op_apply(A, f).data
    for k in range(9):
        for i in range(2):
            assert out[k, i] == pytest.approx(sum(A.mats[k, i, j] * f.data[k, j] for j in range(2)), rel=1e-14)


def test_rectangular_apply_changes_dimension(rng):
    A = SpectralMatrixOperator(rng.standard_normal((4, 2, 3)))
    assert op_apply(A, project(rng.standard_normal((4, 3)))).d == 2
    with pytest.raises(DimensionError):
        op_apply(A, project(rng.standard_normal((4, 2))))


def test_basis_mismatch_is_rejected(rng):
    A = identity_operator(4, 2, BasisMeta(4, tuple("abcd")))
    with pytest.raises(DimensionError):
        op_apply(A, project(rng.standard_normal((5, 2))))


def test_bilinear_identity_is_euclidean(rng):
    f, g = project(rng.standard_normal((6, 3))), project(rng.standard_normal((6, 3)))
    assert bilinear_form(identity_operator(6, 3), f, g) == pytest.approx(float(f.data.ravel() @ g.data.ravel()), rel=1e-13)


def test_bilinear_triple_loop(rng):
    A = SpectralMatrixOperator(spd_stack(rng, 3, 2))
    f, g = project(rng.standard_normal((3, 2))), project(rng.standard_normal((3, 2)))
    brute = sum(g.data[k, i] * A.mats[k, i, j] * f.data[k, j] for k in range(3) for i in range(2) for j in range(2))
    assert bilinear_form(A, f, g) == pytest.approx(brute, rel=1e-13)


def test_bilinear_with_inverse_is_rkhs_norm(rng):
    L = SpectralMatrixOperator(spd_stack(rng, 5, 3), symmetric=True, positive_definite=True)
    f = project(rng.standard_normal((5, 3)))
    direct = sum(f.data[k] @ np.linalg.solve(L.mats[k], f.data[k]) for k in range(5))
    assert bilinear_form(op_inverse(L), f, f) == pytest.approx(direct, rel=1e-12)


def test_inverse_of_identity():
    I = identity_operator(5, 3)
    assert np.array_equal(op_inverse(I).mats, I.mats)


def test_sqrt_recomposes(rng):
    L = SpectralMatrixOperator(spd_stack(rng, 10, 4), symmetric=True, positive_definite=True)
    R = op_sqrt(L)
    err = np.abs(op_compose(R, R).mats - L.mats).max(axis=(1, 2)) / np.abs(L.mats).max(axis=(1, 2))
    assert err.max() < 1e-10


def test_sqrt_rejects_indefinite():
    with pytest.raises(DomainError):
        op_sqrt(SpectralMatrixOperator(np.array([[[1.0, 0], [0, -1.0]]])))


def test_trace_of_k_minus_two():
    K = 10_000
    L = diagonal_operator(np.arange(1, K + 1.0)[:, None] ** -2.0 * np.ones((1, 2)))
    expected = 2 * sum(k ** -2.0 for k in range(1, K + 1))
    assert op_trace(L) == pytest.approx(expected, rel=1e-13)
    # the quoted 3.28986 is the full series 2*pi^2/6; the K-term tail lies in (2/(K+1), 2/K)
    gap = 2 * np.pi ** 2 / 6 - op_trace(L)
    assert 2 / (K + 1) < gap < 2 / K


def test_trace_tail_check_is_opt_in():
    L = diagonal_operator(np.arange(1, 101.0)[:, None] ** -1.0)
    op_trace(L)
    with pytest.raises(ConvergenceError):
        op_trace(L, tail_tol=1e-6)


def test_series_report_sums_in_order():
    rep = series_report([1.0, 0.5, 0.25])
    assert list(rep.partial_sums) == [1.0, 1.5, 1.75]
    assert rep.last_term == 0.25 and not rep.converged
    assert series_report([1.0, 1e-12]).converged


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_sym_eig_order_sign_and_recomposition(seed, n):
    rng = np.random.default_rng(seed)
    S = spd_stack(rng, 3, n)
    w, V = sym_eig(S)
    assert np.all(np.diff(w, axis=1) <= 0)
    idx = np.abs(V).argmax(axis=1)
    lead = np.take_along_axis(V, idx[:, None, :], axis=1)
    assert np.all(lead > 0)
    rec = np.einsum("kij,kj,klj->kil", V, w, V)
    assert np.abs(rec - S).max() / np.abs(S).max() < 1e-10


def test_operator_validation():
    with pytest.raises(DimensionError):
        SpectralMatrixOperator(np.zeros(3))
    with pytest.raises(Exception):
        SpectralMatrixOperator(np.array([[[1.0, 2.0], [0.0, 1.0]]]), symmetric=True)
    A = identity_operator(3, 2)
    assert np.array_equal(A[1], np.eye(2))
    with pytest.raises(IndexError):
        A[0]


def test_blocks_are_immutable(rng):
    b = project(rng.standard_normal((3, 2)))
    with pytest.raises(ValueError):
        b.data[0, 0] = 1.0
    assert isinstance(b, CoefficientBlock)
