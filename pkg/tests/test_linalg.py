import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdiscood.errors import DimMismatch, NonSquare, NotPSD
from wdiscood.linalg import (
    frobenius_norm,
    mat_vec,
    matmul,
    pinv_psd,
    pinv_sqrt,
    symmetric_eig,
    transpose,
)


def _random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return a + a.T


def _check_eig(a, eig):
    v = eig.eigenvectors
    assert np.all(np.diff(eig.eigenvalues) <= 0)
    assert np.abs(v.T @ v - np.eye(v.shape[1])).max() <= 1e-8
    err = frobenius_norm(a - eig.reconstruct()) / max(1.0, frobenius_norm(a))
    assert err <= 1e-8


def test_eig_identity():
    eig = symmetric_eig(np.eye(3))
    np.testing.assert_allclose(eig.eigenvalues, [1, 1, 1])
    _check_eig(np.eye(3), eig)


def test_eig_diagonal():
    eig = symmetric_eig(np.diag([4.0, 1.0]))
    np.testing.assert_allclose(eig.eigenvalues, [4, 1])
    np.testing.assert_allclose(np.abs(eig.eigenvectors), np.eye(2), atol=1e-15)


def test_eig_two_by_two_closed_form():
    # characteristic polynomial (2 - l)^2 - 1 = 0 -> l = 3, 1
    eig = symmetric_eig([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(eig.eigenvalues, [3.0, 1.0], atol=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(eig.eigenvectors[:, 0]), [s, s], atol=1e-14)
    v1 = eig.eigenvectors[:, 1]
    np.testing.assert_allclose(abs(v1[0]), s, atol=1e-14)
    assert v1[0] * v1[1] < 0


def test_eig_rejects_non_square():
    with pytest.raises(NonSquare):
        symmetric_eig(np.zeros((2, 3)))


def test_eig_symmetrizes_small_noise():
    rng = np.random.default_rng(0)
    a = _random_symmetric(rng, 6)
    noise = 1e-9 * rng.standard_normal((6, 6))
    clean = symmetric_eig(a).eigenvalues
    noisy = symmetric_eig(a + noise).eigenvalues
    assert np.all(np.diff(noisy) <= 0)
    np.testing.assert_allclose(noisy, clean, atol=1e-8)


@pytest.mark.parametrize("n", [1, 2, 7, 64, 512])
def test_eig_reconstruction(n):
    rng = np.random.default_rng(n)
    a = _random_symmetric(rng, n)
    _check_eig(a, symmetric_eig(a))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_eig_reconstruction_property(n, seed):
    a = _random_symmetric(np.random.default_rng(seed), n)
    _check_eig(a, symmetric_eig(a))


def test_eig_degenerate_spectrum_is_orthonormal():
    eig = symmetric_eig(np.diag([2.0, 2.0, 2.0, 1.0]))
    _check_eig(np.diag([2.0, 2.0, 2.0, 1.0]), eig)


def test_pinv_sqrt_identity():
    np.testing.assert_allclose(pinv_sqrt(np.eye(4)), np.eye(4), atol=1e-15)


def test_pinv_sqrt_rank_deficient_diagonal():
    np.testing.assert_allclose(pinv_sqrt(np.diag([4.0, 0.0]), 1e-10), np.diag([0.5, 0.0]))


def test_pinv_sqrt_two_by_two():
    # eigenbasis of [[2,1],[1,2]] is (1,1)/sqrt2, (1,-1)/sqrt2 with eigenvalues 3, 1
    u = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    expected = u @ np.diag([3 ** -0.5, 1.0]) @ u.T
    m = pinv_sqrt([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(m, expected, atol=1e-14)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(m)), [3 ** -0.5, 1.0], atol=1e-14)


def test_pinv_sqrt_support_projector():
    rng = np.random.default_rng(3)
    b = rng.standard_normal((20, 12))
    a = b @ b.T  # rank 12
    m = pinv_sqrt(a)
    lam, v = np.linalg.eigh(a)
    p = v[:, lam > 1e-10 * lam.max()]
    assert p.shape[1] == 12
    assert np.linalg.norm(m @ a @ m - p @ p.T) <= 1e-6


def test_pinv_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        pinv_sqrt(np.diag([1.0, -0.5]))


def test_pinv_sqrt_bad_tolerance():
    with pytest.raises(ValueError):
        pinv_sqrt(np.eye(2), rel_tol=0.0)


def test_pinv_psd_inverts_on_support():
    a = np.diag([4.0, 2.0, 0.0])
    np.testing.assert_allclose(pinv_psd(a), np.diag([0.25, 0.5, 0.0]))


def test_plumbing():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(matmul(np.eye(2), a), a)
    np.testing.assert_array_equal(mat_vec([[1, 2], [3, 4]], [1, 1]), [3, 7])
    np.testing.assert_array_equal(transpose(transpose(a)), a)
    assert frobenius_norm([[3.0, 4.0]]) == 5.0


def test_plumbing_dim_mismatch():
    with pytest.raises(DimMismatch):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimMismatch):
        mat_vec(np.ones((2, 3)), np.ones(2))
