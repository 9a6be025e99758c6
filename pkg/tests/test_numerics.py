"""Linear algebra: matmul contract, QR, and the eigensolver."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdrop.errors import InputError, NumericalError
from _spectra import spectrum_distance

from recdrop.numerics import (
    MAX_EIG_DIM,
    balance,
    eigenvalues,
    hessenberg,
    householder_qr,
    matmul,
    qr_shift_step,
)


def triple_loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def sorted_eigs(values):
    values = np.asarray(values, dtype=complex)
    return values[np.lexsort((values.imag, values.real))]


class TestMatmul:
    def test_identity(self):
        a = np.arange(9.0).reshape(3, 3) + 1
        np.testing.assert_array_equal(matmul(np.eye(3), a), a)

    def test_annihilator(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(matmul(a, np.zeros((3, 2))), np.zeros((2, 2)))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((3, 2))
        assert np.abs(matmul(a, b) - triple_loop_matmul(a, b)).max() < 1e-12

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InputError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_non_finite_rejected(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(InputError):
            matmul(bad, np.eye(2))


class TestHouseholderQR:
    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 5, 16, 32):
            a = rng.standard_normal((n, n))
            q, r = householder_qr(a)
            assert np.abs(q @ r - a).max() < 1e-12 * max(1, np.abs(a).max())
            assert np.abs(q.conj().T @ q - np.eye(n)).max() < 1e-10
            assert np.abs(np.tril(r, -1)).max() < 1e-12

    def test_complex_input(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        q, r = householder_qr(a)
        assert np.abs(q @ r - a).max() < 1e-12
        assert np.abs(q.conj().T @ q - np.eye(6)).max() < 1e-10


class TestEigenvalues:
    def test_identity(self):
        np.testing.assert_allclose(sorted_eigs(eigenvalues(np.eye(2))), [1.0, 1.0])

    def test_planar_rotation(self):
        vals = sorted_eigs(eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]])))
        np.testing.assert_allclose(vals, [-1j, 1j], atol=1e-12)

    def test_product_matches_lu_determinant(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((5, 5))
            det = np.linalg.det(a)  # LU-based determinant oracle
            prod = np.prod(eigenvalues(a))
            assert abs(prod - det) <= 1e-8 * max(1.0, abs(det))

    def test_matches_lapack_on_random_matrices(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 3, 7, 13, 32):
            a = rng.standard_normal((n, n)) * 2.0
            ref = np.linalg.eigvals(a)
            dist = spectrum_distance(eigenvalues(a), ref)
            assert dist < 1e-9 * max(1.0, np.abs(ref).max())

    def test_permutation_matrix_needs_exceptional_shift(self):
        for n in (4, 8, 16):
            p = np.eye(n)[list(range(1, n)) + [0]]
            assert spectrum_distance(eigenvalues(p), np.linalg.eigvals(p)) < 1e-9

    def test_conjugate_pairing_is_exact(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((17, 17))
        vals = eigenvalues(a)
        assert np.abs(sorted_eigs(vals) - sorted_eigs(vals.conj())).max() == 0.0

    def test_budget_exhaustion_carries_partial_spectrum(self):
        a = np.random.default_rng(6).standard_normal((8, 8))
        with pytest.raises(NumericalError) as excinfo:
            eigenvalues(a, max_sweeps=1)
        partial = excinfo.value.diagnostics["partial_spectrum"]
        assert partial.shape == (8,)

    def test_dimension_cap(self):
        with pytest.raises(InputError):
            eigenvalues(np.eye(MAX_EIG_DIM + 1))

    def test_non_square_rejected(self):
        with pytest.raises(InputError):
            eigenvalues(np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=32),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    scale=st.floats(min_value=0.01, max_value=10.0),
)
def test_trace_identity(n, seed, scale):
    a = np.random.default_rng(seed).standard_normal((n, n))
    norm = np.abs(a).max()
    if norm > 0:
        a *= scale / norm
    vals = eigenvalues(a)
    assert abs(vals.sum() - np.trace(a)) <= 1e-8 * (1.0 + scale)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=16),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_transpose_has_same_spectrum(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    fwd = eigenvalues(a)
    dist = spectrum_distance(fwd, eigenvalues(a.T))
    assert dist <= 1e-8 * max(1.0, np.abs(fwd).max())


def test_hessenberg_is_similarity():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((9, 9))
    h = hessenberg(a)
    assert np.abs(np.tril(h, -2)).max() == 0.0
    assert spectrum_distance(np.linalg.eigvals(a), np.linalg.eigvals(h)) < 1e-9


def test_qr_shift_step_preserves_spectrum():
    rng = np.random.default_rng(8)
    h = hessenberg(rng.standard_normal((8, 8)))
    for shift in (0.0, 0.7, 1.3 - 0.2j):
        stepped = qr_shift_step(h, shift)
        assert spectrum_distance(np.linalg.eigvals(h), np.linalg.eigvals(stepped)) < 1e-9


def test_balance_preserves_spectrum():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((7, 7))
    a[0] *= 1e6
    a[:, 3] *= 1e-5
    before = np.linalg.eigvals(a)
    dist = spectrum_distance(before, np.linalg.eigvals(balance(a)))
    assert dist < 1e-9 * max(1.0, np.abs(before).max())
