import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsd import qmat
from rsd.qmat import SIGMA_X, SIGMA_Y, SIGMA_Z

from conftest import random_hermitian, random_matrix

I2 = np.eye(2)


def test_tensor_sigma_z_identity():
    assert np.array_equal(qmat.tensor(SIGMA_Z, I2), np.diag([1, 1, -1, -1]).astype(complex))


def test_tensor_identities():
    assert np.array_equal(qmat.tensor(I2, I2), np.eye(4))


def test_tensor_basis_projectors():
    p0, p1 = qmat.basis_projector(2, 0), qmat.basis_projector(2, 1)
    assert np.array_equal(qmat.tensor(p0, p1), qmat.basis_projector(4, 1))


def test_tensor_three_factors():
    out = qmat.tensor(I2, SIGMA_X, SIGMA_Z)
    assert out.shape == (8, 8)
    assert np.allclose(out, np.kron(np.kron(I2, SIGMA_X), SIGMA_Z))


def test_partial_trace_bell_state():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    rho = qmat.projector(phi)
    assert np.allclose(qmat.partial_trace(rho, [2, 2], keep=[1]), I2 / 2, atol=1e-15)
    assert np.allclose(qmat.partial_trace(rho, [2, 2], keep=[0]), I2 / 2, atol=1e-15)


def test_partial_trace_product(rng):
    a = random_matrix(rng, 3)
    b = random_matrix(rng, 2)
    out = qmat.partial_trace(qmat.tensor(a, b), [3, 2], keep=[1])
    assert np.allclose(out, b * np.trace(a), atol=1e-13)


def test_partial_trace_keep_all_and_middle(rng):
    m = random_matrix(rng, 12)
    assert np.allclose(qmat.partial_trace(m, [2, 3, 2], keep=[0, 1, 2]), m)
    a, b, c = random_matrix(rng, 2), random_matrix(rng, 3), random_matrix(rng, 2)
    mid = qmat.partial_trace(qmat.tensor(a, b, c), [2, 3, 2], keep=[1])
    assert np.allclose(mid, b * np.trace(a) * np.trace(c), atol=1e-12)


def test_partial_trace_noncontiguous_keep(rng):
    a, b, c = random_matrix(rng, 2), random_matrix(rng, 3), random_matrix(rng, 2)
    out = qmat.partial_trace(qmat.tensor(a, b, c), [2, 3, 2], keep=[0, 2])
    assert np.allclose(out, qmat.tensor(a, c) * np.trace(b), atol=1e-12)


def test_partial_trace_everything_is_trace(rng):
    m = random_matrix(rng, 4)
    # tracing out all subsystems: keep one trivial factor of a (1, 4) split
    out = qmat.partial_trace(m, [1, 4], keep=[0])
    assert out.shape == (1, 1)
    assert np.isclose(out[0, 0], np.trace(m))


def test_partial_trace_errors():
    with pytest.raises(qmat.DimensionError):
        qmat.partial_trace(np.eye(4), [2, 3], keep=[0])
    with pytest.raises((qmat.DimensionError, ValueError)):
        qmat.partial_trace(np.eye(4), [2, 2], keep=[])
    with pytest.raises((qmat.DimensionError, ValueError)):
        qmat.partial_trace(np.eye(4), [2, 2], keep=[2])


def test_expm_examples():
    assert np.allclose(qmat.expm_hermitian_generator(SIGMA_X, np.pi / 2), 1j * SIGMA_X, atol=1e-15)
    assert np.allclose(qmat.expm_hermitian_generator(SIGMA_Y, 0.0), I2)
    t = 0.7
    d = qmat.expm_hermitian_generator(np.diag([1.0, 2.0]), t)
    assert np.allclose(d, np.diag([np.exp(1j * t), np.exp(2j * t)]), atol=1e-15)


def test_expm_rejects_non_hermitian():
    with pytest.raises(qmat.NotHermitianError):
        qmat.expm_hermitian_generator(np.array([[0, 1], [0, 0]]), 1.0)


def test_expm_group_law_and_unitarity(rng):
    h = random_hermitian(rng, 4)
    u = qmat.expm_hermitian_generator(h, 0.3)
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    lhs = qmat.expm_hermitian_generator(h, 0.3) @ qmat.expm_hermitian_generator(h, -1.1)
    assert np.allclose(lhs, qmat.expm_hermitian_generator(h, -0.8), atol=1e-10)


def test_commutator_examples(rng):
    assert np.allclose(qmat.commutator(SIGMA_X, SIGMA_Y), 2j * SIGMA_Z)
    assert np.allclose(qmat.anticommutator(SIGMA_X, SIGMA_X), 2 * I2)
    a = random_matrix(rng, 3)
    assert np.allclose(qmat.commutator(a, a), 0)


def test_commutator_dim_mismatch():
    with pytest.raises(qmat.DimensionError):
        qmat.commutator(np.eye(2), np.eye(3))


def test_expectation_examples(rng):
    assert qmat.expectation(SIGMA_Z, qmat.basis_projector(2, 0)) == pytest.approx(1)
    rho = random_matrix(rng, 3)
    assert qmat.expectation(np.eye(3), rho) == pytest.approx(np.trace(rho))
    assert qmat.expectation(SIGMA_X, I2 / 2) == pytest.approx(0)
    with pytest.raises(qmat.DimensionError):
        qmat.expectation(np.eye(2), np.eye(4))


def test_expectation_real_for_hermitian(rng):
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4)
    rho = b @ b
    assert abs(qmat.expectation(a, rho).imag) < 1e-10


def test_as_cmatrix_is_readonly_and_capped():
    m = qmat.as_cmatrix([[1, 0], [0, 1]])
    assert m.dtype == np.complex128
    with pytest.raises(ValueError):
        m[0, 0] = 2
    with pytest.raises(qmat.DimensionError):
        qmat.as_cmatrix(np.zeros(3))


def test_pauli_dot():
    n = np.array([1, 2, 2]) / 3
    p = qmat.pauli_dot(n)
    assert np.allclose(p @ p, I2)
    assert np.allclose(p, (SIGMA_X + 2 * SIGMA_Y + 2 * SIGMA_Z) / 3)


dims_st = st.lists(st.integers(1, 3), min_size=1, max_size=3)


@given(dims_st, dims_st, st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_tensor_associativity_and_trace(da, db, seed):
    rng = np.random.default_rng(seed)
    na, nb, nc = int(np.prod(da)), int(np.prod(db)), 2
    a, b, c = random_matrix(rng, na), random_matrix(rng, nb), random_matrix(rng, nc)
    left = qmat.tensor(qmat.tensor(a, b), c)
    right = qmat.tensor(a, qmat.tensor(b, c))
    assert np.max(np.abs(left - right)) <= 1e-14 * max(1.0, np.max(np.abs(left)))
    kept = qmat.partial_trace(qmat.tensor(a, b), [na, nb], keep=[0])
    assert np.allclose(kept, a * np.trace(b), atol=1e-12)


@given(st.integers(2, 6), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_commutator_traceless(n, seed):
    rng = np.random.default_rng(seed)
    a, b = random_matrix(rng, n), random_matrix(rng, n)
    assert abs(np.trace(qmat.commutator(a, b))) <= 1e-12 * max(1.0, np.abs(a).max() * np.abs(b).max() * n)
