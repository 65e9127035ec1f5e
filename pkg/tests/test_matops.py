import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ptqm import matops
from ptqm.errors import NumericalError, ValidationError
from ptqm.matops import SIGMA_1, SIGMA_2, SIGMA_3

from conftest import random_complex, random_metric

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def complex_matrices(n):
    return st.tuples(arrays(float, (n, n), elements=finite),
                     arrays(float, (n, n), elements=finite)).map(lambda ri: ri[0] + 1j * ri[1])


def test_eig_diagonal():
    vals, vecs = matops.eig(np.diag([2.0, 1.0]))
    assert np.allclose(vals, [1, 2])
    assert np.allclose(np.abs(vecs), [[0, 1], [1, 0]])


def test_eig_pauli_x():
    vals, _ = matops.eig(SIGMA_1)
    assert np.allclose(vals, [-1, 1])


def test_eig_two_level_hamiltonian_at_z_axis():
    # eps = 0, a = 1, b = 0.6 with all angles zero: a sigma3 + i b sigma2 (n_phi = y-axis)
    h = SIGMA_3 + 0.6j * SIGMA_2
    vals, _ = matops.eig(h)
    assert np.allclose(vals, [-0.8, 0.8], atol=1e-12)
    assert np.max(np.abs(vals.imag)) < 1e-12


def test_eig_rejects_bad_input():
    with pytest.raises(ValidationError):
        matops.eig(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        matops.eig(np.array([[np.nan, 0], [0, 1]]))


def test_eig_tolerance_is_enforced(rng):
    m = random_complex(rng, 6)
    matops.eig(m)
    with pytest.raises(NumericalError):
        matops.eig(m, tol=0.0)


@given(complex_matrices(4))
def test_eig_residual_and_ordering(m):
    try:
        vals, vecs = matops.eig(m, tol=1e-6)
    except NumericalError:
        # only defective (non-diagonalizable) inputs may be rejected
        assert np.linalg.cond(np.linalg.eig(m)[1]) > 1e6
        return
    assert np.all(np.diff(vals.real) >= -1e-12)
    assert np.allclose(np.linalg.norm(vecs, axis=0), 1.0)
    assert np.linalg.norm(m @ vecs - vecs * vals) <= 1e-6 * max(1.0, np.linalg.norm(m))


def test_expm_zero_and_diagonal():
    assert np.allclose(matops.expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(matops.expm(0.5j * np.pi * SIGMA_3), np.diag([1j, -1j]))


def test_expm_delta_rotation_at_pole():
    # i zeta delta n_r.sigma with n_r = z at theta = 0
    zeta, delta = -0.95, 1.0
    out = matops.expm(1j * zeta * delta * SIGMA_3)
    assert np.allclose(out, np.diag([np.exp(-0.95j), np.exp(0.95j)]), atol=1e-14)


def test_expm_overflow_raises():
    with pytest.raises(NumericalError):
        matops.expm(np.diag([1e4, 0.0]))


@given(complex_matrices(3))
def test_expm_of_antihermitian_is_unitary(m):
    u = matops.expm(m - m.conj().T)
    assert matops.unitarity_residual(u) < 1e-10


@given(complex_matrices(2), st.floats(-4, 4))
def test_closed_form_2x2_exponential(m, x):
    g = 0.5 * (m + m.conj().T)
    assert np.allclose(matops.expi_hermitian_2x2(g, x), scipy.linalg.expm(1j * x * g), atol=1e-11)


def test_closed_form_2x2_exponential_broadcasts():
    xs = np.linspace(0, 2, 5)
    out = matops.expi_hermitian_2x2(SIGMA_1, xs)
    assert out.shape == (5, 2, 2)
    for x, u in zip(xs, out):
        assert np.allclose(u, scipy.linalg.expm(1j * x * SIGMA_1))


def test_hermitian_sqrt_examples():
    assert np.allclose(matops.hermitian_sqrt(np.eye(2)), np.eye(2))
    assert np.allclose(matops.hermitian_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_hermitian_sqrt_rejects_invalid():
    with pytest.raises(ValidationError):
        matops.hermitian_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        matops.hermitian_sqrt(np.diag([1.0, -1.0]))


def test_hermitian_sqrt_squares_back(rng):
    for n in (2, 4, 7):
        w = random_metric(rng, n, spread=10.0)
        r = matops.hermitian_sqrt(w)
        assert np.allclose(r, r.conj().T)
        assert np.min(np.linalg.eigvalsh(r)) > 0
        assert np.linalg.norm(r @ r - w) < 1e-12 * np.linalg.norm(w)


def test_polar_examples(rng):
    q, _ = np.linalg.qr(random_complex(rng, 3))
    assert np.allclose(matops.polar_unitary(q), q)
    assert np.allclose(matops.polar_unitary(np.diag([2.0, 3.0])), np.eye(2))
    u = matops.polar_unitary(np.eye(2) + 0.01j * SIGMA_2)
    assert matops.unitarity_residual(u) <= 1e-12


def test_polar_singular_raises():
    with pytest.raises(NumericalError):
        matops.polar_unitary(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NumericalError):
        matops.polar_step(np.zeros((2, 2)))


@given(complex_matrices(3))
def test_polar_factor_is_unitary_and_reconstructs(m):
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] < 1e-6 * max(s[0], 1e-300):
        return
    u = matops.polar_unitary(m)
    assert matops.unitarity_residual(u) < 1e-10
    p = u.conj().T @ m
    assert np.allclose(p, p.conj().T, atol=1e-9 * max(1.0, s[0]))
    assert np.min(np.linalg.eigvalsh(0.5 * (p + p.conj().T))) > -1e-9


def test_polar_batched(rng):
    stack = np.stack([random_complex(rng, 2) for _ in range(5)])
    out = matops.polar_unitary(stack)
    assert out.shape == stack.shape
    assert np.max(matops.unitarity_residual(out)) < 1e-12
    assert np.allclose(out, np.stack([matops.polar_step(m) for m in stack]))


def test_pauli_dot_and_dagger():
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(matops.pauli_dot(v), SIGMA_1 + 2 * SIGMA_2 + 3 * SIGMA_3)
    m = np.array([[1, 2j], [3, 4]])
    assert np.allclose(matops.dagger(m), m.conj().T)


def test_as_state_validation():
    with pytest.raises(ValidationError):
        matops.as_state([1.0, 2.0], dim=3)
    with pytest.raises(ValidationError):
        matops.as_state([[1.0]])
