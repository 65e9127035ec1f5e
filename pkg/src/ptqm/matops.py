"""Dense complex-matrix kernel.

Matrices and states are plain ``numpy`` arrays of dtype ``complex128``.
The heavy lifting is delegated to LAPACK through numpy/scipy; this module
adds validation, deterministic ordering and residual checks on top.
"""

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_1, SIGMA_2, SIGMA_3])


def as_matrix(m, name="matrix"):
    """Coerce to a finite square complex matrix, raising ValidationError otherwise."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    return m


def as_state(v, dim=None, name="state"):
    """Coerce to a finite complex vector, optionally of a given length."""
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"{name} must be a non-empty vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise ValidationError(f"{name} has length {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} has non-finite entries")
    return v


def dagger(m):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_residual(m):
    """||M - M^dagger||_F, batched over leading axes."""
    return np.linalg.norm(m - dagger(m), axis=(-2, -1))


def pauli_dot(v):
    """v . sigma for real or complex 3-vectors, batched: (..., 3) -> (..., 2, 2)."""
    v = np.asarray(v)
    return np.einsum("...k,kij->...ij", v, PAULI)


def eig(m, tol=1e-10):
    """Eigendecomposition with sorted eigenvalues and a residual check.

    Eigenvalues are ordered by real part, ties broken by imaginary part.
    Columns of the returned matrix are the unit-norm right eigenvectors.
    """
    m = as_matrix(m)
    try:
        w, v = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.lexsort((w.imag, w.real))
    w, v = w[order], v[:, order]
    scale = max(np.linalg.norm(m, 2), np.finfo(float).tiny)
    residual = np.max(np.linalg.norm(m @ v - v * w, axis=0))
    if not np.isfinite(residual) or residual > tol * scale:
        raise NumericalError(
            f"eigenpair residual {residual:.3e} exceeds {tol:g}*||M|| = {tol * scale:.3e}",
            residual=residual,
        )
    return w, v


def expm(m):
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    m = as_matrix(m)
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(m)
    if not np.all(np.isfinite(out)):
        raise NumericalError(
            f"matrix exponential overflowed (||M|| = {np.linalg.norm(m, 2):.3e})"
        )
    return out


def hermitian_sqrt(w, tol=1e-10):
    """Unique Hermitian positive-definite square root of a Hermitian PD matrix."""
    w = as_matrix(w, "W")
    scale = max(np.linalg.norm(w), np.finfo(float).tiny)
    res = hermitian_residual(w)
    if res > tol * scale:
        raise ValidationError(f"W is not Hermitian (residual {res:.3e})")
    vals, vecs = np.linalg.eigh(0.5 * (w + dagger(w)))
    if vals[0] <= 0:
        raise ValidationError(f"W is not positive-definite (smallest eigenvalue {vals[0]:.3e})")
    r = (vecs * np.sqrt(vals)) @ dagger(vecs)
    return 0.5 * (r + dagger(r))


def polar_unitary(m, rcond=None):
    """Unitary factor of the polar decomposition, U = M (M^dagger M)^(-1/2).

    Works on a single matrix or a stack. Computed from the SVD M = X S V^dagger
    as U = X V^dagger, which is also the nearest unitary in Frobenius norm.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValidationError(f"polar_unitary needs square matrices, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    x, s, vh = np.linalg.svd(m)
    if rcond is None:
        rcond = m.shape[-1] * np.finfo(float).eps
    smin, smax = s[..., -1], s[..., 0]
    if np.any(smin <= rcond * smax) or np.any(smax == 0):
        raise NumericalError("matrix is singular; polar factor undefined",
                             residual=float(np.min(smin)))
    return x @ vh


def polar_step(m):
    """Polar unitary factor without validation, for tight integrator loops."""
    x, s, vh = np.linalg.svd(m)
    if not s[-1] > 1e-14 * s[0]:
        raise NumericalError("matrix is singular; polar factor undefined", residual=float(s[-1]))
    return x @ vh


def unitarity_residual(u):
    """||U^dagger U - I||_F, batched."""
    n = u.shape[-1]
    return np.linalg.norm(dagger(u) @ u - np.eye(n), axis=(-2, -1))


def expi_hermitian_2x2(g, x):
    """exp(i x G) for Hermitian 2x2 G (or a stack) and real x, in closed form.

    With G = g0 I + g.sigma this is e^{i g0 x}[cos(|g| x) I + i sin(|g| x) g.sigma/|g|].
    Broadcasts over leading axes of G and over x.
    """
    g = np.asarray(g, dtype=complex)
    x = np.asarray(x, dtype=float)
    g0 = 0.5 * np.real(np.trace(g, axis1=-2, axis2=-1))
    gv = 0.5 * np.real(np.einsum("...ij,kji->...k", g, PAULI))
    norm = np.linalg.norm(gv, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    unit = gv / safe[..., None]
    ang = norm * x
    sinc_term = np.where(norm > 0, np.sin(ang), 0.0)
    out = np.cos(ang)[..., None, None] * SIGMA_0 + 1j * sinc_term[..., None, None] * pauli_dot(unit)
    return np.exp(1j * g0 * x)[..., None, None] * out
