"""Complex harmonic oscillator in a truncated number basis.

H_CHO = (1/2)[(X + 2i yY/Z - y^2/Z) q^2 + (Y + iy)(pq + qp) + Z p^2]
W = exp(-(y/Z) q^2),  eta = exp(-(y/2Z) q^2),
h_GHO = eta H eta^{-1} = (1/2)[X q^2 + Y(pq + qp) + Z p^2].

Truncation corrupts the last rows and columns of every operator, so
identities are checked on the leading "interior" block of dimension
N - ceil(N/5). Quadratic operators are exact projections of the infinite
matrices; exponentials of q^2 are computed in a padded basis of dimension
N + pad and then projected, which keeps the metric consistent with H.
"""

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import EvolutionSpec, MetricOperator, mapping_generator_shift
from .errors import NumericalError, ValidationError
from .matops import dagger, eig, expm, hermitian_sqrt


@dataclass(frozen=True)
class ChoParams:
    X: float
    Y: float
    Z: float
    y: float
    N: int = 60

    def __post_init__(self):
        for name in ("X", "Y", "Z", "y"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        for name in ("X", "Z", "y"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.Z * self.X <= self.Y ** 2:
            raise ValidationError(f"Z*X > Y^2 required, got Z*X = {self.Z * self.X}, Y^2 = {self.Y ** 2}")
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError(f"truncation N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def frequency(self):
        return math.sqrt(self.Z * self.X - self.Y ** 2)

    @property
    def interior(self):
        return self.N - math.ceil(self.N / 5)

    @property
    def trusted(self):
        return self.N // 3

    def exact_levels(self, count=None):
        n = np.arange(self.trusted if count is None else count)
        return (n + 0.5) * self.frequency


class ChoRates(NamedTuple):
    dX: float = 0.0
    dY: float = 0.0
    dZ: float = 0.0
    dy: float = 0.0


def build_operators(N):
    """q = (a + a^dagger)/sqrt 2 and p = i(a^dagger - a)/sqrt 2 truncated to N levels."""
    if int(N) != N or N < 2:
        raise ValidationError(f"N must be an integer >= 2, got {N}")
    lower = np.diag(np.sqrt(np.arange(1, int(N))), 1).astype(complex)
    raise_ = lower.T.copy()
    return (lower + raise_) / np.sqrt(2.0), 1j * (raise_ - lower) / np.sqrt(2.0)


@lru_cache(maxsize=16)
def _quadratic_cached(N):
    q, p = build_operators(N + 2)
    sl = slice(0, N)
    out = ((q @ q)[sl, sl], (p @ p)[sl, sl], (p @ q + q @ p)[sl, sl])
    for m in out:
        m.setflags(write=False)
    return out


def quadratic_operators(N):
    """(q^2, p^2, pq + qp) as exact N x N projections of the untruncated products."""
    return tuple(m.copy() for m in _quadratic_cached(int(N)))


@lru_cache(maxsize=16)
def _q2_spectrum(N):
    vals, vecs = np.linalg.eigh(_quadratic_cached(N)[0].real)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs


def _gaussian_batch(s, big):
    """exp(-s q^2) in a big-level basis for an array of scalars s, via the eigenbasis of q^2."""
    vals, vecs = _q2_spectrum(big)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    top = np.max(s) * vals[-1]
    if top > 700.0:
        raise NumericalError(
            f"exp(-(y/Z) q^2) underflows (exponent {top:.1f}); use smaller N or smaller y/Z"
        )
    return np.einsum("ij,tj,kj->tik", vecs, np.exp(-s[:, None] * vals[None, :]), vecs)


def build_H_cho(c, literal_q2=False):
    """Complex Hamiltonian. ``literal_q2`` uses -y^2 Y^2/Z in place of -y^2/Z (for comparison only)."""
    q2, p2, pq = quadratic_operators(c.N)
    tail = c.y ** 2 * c.Y ** 2 / c.Z if literal_q2 else c.y ** 2 / c.Z
    coeff = c.X + 2j * c.y * c.Y / c.Z - tail
    return 0.5 * (coeff * q2 + (c.Y + 1j * c.y) * pq + c.Z * p2)


def build_h_gho(c):
    q2, p2, pq = quadratic_operators(c.N)
    return 0.5 * (c.X * q2 + c.Y * pq + c.Z * p2)


def _gaussian(c, scale, pad):
    """P exp(-scale * (y/Z) q^2) P computed in an (N + pad)-level basis."""
    pad = c.N if pad is None else int(pad)
    big = c.N + pad
    full = _gaussian_batch(scale * c.y / c.Z, big)[0].astype(complex)
    return full, _quadratic_cached(big)[0]


def build_metric_cho(c, pad=None):
    """W = exp(-(y/Z) q^2) on N levels."""
    full, _ = _gaussian(c, 1.0, pad)
    w = full[:c.N, :c.N]
    w = 0.5 * (w + dagger(w))
    lam = np.linalg.eigvalsh(w)
    if lam[0] <= 1e-15 * lam[-1]:
        raise NumericalError(
            f"truncated metric is not numerically positive-definite (eigenvalue ratio {lam[0] / lam[-1]:.2e}); "
            "use smaller N or smaller y/Z"
        )
    return MetricOperator(w)


def build_eta_cho(c, pad=None, method="sqrt"):
    """Hermitian square root eta of the metric on N levels.

    ``method="sqrt"`` returns the exact Hermitian square root of the truncated
    W, so eta^2 = W holds to rounding. ``method="projection"`` projects
    exp(-(y/2Z) q^2) from the padded basis instead; it intertwines H_CHO and
    h_GHO more accurately but squares to W only away from the edge.
    """
    if method == "sqrt":
        return hermitian_sqrt(build_metric_cho(c, pad).matrix)
    if method != "projection":
        raise ValidationError(f"method must be 'sqrt' or 'projection', got {method!r}")
    full, _ = _gaussian(c, 0.5, pad)
    eta = full[:c.N, :c.N]
    return 0.5 * (eta + dagger(eta))


def metric_rate_cho(c, rates, pad=None):
    """dW/dt = -(d/dt)(y/Z) q^2 W, projected from the padded basis."""
    rates = ChoRates(*rates)
    s_dot = (rates.dy * c.Z - c.y * rates.dZ) / c.Z ** 2
    full, q2 = _gaussian(c, 1.0, pad)
    out = (-s_dot * (q2 @ full))[:c.N, :c.N]
    return 0.5 * (out + dagger(out))


def build_lambda_cho(c, rates=ChoRates(), z_squared_p2=False):
    """Lambda = H_CHO + (i/2) d(y/Z)/dt q^2.

    ``z_squared_p2`` uses Z^2 p^2 in place of Z p^2 (for comparison only);
    that variant is not consistent with H_CHO.
    """
    rates = ChoRates(*rates)
    s_dot = (rates.dy * c.Z - c.y * rates.dZ) / c.Z ** 2
    q2, p2, _ = quadratic_operators(c.N)
    lam = build_H_cho(c) + 0.5j * s_dot * q2
    if z_squared_p2:
        lam = lam + 0.5 * (c.Z ** 2 - c.Z) * p2
    return lam


def intertwining_residual(eta, h_left, h_right, block):
    """||(eta H - h eta)[:m, :m]|| / ||(h eta)[:m, :m]||, an inverse-free similarity check."""
    lhs = (eta @ h_left)[:block, :block]
    rhs = (h_right @ eta)[:block, :block]
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


@dataclass(frozen=True, eq=False)
class ChoMapping:
    eta: np.ndarray
    h_gho: np.ndarray
    residual: float
    block: int


def proper_map_cho(c, pad=None, method="sqrt"):
    """Hermitian (and proper) eta with the generalized harmonic oscillator it maps onto.

    ``residual`` checks eta H_CHO = h_GHO eta on the interior block. It is
    limited by truncation and shrinks as N grows.
    """
    eta = build_eta_cho(c, pad, method)
    h = build_h_gho(c)
    res = intertwining_residual(eta, build_H_cho(c), h, c.interior)
    return ChoMapping(eta, h, res, c.interior)


def ansatz_shift(c, kappa, kappa_rate, upsilon_rate, upsilon=0.0):
    """Generator shift of eta_proper = U^dagger eta with U = exp(i(kappa q^2/2 + upsilon)).

    Equals (1/2) kappa' q^2 + upsilon' I, which vanishes only for constant
    kappa and upsilon.
    """
    q2 = quadratic_operators(c.N)[0]
    gen = 0.5 * kappa * q2 + upsilon * np.eye(c.N)
    gen_rate = 0.5 * kappa_rate * q2 + upsilon_rate * np.eye(c.N)
    u = expm(1j * gen)
    u_dot = 1j * gen_rate @ u
    eta = build_eta_cho(c)
    return mapping_generator_shift(dagger(u) @ eta, dagger(u_dot) @ eta)


class ChoSpectrum(NamedTuple):
    eigenvalues: np.ndarray
    gho_eigenvalues: np.ndarray
    exact: np.ndarray
    trusted: int


def cho_spectrum(c):
    """Lowest floor(N/3) eigenvalues of H_CHO and h_GHO next to (n + 1/2) sqrt(ZX - Y^2)."""
    vals, _ = eig(build_H_cho(c), tol=1e-8)
    order = np.argsort(vals.real)
    low = vals[order][:c.trusted]
    gho = np.linalg.eigvalsh(build_h_gho(c))[:c.trusted]
    return ChoSpectrum(low, gho, c.exact_levels(), c.trusted)


def similarity_model(c, y_rate=0.0, pad=None):
    """(H, W, dW/dt) of the similarity-consistent truncation at y with rate dy/dt.

    H = eta^{-1} h_GHO eta and W = eta^2 with the padded eta. This finite model
    is exactly pseudo-Hermitian, unlike the bare projection of H_CHO whose
    top levels acquire complex eigenvalues; both agree on the low-lying block.
    """
    ham, w, w_dot = _similarity_batch(c, np.array([c.y]), np.array([float(y_rate)]), pad)
    return ham[0], w[0], w_dot[0]


def _similarity_batch(c, ys, y_rates, pad):
    pad = c.N if pad is None else int(pad)
    n, big = c.N, c.N + pad
    full = _gaussian_batch(0.5 * ys / c.Z, big)
    q2 = _quadratic_cached(big)[0].real
    eta = full[:, :n, :n]
    eta_dot = (-0.5 * (y_rates / c.Z)[:, None, None] * (q2 @ full))[:, :n, :n]
    h = build_h_gho(c)
    ham = np.linalg.solve(eta, h @ eta)
    w = eta @ eta
    w_dot = eta_dot @ eta + eta @ np.swapaxes(eta_dot, -1, -2)
    w = 0.5 * (w + np.swapaxes(w, -1, -2))
    w_dot = 0.5 * (w_dot + np.swapaxes(w_dot, -1, -2))
    return ham, w.astype(complex), w_dot.astype(complex)


def cho_evolution_spec(c, y_of_t, y_rate_of_t, t_span, steps, pad=None, truncation="similarity"):
    """EvolutionSpec for a time-dependent y(t) with X, Y, Z fixed.

    ``y_of_t`` and ``y_rate_of_t`` must accept arrays of times.
    ``truncation="similarity"`` uses :func:`similarity_model`; ``"projection"``
    uses the projected H_CHO and metric, which is unstable over long times
    because of spurious growing modes at the truncation edge.
    """
    if truncation not in ("similarity", "projection"):
        raise ValidationError(f"truncation must be 'similarity' or 'projection', got {truncation!r}")
    last = {}

    def model(times):
        key = np.asarray(times, dtype=float).tobytes()
        if last.get("key") != key:
            times = np.asarray(times, dtype=float)
            ys = np.broadcast_to(np.asarray(y_of_t(times), dtype=float), times.shape)
            rates = np.broadcast_to(np.asarray(y_rate_of_t(times), dtype=float), times.shape)
            if np.any(ys <= 0):
                raise ValidationError("y(t) must stay positive")
            if truncation == "similarity":
                out = _similarity_batch(c, ys, rates, pad)
            else:
                out = tuple(np.asarray(x) for x in zip(*[
                    (build_H_cho(ct), build_metric_cho(ct, pad).matrix,
                     metric_rate_cho(ct, ChoRates(dy=r), pad))
                    for ct, r in ((ChoParams(c.X, c.Y, c.Z, yv, c.N), r) for yv, r in zip(ys, rates))
                ]))
            last.update(key=key, out=out)
        return last["out"]

    return EvolutionSpec(
        hamiltonian_at=lambda t: model(t)[0],
        metric_at=lambda t: model(t)[1],
        metric_rate_at=lambda t: model(t)[2],
        t_span=t_span,
        step_count=steps,
        vectorized=True,
        pt_tolerance=1e-6,
        pt_block=c.interior,
    )
