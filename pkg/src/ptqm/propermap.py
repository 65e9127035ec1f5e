"""Proper mappings of the two-level family onto Hermitian Hamiltonians.

The metric W has two Hermitian square roots eta^(+) and eta^(-). Neither is
proper for a moving path; a proper mapping is eta_proper = U^dagger eta with U
solving dU/dt = (1/2)[eta' eta^{-1} - (eta' eta^{-1})^dagger] U. The mapped
Hamiltonian is then h = eta_proper H eta_proper^{-1} = U^dagger h^(+/-) U.
"""

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import rk4_step_maps
from .errors import ValidationError
from .matops import (
    PAULI, SIGMA_0, SIGMA_2, SIGMA_3, as_matrix, dagger, expi_hermitian_2x2, hermitian_residual,
    pauli_dot, polar_step, unitarity_residual,
)
from .paths import SpherePath, single_angle, sphere_points
from .twolevel import (
    TwoLevelParams, eigenstate_arrays, frame, hamiltonian_matrices, metric_matrices,
    params_for_zeta,
)

log = logging.getLogger(__name__)


class SqrtBranch(enum.IntEnum):
    """Which square root of W: chi = a + g (PLUS) or chi = a - g (MINUS)."""

    PLUS = 1
    MINUS = -1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        if key in ("+", "plus", "1", "+1"):
            return cls.PLUS
        if key in ("-", "minus", "-1"):
            return cls.MINUS
        raise ValidationError(f"branch must be 'plus' or 'minus', got {value!r}")


def _zeta(p, branch):
    return p.zeta(int(SqrtBranch.parse(branch)))


# ---------------------------------------------------------------------------
# square roots of the metric


def eta_matrices(a, b, theta, phi, delta, branch=SqrtBranch.PLUS):
    """eta^(+/-), broadcast over angle arrays."""
    sign = int(SqrtBranch.parse(branch))
    theta, phi, delta = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (theta, phi, delta)))
    chi = a + sign * np.sqrt((a - b) * (a + b))
    if chi <= 0.0:
        raise ValidationError("the minus square root needs b != 0")
    st, ct, sd, cd = np.sin(theta), np.cos(theta), np.sin(delta), np.cos(delta)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = chi - b * st * cd
    out[..., 0, 1] = b * (ct * cd + 1j * sd) * np.exp(-1j * phi)
    out[..., 1, 0] = b * (ct * cd - 1j * sd) * np.exp(1j * phi)
    out[..., 1, 1] = chi + b * st * cd
    return out / np.sqrt(2.0 * a * chi)


def eta_partials(a, b, theta, phi, delta, branch=SqrtBranch.PLUS):
    """(d/dtheta, d/dphi, d/ddelta) of eta^(+/-)."""
    sign = int(SqrtBranch.parse(branch))
    theta, phi, delta = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (theta, phi, delta)))
    chi = a + sign * np.sqrt((a - b) * (a + b))
    pref = 1.0 / np.sqrt(2.0 * a * chi)
    st, ct, sd, cd = np.sin(theta), np.cos(theta), np.sin(delta), np.cos(delta)
    em, ep = np.exp(-1j * phi), np.exp(1j * phi)
    shape = theta.shape + (2, 2)
    d_th, d_ph, d_de = (np.zeros(shape, dtype=complex) for _ in range(3))
    d_th[..., 0, 0] = -b * ct * cd
    d_th[..., 0, 1] = -b * st * cd * em
    d_th[..., 1, 0] = -b * st * cd * ep
    d_th[..., 1, 1] = b * ct * cd
    d_ph[..., 0, 1] = -1j * b * (ct * cd + 1j * sd) * em
    d_ph[..., 1, 0] = 1j * b * (ct * cd - 1j * sd) * ep
    d_de[..., 0, 0] = b * st * sd
    d_de[..., 0, 1] = b * (-ct * sd + 1j * cd) * em
    d_de[..., 1, 0] = b * (-ct * sd - 1j * cd) * ep
    d_de[..., 1, 1] = -b * st * sd
    return pref * d_th, pref * d_ph, pref * d_de


def metric_sqrt_branches(p):
    """(eta_plus, eta_minus): the two Hermitian square roots of the default metric."""
    args = (p.a, p.b, p.theta, p.phi, p.delta)
    return eta_matrices(*args, SqrtBranch.PLUS), eta_matrices(*args, SqrtBranch.MINUS)


def mapped_hermitian_matrices(eps, gap, theta, phi, branch):
    sign = int(SqrtBranch.parse(branch))
    nr, _, _ = frame(theta, phi)
    eps = np.asarray(eps, dtype=float)
    return eps[..., None, None] * SIGMA_0 + sign * gap * pauli_dot(nr)


def mapped_hermitian(p, branch):
    """h^(+/-) = eps I +/- sqrt(a^2 - b^2) n_r . sigma."""
    return mapped_hermitian_matrices(p.epsilon, p.gap, p.theta, p.phi, branch)


def hermitian_kets(p):
    """(phi_minus, phi_plus): eigenkets of h^(+) in the same theta gauge as the PT states."""
    c, s = np.cos(0.5 * p.theta), np.sin(0.5 * p.theta)
    g = np.exp(-0.5j * p.theta)
    e = np.exp(-1j * p.phi)
    return g * np.array([-s * e, c]), g * np.array([c * e, s])


# ---------------------------------------------------------------------------
# U-ODE


def proper_generator(a, b, x, v, branch):
    """K = (1/2)[eta' eta^{-1} - h.c.] at angles x (3, n) with rates v (3, n)."""
    eta = eta_matrices(a, b, *x, branch)
    parts = eta_partials(a, b, *x, branch)
    eta_dot = sum(v[j][..., None, None] * parts[j] for j in range(3))
    m = np.swapaxes(np.linalg.solve(np.swapaxes(eta, -1, -2), np.swapaxes(eta_dot, -1, -2)), -1, -2)
    return 0.5 * (m - dagger(m))


def bloch_vectors(h):
    """Real 3-vectors of the traceless part of Hermitian 2x2 matrices."""
    return 0.5 * np.real(np.einsum("...ij,kji->...k", h, PAULI))


def track_angles(theta_raw, phi_raw, max_jump=np.pi / 2):
    """Continuous (Theta, Phi) along a sampled curve on the sphere.

    At each step both representations (Theta, Phi) and (-Theta, Phi + pi),
    shifted by multiples of 2 pi, are considered and the one closest to the
    previous sample is kept; this carries the angles smoothly through the
    poles. The azimuth at samples sitting exactly on a pole is taken from a
    neighbour. A remaining azimuth jump above ``max_jump`` raises.
    """
    th = np.array(theta_raw, dtype=float)
    ph = np.array(phi_raw, dtype=float)
    pole = np.abs(np.sin(th)) < 1e-9
    if pole.all():
        ph[:] = ph[0]
    elif pole.any():
        idx = np.where(~pole, np.arange(th.size), -1)
        idx = np.maximum.accumulate(idx)
        first = np.argmax(~pole)
        idx[idx < 0] = first
        ph = ph[idx]
    out_th, out_ph = np.empty_like(th), np.empty_like(ph)
    out_th[0], out_ph[0] = th[0], ph[0]
    two_pi = 2.0 * np.pi
    for i in range(1, th.size):
        pt, pp = out_th[i - 1], out_ph[i - 1]
        best = None
        for ct, cp in ((th[i], ph[i]), (-th[i], ph[i] + np.pi)):
            ct = ct + two_pi * np.rint((pt - ct) / two_pi)
            cp = cp + two_pi * np.rint((pp - cp) / two_pi)
            cost = abs(ct - pt) + abs(cp - pp)
            if best is None or cost < best[0]:
                best = (cost, ct, cp)
        _, out_th[i], out_ph[i] = best
        if abs(out_ph[i] - pp) > max_jump and not pole[i]:
            raise ValidationError(
                f"angle continuity lost at sample {i} (azimuth jump {abs(out_ph[i] - pp):.3f}); "
                "use finer sampling"
            )
    return out_th, out_ph


def extract_angles(h_mapped, gap, branch):
    """(Theta, Phi) of h = eps I +/- gap (sin T cos P, sin T sin P, cos T) . sigma, tracked by continuity."""
    sign = int(SqrtBranch.parse(branch))
    v = bloch_vectors(h_mapped) / (sign * gap)
    r = np.linalg.norm(v, axis=-1)
    theta = np.arccos(np.clip(v[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(v[..., 1], v[..., 0])
    return track_angles(theta, phi)


@dataclass(frozen=True, eq=False)
class ProperMappingTrace:
    times: np.ndarray
    eta: np.ndarray
    U: np.ndarray
    eta_proper: np.ndarray
    h_mapped: np.ndarray
    theta_cap: np.ndarray
    phi_cap: np.ndarray
    properness_residual: float
    unitarity_residual: float
    hermiticity_residual: float
    metric_residual: float
    certified: bool
    branch: SqrtBranch = SqrtBranch.PLUS


def solve_proper_unitary(path, p_base, branch=SqrtBranch.PLUS, U0=None, steps=None,
                         residual_tol=1e-6):
    """Integrate the U-ODE along a path with RK4 and per-step polar re-unitarization."""
    branch = SqrtBranch.parse(branch)
    u0 = np.eye(2, dtype=complex) if U0 is None else as_matrix(U0, "U0")
    if u0.shape != (2, 2) or unitarity_residual(u0) > 1e-10:
        raise ValidationError("U0 must be a 2x2 unitary matrix")
    a, b = p_base.a, p_base.b
    n = int(steps or path.samples)
    t0, t1 = path.t_span
    h = (t1 - t0) / n
    times = t0 + h * np.arange(n + 1)

    def gen(t):
        return proper_generator(a, b, path.at(t), path.velocity(t), branch)

    k_grid = gen(times)
    k_mid = gen(times[:-1] + 0.5 * h)
    maps = rk4_step_maps(k_grid[:-1], k_mid, k_grid[1:], h)
    us = np.empty((n + 1, 2, 2), dtype=complex)
    us[0] = u = u0
    for i in range(n):
        u = polar_step(maps[i] @ u)
        us[i + 1] = u

    x = path.at(times)
    eta = eta_matrices(a, b, *x, branch)
    eta_p = dagger(us) @ eta
    ham = hamiltonian_matrices(p_base.epsilon, a, b, *x)
    h_mapped = np.swapaxes(np.linalg.solve(np.swapaxes(eta_p, -1, -2),
                                           np.swapaxes(eta_p @ ham, -1, -2)), -1, -2)
    herm = float(np.max(hermitian_residual(h_mapped)))
    w = metric_matrices(a, b, *x)
    metric_res = float(np.max(np.linalg.norm(dagger(eta_p) @ eta_p - w, axis=(-2, -1))))
    unit_res = float(np.max(unitarity_residual(us)))
    prop_res = _properness_residual(path, a, b, branch, times, us, h, gen)
    theta_cap, phi_cap = extract_angles(h_mapped, p_base.gap, branch)
    certified = prop_res <= residual_tol and unit_res <= 1e-10 and herm <= 1e-8
    if not certified:
        log.warning("proper mapping not certified: properness %.2e, unitarity %.2e, hermiticity %.2e",
                    prop_res, unit_res, herm)
    return ProperMappingTrace(times, eta, us, eta_p, h_mapped, theta_cap, phi_cap, prop_res,
                              unit_res, herm, metric_res, certified, branch)


def _properness_residual(path, a, b, branch, times, us, h, gen):
    """max ||R - R^dagger||, R = eta_proper' eta_proper^{-1}, by 4th-order central differences.

    Evaluated at interior grid points with step h/10; the off-grid values of
    U come from single RK4 sub-steps of the same ODE.
    """
    if times.size < 3:
        return 0.0
    t = times[1:-1]
    u = us[1:-1]
    sigma = h / 10.0
    k0 = gen(t)
    vals = {}
    for j in (-2, -1, 1, 2):
        s = j * sigma
        step = rk4_step_maps(k0, gen(t + 0.5 * s), gen(t + s), s)
        uj = step @ u
        vals[j] = dagger(uj) @ eta_matrices(a, b, *path.at(t + s), branch)
    deriv = (vals[-2] - 8.0 * vals[-1] + 8.0 * vals[1] - vals[2]) / (12.0 * sigma)
    eta_p = dagger(u) @ eta_matrices(a, b, *path.at(t), branch)
    r = np.swapaxes(np.linalg.solve(np.swapaxes(eta_p, -1, -2), np.swapaxes(deriv, -1, -2)), -1, -2)
    return float(np.max(hermitian_residual(r)))


# ---------------------------------------------------------------------------
# closed forms for single-angle paths


def _rot(axis_matrix, angle):
    """exp(-i angle/2 * sigma) for a Pauli matrix (vectorized over angle)."""
    return expi_hermitian_2x2(-0.5 * axis_matrix, angle)


def phi_path_generator(p, branch):
    """G with U(phi) = exp(-i phi sigma3/2) exp(i G phi) U0 (constant Hermitian 2x2)."""
    zeta = _zeta(p, branch)
    st, ct, sd = np.sin(p.theta), np.cos(p.theta), np.sin(p.delta)
    c = np.array([[-ct, -1j * st * sd], [1j * st * sd, ct]])
    m = _rot(SIGMA_2, p.theta) @ _rot(SIGMA_3, -p.delta) @ c @ _rot(SIGMA_3, p.delta) @ _rot(SIGMA_2, -p.theta)
    return zeta * m + 0.5 * SIGMA_3


def theta_path_generator(p, branch):
    """G with U(theta) = e^{-i phi sigma3/2} e^{-i theta sigma2/2} exp(i G theta) U0."""
    zeta = _zeta(p, branch)
    r = _rot(SIGMA_3, -p.delta)
    return -zeta * np.cos(p.delta) * (r @ SIGMA_2 @ dagger(r)) + 0.5 * SIGMA_2


def analytic_single_angle_U(p, variable, value, branch=SqrtBranch.PLUS, U0=None):
    """Closed-form solution of the U-ODE when a single angle moves from 0 to ``value``.

    ``value`` may be an array, giving a stack of matrices. For ``theta`` the
    closed form evaluates to exp(-i phi sigma3/2) U0 at theta = 0.
    """
    u0 = np.eye(2, dtype=complex) if U0 is None else as_matrix(U0, "U0")
    if unitarity_residual(u0) > 1e-10:
        raise ValidationError("U0 must be unitary")
    value = np.asarray(value, dtype=float)
    if variable == "delta":
        nr, _, _ = frame(p.theta, p.phi)
        out = expi_hermitian_2x2(_zeta(p, branch) * pauli_dot(nr), value)
    elif variable == "theta":
        g = theta_path_generator(p, branch)
        out = _rot(SIGMA_3, p.phi) @ _rot(SIGMA_2, value) @ expi_hermitian_2x2(g, value)
    elif variable == "phi":
        g = phi_path_generator(p, branch)
        out = _rot(SIGMA_3, value) @ expi_hermitian_2x2(g, value)
    else:
        raise ValidationError(
            f"no closed form for variable {variable!r}; only delta, theta or phi alone. "
            "Use solve_proper_unitary for general paths"
        )
    return out @ u0


def single_angle_path(p, variable, value, samples=10_000):
    """Path moving one angle from 0 to ``value`` with the others fixed at p (unit duration)."""
    base = p.angles.copy()
    base[["theta", "phi", "delta"].index(variable)] = 0.0
    return single_angle(variable, 0.0, float(value), base=tuple(base), duration=1.0, samples=samples)


def _closed_form_raw(p, variable, values, branch):
    zeta = _zeta(p, branch)
    th = p.theta
    if variable == "phi_at_delta_half_pi":
        if not np.isclose(np.cos(p.delta), 0.0, atol=1e-12) or np.sin(p.delta) < 0:
            raise ValidationError(f"phi_at_delta_half_pi requires delta = pi/2, got {p.delta}")
        return np.full_like(values, th), (1.0 - 2.0 * zeta) * values
    if variable == "phi_at_delta0":
        if not np.isclose(np.sin(p.delta), 0.0, atol=1e-12) or np.cos(p.delta) < 0:
            raise ValidationError(f"phi_at_delta0 requires delta = 0, got {p.delta}")
        xi = np.sqrt(1.0 + 4.0 * zeta * (zeta - 1.0) * np.cos(th) ** 2)
        one_minus_cos = 1.0 - np.cos(xi * values)
        cos_t = np.cos(th) * (1.0 - 2.0 * zeta / xi ** 2 * np.sin(th) ** 2 * one_minus_cos)
        s_e = np.sin(th) * (1.0 - (1.0 - 2.0 * zeta * np.cos(th) ** 2) * one_minus_cos / xi ** 2
                            - 1j * np.sin(xi * values) / xi)
        return np.arccos(np.clip(cos_t, -1.0, 1.0)), -np.angle(s_e)
    if variable == "theta":
        rate = np.sqrt(1.0 - 4.0 * zeta * (1.0 - zeta) * np.cos(p.delta) ** 2)
        d = 1.0 - zeta * (1.0 + np.exp(2j * p.delta))
        phase = -np.angle(d) if abs(d) > 0 else 0.0
        return rate * values, np.full_like(values, phase)
    raise ValidationError(
        f"variable must be phi_at_delta0, phi_at_delta_half_pi or theta, got {variable!r}"
    )


def mapped_angles_closed_form(p, variable, value, branch=SqrtBranch.PLUS, samples=2001):
    """(Theta, Phi) of the mapped Hamiltonian from the closed forms (U0 = I).

    ``value`` is the end value of the moving angle (which starts at 0). An
    array of increasing values returns the tracked series; a scalar is
    tracked along ``samples`` points and the end value returned.
    """
    scalar = np.ndim(value) == 0
    values = np.linspace(0.0, float(value), samples) if scalar else np.asarray(value, dtype=float)
    theta_raw, phi_raw = _closed_form_raw(p, variable, values, branch)
    if variable == "theta":
        # the raw form is already continuous (Theta grows linearly, Phi constant)
        theta_c, phi_c = theta_raw, phi_raw
    else:
        theta_c, phi_c = track_angles(theta_raw, phi_raw)
    if scalar:
        return float(theta_c[-1]), float(phi_c[-1])
    return theta_c, phi_c


def phi_path_mapped(p, phis, branch=SqrtBranch.PLUS, U0=None):
    """Mapped Hamiltonians U^dagger h^(+/-) U along a phi-only path (analytic U)."""
    u = analytic_single_angle_U(p, "phi", phis, branch, U0)
    h = mapped_hermitian_matrices(np.full(np.shape(phis), p.epsilon), p.gap, p.theta, phis, branch)
    return dagger(u) @ h @ u


# ---------------------------------------------------------------------------
# figures and periods


@dataclass(frozen=True, eq=False)
class Figure1Curve:
    phi: np.ndarray
    Phi: np.ndarray
    Theta: np.ndarray
    crossing: Optional[float]
    monotone: bool
    params: TwoLevelParams


def _phi_series(p, phis, branch, method, steps):
    if method == "analytic":
        h = phi_path_mapped(p, phis, branch)
        return extract_angles(h, p.gap, branch)
    if method == "ode":
        path = single_angle("phi", 0.0, float(phis[-1]), base=(p.theta, 0.0, p.delta),
                            duration=1.0, samples=len(phis) - 1)
        trace = solve_proper_unitary(path, p, branch, steps=steps or len(phis) - 1)
        return trace.theta_cap, trace.phi_cap
    raise ValidationError(f"method must be 'analytic' or 'ode', got {method!r}")


def figure1_curve(zeta_plus, theta, delta, phi_samples=2001, phi_end=1.25 * np.pi, a=1.0,
                  epsilon=0.0, method="analytic", target=2.0 * np.pi):
    """Phi(phi) of the mapped Hamiltonian along a phi-only path, with the first crossing of ``target``."""
    if phi_samples < 2:
        raise ValidationError("phi_samples must be at least 2")
    p = params_for_zeta(zeta_plus, a=a, epsilon=epsilon, theta=theta, delta=delta)
    phis = np.linspace(0.0, phi_end, int(phi_samples))
    Theta, Phi = _phi_series(p, phis, SqrtBranch.PLUS, method, None)
    crossing = _first_crossing(p, phis, Phi, target)
    monotone = bool(np.all(np.diff(Phi) >= -1e-12))
    return Figure1Curve(phis, Phi, Theta, crossing, monotone, p)


def _first_crossing(p, phis, Phi, target):
    above = np.nonzero(Phi >= target)[0]
    if above.size == 0 or above[0] == 0:
        return None
    i = above[0]
    lo, hi = phis[i - 1], phis[i]
    ref = Phi[i - 1]

    def f(x):
        h = phi_path_mapped(p, np.array([x]))
        v = bloch_vectors(h)[0]
        raw = np.arctan2(v[1], v[0])
        return raw + 2.0 * np.pi * np.rint((ref - raw) / (2.0 * np.pi)) - target

    return float(brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


@dataclass(frozen=True, eq=False)
class Figure2Paths:
    phi: np.ndarray
    theta: np.ndarray
    Theta: np.ndarray
    Phi: np.ndarray
    source_xyz: np.ndarray
    mapped_xyz: np.ndarray
    closure: float
    phi_end: float


def figure2_paths(zeta_plus, theta, delta, samples=2001, a=1.0, epsilon=0.0, phi_end=None):
    """Source (theta, phi) path and its mapped (Theta, Phi) path, phi from 0 to the Phi = 2 pi crossing."""
    if phi_end is None:
        curve = figure1_curve(zeta_plus, theta, delta, a=a, epsilon=epsilon)
        if curve.crossing is None:
            raise ValidationError("mapped azimuth never reaches 2 pi on [0, 1.25 pi]; pass phi_end")
        phi_end = curve.crossing
    p = params_for_zeta(zeta_plus, a=a, epsilon=epsilon, theta=theta, delta=delta)
    phis = np.linspace(0.0, phi_end, int(samples))
    Theta, Phi = extract_angles(phi_path_mapped(p, phis), p.gap, SqrtBranch.PLUS)
    thetas = np.full_like(phis, theta)
    src = sphere_points(thetas, phis).T
    dst = sphere_points(Theta, Phi).T
    closure = float(np.linalg.norm(dst[-1] - dst[0]))
    return Figure2Paths(phis, thetas, Theta, Phi, src, dst, closure, float(phi_end))


def mapped_period(p, branch=SqrtBranch.PLUS, periods=3, samples=1024, coarse=600):
    """Period in phi of the mapped Hamiltonian, from the autocorrelation of its Bloch vector.

    The window covers ``periods`` source periods of 2 pi, which holds at
    least as many mapped periods since the mapped period is never longer.
    """
    window = periods * 2.0 * np.pi
    grid = np.linspace(0.0, window, samples, endpoint=False)

    def unit(phis):
        v = bloch_vectors(phi_path_mapped(p, phis, branch))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    base = unit(grid)

    def corr(tau):
        return float(np.mean(np.sum(base * unit(grid + tau), axis=-1)))

    taus = np.linspace(0.0, 2.0 * np.pi * 1.05, coarse)
    c = np.array([corr(t) for t in taus])
    peaks = [i for i in range(1, coarse - 1) if c[i] >= c[i - 1] and c[i] >= c[i + 1] and c[i] > c.min()]
    if not peaks:
        raise ValidationError("no period found in the autocorrelation window")
    i = peaks[0]
    res = minimize_scalar(lambda t: -corr(t), bounds=(taus[i - 1], taus[i + 1]), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


# ---------------------------------------------------------------------------
# eigenstates under the delta-path mapping


class EigenPhases(NamedTuple):
    minus: complex
    plus: complex


def map_eigenstate_delta(p, delta_end):
    """Phase factors picked up by the mapped eigenstates after a delta-only path from 0 to delta_end.

    eta_proper psi_(+/-) = e^{-/+ i zeta^(+) delta} phi_(+/-) with U0 = I, branch plus.
    """
    zeta = p.scales.zeta_plus
    return EigenPhases(complex(np.exp(1j * zeta * delta_end)), complex(np.exp(-1j * zeta * delta_end)))


def eigenstate_mapping_residual(p, delta_end):
    """max |eta_proper psi - phase * phi| over both bands at the end of a delta path."""
    q = p.replace(delta=float(delta_end))
    u = analytic_single_angle_U(q, "delta", delta_end, SqrtBranch.PLUS)
    eta_p = dagger(u) @ eta_matrices(q.a, q.b, q.theta, q.phi, q.delta, SqrtBranch.PLUS)
    psi_m, psi_p = eigenstate_arrays(q.a, q.b, q.theta, q.phi, q.delta)
    phi_m, phi_p = hermitian_kets(q)
    ph = map_eigenstate_delta(p, delta_end)
    return float(max(np.max(np.abs(eta_p @ psi_m - ph.minus * phi_m)),
                     np.max(np.abs(eta_p @ psi_p - ph.plus * phi_p))))
