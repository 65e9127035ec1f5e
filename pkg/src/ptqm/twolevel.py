"""The PT-symmetric two-level family.

H = eps I + (a n_r + i b sin(delta) n_theta + i b cos(delta) n_phi) . sigma
W = I + (b/a)(cos(delta) n_theta - sin(delta) n_phi) . sigma

with the spherical frame n_r, n_theta, n_phi at (theta, phi). Everything is
restricted to the unbroken regime a > |b|. Bands are labelled by sign:
+1 for E_+ = eps + sqrt(a^2 - b^2) and -1 for E_-.
"""

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import EvolutionSpec, MetricOperator
from .errors import NumericalError, ValidationError
from .matops import SIGMA_0, dagger, pauli_dot
from .paths import SpherePath, sphere_points

ANGLE_NAMES = ("theta", "phi", "delta")
PARAM_NAMES = ("epsilon", "a", "b", "theta", "phi", "delta")


def band_sign(band):
    """Normalize a band label ('+', 'plus', 1, '-', 'minus', -1) to +1 or -1."""
    table = {"+": 1, "plus": 1, "1": 1, "+1": 1, "-": -1, "minus": -1, "-1": -1}
    key = str(band).strip().lower()
    if key not in table:
        raise ValidationError(f"band must be '+' or '-', got {band!r}")
    return table[key]


@dataclass(frozen=True)
class DerivedScales:
    gap: float
    beta: float
    chi_plus: float
    chi_minus: float
    zeta_plus: float
    zeta_minus: float
    xi: float
    a_over_gap: float


@dataclass(frozen=True)
class TwoLevelParams:
    """(epsilon, a, b, theta, phi, delta) with a > 0 and a^2 > b^2."""

    epsilon: float = 0.0
    a: float = 1.0
    b: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ValidationError(f"{name} must be a real number, got {value!r}") from None
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.a <= 0:
            raise ValidationError(f"a must be positive, got a = {self.a}")
        if self.a ** 2 <= self.b ** 2:
            raise ValidationError(
                f"a^2 > b^2 required (unbroken regime), got a = {self.a}, b = {self.b}"
            )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def angles(self):
        return np.array([self.theta, self.phi, self.delta])

    @property
    def gap(self):
        return float(np.sqrt((self.a - self.b) * (self.a + self.b)))

    @property
    def scales(self):
        g = self.gap
        k = self.a / g
        zp, zm = 0.5 * (1.0 - k), 0.5 * (1.0 + k)
        return DerivedScales(
            gap=g,
            beta=self.b / (self.a + g),
            chi_plus=self.a + g,
            chi_minus=self.a - g,
            zeta_plus=zp,
            zeta_minus=zm,
            xi=float(np.sqrt(1.0 + 4.0 * zp * (zp - 1.0) * np.cos(self.theta) ** 2)),
            a_over_gap=k,
        )

    def zeta(self, branch):
        s = self.scales
        return s.zeta_plus if band_sign(branch) > 0 else s.zeta_minus


def params_for_zeta(zeta_plus, a=1.0, epsilon=0.0, theta=0.0, phi=0.0, delta=0.0):
    """Parameters with a/sqrt(a^2 - b^2) = 1 - 2 zeta_plus (requires zeta_plus <= 0)."""
    if not zeta_plus <= 0:
        raise ValidationError(f"zeta_plus must be <= 0 in the unbroken regime, got {zeta_plus}")
    k = 1.0 - 2.0 * zeta_plus
    g = a / k
    b = np.sqrt((a - g) * (a + g))
    return TwoLevelParams(epsilon, a, b, theta, phi, delta)


@dataclass(frozen=True)
class MetricFamilyParams:
    """mu > 0 and |nu| < sqrt(a^2 - b^2). ``mu=None`` means 1/a."""

    mu: float = None
    nu: float = 0.0

    def resolve(self, p):
        mu = 1.0 / p.a if self.mu is None else float(self.mu)
        nu = float(self.nu)
        if not mu > 0:
            raise ValidationError(f"mu must be positive, got {mu}")
        if abs(nu) >= p.gap:
            raise ValidationError(
                f"|nu| must be below sqrt(a^2 - b^2) = {p.gap:.6g} for positivity, got nu = {nu}"
            )
        return mu, nu


# ---------------------------------------------------------------------------
# vectorized kernels over arrays of angles


def frame(theta, phi):
    """Spherical unit vectors n_r, n_theta, n_phi, each of shape (..., 3)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    nr = np.stack([st * cp, st * sp, ct], axis=-1)
    nth = np.stack([ct * cp, ct * sp, -st], axis=-1)
    nph = np.stack([-sp, cp, np.zeros_like(st)], axis=-1)
    return nr, nth, nph


def _bc(*arrays):
    return np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in arrays))


def hamiltonian_matrices(eps, a, b, theta, phi, delta):
    eps, theta, phi, delta = _bc(eps, theta, phi, delta)
    nr, nth, nph = frame(theta, phi)
    sd, cd = np.sin(delta)[..., None], np.cos(delta)[..., None]
    v = a * nr + 1j * b * sd * nth + 1j * b * cd * nph
    return eps[..., None, None] * SIGMA_0 + pauli_dot(v)


def metric_matrices(a, b, theta, phi, delta, mu=None, nu=0.0):
    theta, phi, delta = _bc(theta, phi, delta)
    nr, nth, nph = frame(theta, phi)
    sd, cd = np.sin(delta)[..., None], np.cos(delta)[..., None]
    mu = 1.0 / a if mu is None else mu
    v = nu * nr + b * cd * nth - b * sd * nph
    return mu * (a * SIGMA_0 + pauli_dot(v))


def _frame_partials(theta, phi):
    """d/dtheta and d/dphi of (n_r, n_theta, n_phi)."""
    nr, nth, nph = frame(theta, phi)
    st, ct = np.sin(theta)[..., None], np.cos(theta)[..., None]
    d_theta = (nth, -nr, np.zeros_like(nph))
    d_phi = (st * nph, ct * nph, -(st * nr + ct * nth))
    return (nr, nth, nph), d_theta, d_phi


def hamiltonian_partials(a, b, theta, phi, delta):
    """(dH/dtheta, dH/dphi, dH/ddelta) as stacks (..., 2, 2)."""
    theta, phi, delta = _bc(theta, phi, delta)
    (nr, nth, nph), dth, dph = _frame_partials(theta, phi)
    sd, cd = np.sin(delta)[..., None], np.cos(delta)[..., None]

    def vec(fr):
        r, t, p = fr
        return a * r + 1j * b * sd * t + 1j * b * cd * p

    v_delta = 1j * b * cd * nth - 1j * b * sd * nph
    return pauli_dot(vec(dth)), pauli_dot(vec(dph)), pauli_dot(v_delta)


def metric_partials(a, b, theta, phi, delta):
    """(dW/dtheta, dW/dphi, dW/ddelta) for the default metric."""
    theta, phi, delta = _bc(theta, phi, delta)
    (nr, nth, nph), dth, dph = _frame_partials(theta, phi)
    sd, cd = np.sin(delta)[..., None], np.cos(delta)[..., None]
    r = b / a

    def vec(fr):
        _, t, p = fr
        return r * (cd * t - sd * p)

    v_delta = r * (-sd * nth - cd * nph)
    return pauli_dot(vec(dth)), pauli_dot(vec(dph)), pauli_dot(v_delta)


def eigenstate_arrays(a, b, theta, phi, delta):
    """Gauge-fixed W-normalized eigenstates (psi_minus, psi_plus), each (..., 2)."""
    theta, phi, delta = _bc(theta, phi, delta)
    g = np.sqrt((a - b) * (a + b))
    beta = b / (a + g)
    norm = np.exp(-0.5j * theta) * np.sqrt((a * a + a * g) / (2.0 * g * g))
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    em, ep = np.exp(-1j * delta), np.exp(1j * delta)
    eph = np.exp(-1j * phi)
    plus = np.stack([(c + beta * em * s) * eph, -beta * em * c + s], axis=-1)
    minus = np.stack([-(beta * ep * c + s) * eph, c - beta * ep * s], axis=-1)
    return norm[..., None] * minus, norm[..., None] * plus


def eigenstate_partials(a, b, theta, phi, delta):
    """Analytic angle derivatives of the gauge-fixed eigenstates.

    Returns two tuples (d_theta, d_phi, d_delta) for psi_minus and psi_plus.
    """
    theta, phi, delta = _bc(theta, phi, delta)
    g = np.sqrt((a - b) * (a + b))
    beta = b / (a + g)
    norm = (np.exp(-0.5j * theta) * np.sqrt((a * a + a * g) / (2.0 * g * g)))[..., None]
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    em, ep = np.exp(-1j * delta), np.exp(1j * delta)
    eph = np.exp(-1j * phi)

    up = np.stack([(c + beta * em * s) * eph, -beta * em * c + s], axis=-1)
    um = np.stack([-(beta * ep * c + s) * eph, c - beta * ep * s], axis=-1)
    up_th = np.stack([(-0.5 * s + 0.5 * beta * em * c) * eph, 0.5 * beta * em * s + 0.5 * c], axis=-1)
    um_th = np.stack([-(-0.5 * beta * ep * s + 0.5 * c) * eph, -0.5 * s - 0.5 * beta * ep * c], axis=-1)
    zero = np.zeros_like(c)
    up_ph = np.stack([-1j * up[..., 0], zero], axis=-1)
    um_ph = np.stack([-1j * um[..., 0], zero], axis=-1)
    up_de = np.stack([-1j * beta * em * s * eph, 1j * beta * em * c], axis=-1)
    um_de = np.stack([-1j * beta * ep * c * eph, -1j * beta * ep * s], axis=-1)

    def pack(u, u_th, u_ph, u_de):
        return (norm * (u_th - 0.5j * u), norm * u_ph, norm * u_de)

    return pack(um, um_th, um_ph, um_de), pack(up, up_th, up_ph, up_de)


def connection_arrays(a_over_gap, theta, sign):
    """(F^theta, F^phi, F^delta) for one band, broadcast over theta."""
    theta = np.asarray(theta, dtype=float)
    f_th = np.full_like(theta, 0.5)
    f_ph = 0.5 * (1.0 + sign * a_over_gap * np.cos(theta))
    f_de = np.full_like(theta, sign * 0.5 * (1.0 - a_over_gap))
    return f_th, f_ph, f_de


# ---------------------------------------------------------------------------
# single-point API


def build_hamiltonian(p):
    return hamiltonian_matrices(p.epsilon, p.a, p.b, p.theta, p.phi, p.delta)


def build_metric(p, fam=None):
    """Metric of the mu-nu family; the default (mu = 1/a, nu = 0) is the simple choice."""
    mu, nu = (fam or MetricFamilyParams()).resolve(p)
    return MetricOperator(metric_matrices(p.a, p.b, p.theta, p.phi, p.delta, mu, nu))


def metric_rate(p, rates):
    """dW/dt for angle rates (dtheta, dphi, ddelta)."""
    parts = metric_partials(p.a, p.b, p.theta, p.phi, p.delta)
    return sum(r * d for r, d in zip(rates, parts))


def hamiltonian_rate(p, rates):
    parts = hamiltonian_partials(p.a, p.b, p.theta, p.phi, p.delta)
    return sum(r * d for r, d in zip(rates, parts))


class Eigensystem(NamedTuple):
    E_minus: float
    E_plus: float
    psi_minus: np.ndarray
    psi_plus: np.ndarray


def eigensystem(p):
    """Energies eps -/+ sqrt(a^2 - b^2) and the gauge-fixed eigenstates."""
    g = p.gap
    psi_m, psi_p = eigenstate_arrays(p.a, p.b, p.theta, p.phi, p.delta)
    return Eigensystem(p.epsilon - g, p.epsilon + g, psi_m, psi_p)


def family_norms(p, fam=None):
    """(N_minus, N_plus): <psi|W|psi> of the gauge-fixed states under a family metric."""
    mu, nu = (fam or MetricFamilyParams()).resolve(p)
    g = p.gap
    n2 = (p.a ** 2 + p.a * g) / (2.0 * g * g)
    common = 2.0 * mu * n2 * g / (g + p.a)
    return common * (g - nu), common * (g + nu)


@dataclass(frozen=True)
class ConnectionComponents:
    f_phi_plus: float
    f_phi_minus: float
    f_theta_plus: float
    f_theta_minus: float
    f_delta_plus: float
    f_delta_minus: float

    def band(self, band):
        """(F^theta, F^phi, F^delta) for one band."""
        if band_sign(band) > 0:
            return self.f_theta_plus, self.f_phi_plus, self.f_delta_plus
        return self.f_theta_minus, self.f_phi_minus, self.f_delta_minus


def connection_components(p):
    k = p.scales.a_over_gap
    ct = np.cos(p.theta)
    return ConnectionComponents(
        f_phi_plus=0.5 * (1.0 + k * ct),
        f_phi_minus=0.5 * (1.0 - k * ct),
        f_theta_plus=0.5,
        f_theta_minus=0.5,
        f_delta_plus=0.5 * (1.0 - k),
        f_delta_minus=-0.5 * (1.0 - k),
    )


def full_integral_G(p, band):
    """G = theta/2 +/- (1 - a/sqrt(a^2 - b^2)) delta / 2, a potential for F^theta, F^delta."""
    s = band_sign(band)
    return 0.5 * p.theta + s * 0.5 * (1.0 - p.scales.a_over_gap) * p.delta


# ---------------------------------------------------------------------------
# path integrals


def _midpoints(path):
    t = path.times
    tm = 0.5 * (t[1:] + t[:-1])
    return tm, np.diff(t), path.at(tm), path.velocity(tm)


def _connection_integrand(p_base, band, x, xdot):
    s = band_sign(band)
    f_th, f_ph, f_de = connection_arrays(p_base.scales.a_over_gap, x[0], s)
    return f_th * xdot[0] + f_ph * xdot[1] + f_de * xdot[2]


def defining_integrand(p_base, band, x, xdot, fd_step=1e-5):
    """i[<psi|W dpsi/dt> + (1/2)<psi|dW/dt|psi>] with derivatives by central differences.

    ``x`` and ``xdot`` are (3, n) arrays of angles and their rates.
    """
    s = band_sign(band)
    a, b = p_base.a, p_base.b
    speed = np.max(np.abs(xdot), axis=0)
    h = np.where(speed > 0, fd_step / np.where(speed > 0, speed, 1.0), 0.0)
    xp, xm = x + h * xdot, x - h * xdot
    idx = 1 if s > 0 else 0
    psi = eigenstate_arrays(a, b, *x)[idx]
    dpsi = (eigenstate_arrays(a, b, *xp)[idx] - eigenstate_arrays(a, b, *xm)[idx])
    dw = metric_matrices(a, b, *xp) - metric_matrices(a, b, *xm)
    denom = np.where(h > 0, 2.0 * h, 1.0)
    dpsi = dpsi / denom[..., None]
    dw = dw / denom[..., None, None]
    w = metric_matrices(a, b, *x)
    term1 = np.einsum("ni,nij,nj->n", psi.conj(), w, dpsi)
    term2 = 0.5 * np.einsum("ni,nij,nj->n", psi.conj(), dw, psi)
    return 1j * (term1 + term2)


def defining_integral(path, p_base, band, fd_step=1e-5):
    """Complex value of the geometric-phase integral from its definition (midpoint rule)."""
    _, dt, x, xdot = _midpoints(path)
    return complex(np.sum(defining_integrand(p_base, band, x, xdot, fd_step) * dt))


def geometric_phase_integral(path, p_base, band, check=True, tol=1e-6, imag_tol=1e-8):
    """Line integral of F^theta dtheta + F^phi dphi + F^delta ddelta along the path.

    With ``check`` the defining integral is evaluated on the same grid by
    finite differences; disagreement beyond ``tol`` or an imaginary part
    beyond ``imag_tol`` raises NumericalError.
    """
    _, dt, x, xdot = _midpoints(path)
    value = float(np.sum(_connection_integrand(p_base, band, x, xdot) * dt))
    if check:
        ref = complex(np.sum(defining_integrand(p_base, band, x, xdot) * dt))
        if abs(ref.imag) > imag_tol or abs(ref.real - value) > tol:
            raise NumericalError(
                f"geometric phase cross-check failed: closed form {value:.12g}, "
                f"defining integral {ref:.12g}",
                residual=max(abs(ref.imag), abs(ref.real - value)),
            )
    return value


# ---------------------------------------------------------------------------
# closed loops on the sphere


@dataclass(frozen=True)
class BerryPhaseResult:
    line_integral: float
    flux_integral: float
    encloses_pole: bool
    solid_angle: float
    encloses_south_pole: bool = False


def _signed_fan_area(xyz):
    """Sum of signed spherical-triangle areas (S, P_k, P_k+1) over a closed polygon."""
    south = np.array([0.0, 0.0, -1.0])
    p, q = xyz[:, :-1], xyz[:, 1:]
    triple = south @ np.cross(p.T, q.T).T
    denom = 1.0 + south @ p + south @ q + np.sum(p * q, axis=0)
    return float(np.sum(2.0 * np.arctan2(triple, denom)))


def _stereographic(xyz):
    """Project from the coordinate axis direction farthest from the loop."""
    axes = np.vstack([np.eye(3), -np.eye(3)])
    pole = axes[np.argmin(np.max(axes @ xyz, axis=1))]
    basis = np.linalg.svd(pole[None, :])[2][1:]
    scale = 1.0 / (1.0 - pole @ xyz)
    return (basis @ xyz * scale).T


def is_simple_loop(xyz):
    from shapely.geometry import LinearRing

    return bool(LinearRing(_stereographic(xyz[:, :-1])).is_simple)


def loop_geometry(loop):
    """(solid angle to the left, north enclosed, south enclosed, theta, phi samples)."""
    _, x = loop.sample()
    if not loop.closed:
        raise ValidationError("loop must be closed (end point equal to start point)")
    if np.ptp(x[2]) > 1e-12:
        raise ValidationError("loop must keep delta fixed")
    if np.any((np.abs(np.sin(x[0])) < 1e-12) & (np.cos(x[0]) > 0)):
        raise ValidationError("loop samples must avoid theta = 0")
    xyz = sphere_points(x[0], x[1])
    if not is_simple_loop(xyz):
        raise ValidationError("loop is self-intersecting; solid angle undefined")
    fan = _signed_fan_area(xyz)
    north = fan < 0.0
    turns = int(np.rint((np.unwrap(x[1])[-1] - x[1][0]) / (2.0 * np.pi)))
    south = int(north) - turns
    if south not in (0, 1):
        raise ValidationError(f"inconsistent pole winding ({turns} turns); loop is not simple")
    omega = fan % (4.0 * np.pi)
    return omega, bool(north), bool(south)


def flux_formula(p_base, band, solid_angle, north, south=False):
    """Surface form: -/+ (k/2) Omega plus string terms for each enclosed pole."""
    s = band_sign(band)
    k = p_base.scales.a_over_gap
    out = -s * 0.5 * k * solid_angle
    if north:
        out += (1.0 + s * k) * np.pi
    if south:
        out -= (1.0 - s * k) * np.pi
    return out


def berry_phase_sphere(loop, p_base, band, tol=1e-6):
    """Berry phase of a closed (theta, phi) loop by line integral and by flux.

    Orientation is taken from the loop itself: the solid angle is that of
    the region on the left of the direction of motion.
    """
    omega, north, south = loop_geometry(loop)
    line = geometric_phase_integral(loop, p_base, band, check=False)
    flux = flux_formula(p_base, band, omega, north, south)
    if abs(line - flux) > tol:
        raise NumericalError(
            f"line integral {line:.12g} and flux form {flux:.12g} disagree; "
            "increase the number of samples",
            residual=abs(line - flux),
        )
    return BerryPhaseResult(line, flux, north, omega, south)


@dataclass(frozen=True)
class MonopoleField:
    field: np.ndarray
    strength: float
    string_coefficient: float


def monopole_field(p_base, position, band):
    """Smooth monopole part of the curvature field at (r, theta, phi); e = hbar = 1."""
    r, theta, phi = (float(v) for v in position)
    if not r > 0:
        raise ValidationError(f"r must be positive, got {r}")
    if np.isclose(np.cos(theta), 1.0, rtol=0, atol=1e-14):
        raise ValidationError("theta = 0 lies on the string; field not evaluated there")
    s = band_sign(band)
    k = p_base.scales.a_over_gap
    strength = -s * 0.5 * k
    rhat = sphere_points(theta, phi)
    return MonopoleField(strength * rhat / r ** 2, strength, np.pi * (1.0 + s * k))


def curvature_from_connection(p_base, band, theta, phi=0.0, h=1e-4):
    """Radial curvature (1/sin theta)(dF^phi/dtheta - dF^theta/dphi) by central differences."""
    def comps(th, ph):
        return connection_components(p_base.replace(theta=th, phi=ph)).band(band)

    dfphi = (comps(theta + h, phi)[1] - comps(theta - h, phi)[1]) / (2 * h)
    dfth = (comps(theta, phi + h)[0] - comps(theta, phi - h)[0]) / (2 * h)
    return (dfphi - dfth) / np.sin(theta)


# ---------------------------------------------------------------------------
# dynamics


def evolution_spec(path, p_base, steps=None, **kw):
    """EvolutionSpec for H(t), W(t) with analytic dW/dt along a sphere path."""
    a, b, eps = p_base.a, p_base.b, p_base.epsilon

    def ham(t):
        return hamiltonian_matrices(eps, a, b, *path.at(t))

    def met(t):
        return metric_matrices(a, b, *path.at(t))

    def met_rate(t):
        x, v = path.at(t), path.velocity(t)
        parts = metric_partials(a, b, *x)
        return sum(v[j][..., None, None] * parts[j] for j in range(3))

    return EvolutionSpec(ham, met, path.t_span, steps or path.samples, met_rate,
                         vectorized=True, **kw)


def _coupling_matrices(p_base, x, v):
    """Diagonal terms D_m, off-diagonal brackets C_mn and band energies.

    Index 0 is the minus band, index 1 the plus band.
    """
    a, b = p_base.a, p_base.b
    psi = np.stack(eigenstate_arrays(a, b, *x), axis=-1)  # (n, 2, band)
    parts = eigenstate_partials(a, b, *x)
    dpsi = np.stack([sum(v[j][..., None] * parts[m][j] for j in range(3)) for m in range(2)], axis=-1)
    w = metric_matrices(a, b, *x)
    hp = hamiltonian_partials(a, b, *x)
    wp = metric_partials(a, b, *x)
    hdot = sum(v[j][..., None, None] * hp[j] for j in range(3))
    wdot = sum(v[j][..., None, None] * wp[j] for j in range(3))
    bra = dagger(psi)
    g = p_base.gap
    energies = np.array([-g, g])
    diag = bra @ w @ dpsi + 0.5 * (bra @ wdot @ psi)
    off = bra @ w @ hdot @ psi
    denom = energies[None, :] - energies[:, None]
    np.fill_diagonal(denom, 1.0)
    coup = off / denom + 0.5 * (bra @ wdot @ psi)
    np.einsum("...ii->...i", coup)[...] = 0.0
    return diag, coup, energies


@dataclass(frozen=True, eq=False)
class CoefficientTrace:
    """c_n(t) in the expansion Psi = sum_n c_n e^{i alpha_n} psi_n; column 0 minus, 1 plus."""

    times: np.ndarray
    coeffs: np.ndarray
    dynamical_phases: np.ndarray

    @property
    def c_minus(self):
        return self.coeffs[:, 0]

    @property
    def c_plus(self):
        return self.coeffs[:, 1]

    def states(self, path, p_base):
        """Re-assemble Psi(t) = sum_n c_n e^{i alpha_n} psi_n on the trace times."""
        psi = np.stack(eigenstate_arrays(p_base.a, p_base.b, *path.at(self.times)), axis=-1)
        amp = self.coeffs * np.exp(1j * self.dynamical_phases)
        return np.einsum("tib,tb->ti", psi, amp)


def coefficient_dynamics(path, p_base, initial_coeffs, steps=None):
    """Integrate the exact coupled equations for the adiabatic-basis coefficients.

    dc_m/dt = -c_m D_m - sum_{n != m} c_n e^{i(alpha_n - alpha_m)} C_mn, with
    D_m = <psi_m|W dpsi_m/dt> + (1/2)<psi_m|dW/dt|psi_m> and
    C_mn = <psi_m|W dH/dt|psi_n>/(E_n - E_m) + (1/2)<psi_m|dW/dt|psi_n>.
    ``initial_coeffs`` is (c_minus, c_plus). Classical RK4 on a uniform grid.
    """
    from .core import rk4_step_maps

    c0 = np.asarray(initial_coeffs, dtype=complex)
    if c0.shape != (2,):
        raise ValidationError(f"initial_coeffs must be a pair (c_minus, c_plus), got shape {c0.shape}")
    if 2.0 * p_base.gap < 1e-12:
        raise ValidationError("spectrum is degenerate; adiabatic expansion undefined")
    n = steps or path.samples
    t0, t1 = path.t_span
    h = (t1 - t0) / n
    times = t0 + h * np.arange(n + 1)
    energies = np.array([-p_base.gap, p_base.gap]) + p_base.epsilon

    eye = np.eye(2, dtype=bool)

    def gen(t):
        diag, coup, _ = _coupling_matrices(p_base, path.at(t), path.velocity(t))
        alpha = -np.outer(t - t0, energies)
        phase = np.exp(1j * (alpha[:, None, :] - alpha[:, :, None]))
        d = np.einsum("...ii->...i", diag)
        return np.where(eye, -d[..., None], -coup * phase)

    coeffs = np.empty((n + 1, 2), dtype=complex)
    coeffs[0] = c0
    c = c0.copy()
    chunk = 200_000
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        grid = times[lo:hi + 1]
        bg = gen(grid)
        bm = gen(grid[:-1] + 0.5 * h)
        maps = rk4_step_maps(bg[:-1], bm, bg[1:], h)
        for k in range(hi - lo):
            c = maps[k] @ c
            coeffs[lo + k + 1] = c
    alpha = -np.outer(times - t0, energies)
    return CoefficientTrace(times, coeffs, alpha)


def offdiag_identities_residual(p, direction, step=1e-5):
    """Residuals of the adiabatic-derivative identities along a parameter direction.

    ``direction`` is a 6-vector over (epsilon, a, b, theta, phi, delta),
    normalized internally. Returns (offdiag_residual, diag_residual) where
    offdiag compares <psi_m|W dpsi_n> with <psi_m|W dH|psi_n>/(E_n - E_m)
    and diag compares dE_n with <psi_n|W dH|psi_n>.
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (6,) or not np.any(d):
        raise ValidationError("direction must be a non-zero 6-vector over (epsilon, a, b, theta, phi, delta)")
    d = d / np.linalg.norm(d)
    base = np.array([getattr(p, k) for k in PARAM_NAMES])

    def at(x):
        q = TwoLevelParams(*x)
        es = eigensystem(q)
        return build_hamiltonian(q), np.array([es.E_minus, es.E_plus]), np.stack([es.psi_minus, es.psi_plus], axis=1)

    hp, ep, vp = at(base + step * d)
    hm, em, vm = at(base - step * d)
    hdot, edot, vdot = (hp - hm) / (2 * step), (ep - em) / (2 * step), (vp - vm) / (2 * step)
    w = build_metric(p).matrix
    _, e, v = at(base)
    lhs = dagger(v) @ w @ vdot
    rhs_mat = dagger(v) @ w @ hdot @ v
    off = max(abs(lhs[0, 1] - rhs_mat[0, 1] / (e[1] - e[0])), abs(lhs[1, 0] - rhs_mat[1, 0] / (e[0] - e[1])))
    diag = float(np.max(np.abs(edot - np.real(np.diag(rhs_mat)))))
    return float(off), diag


def transition_coupling(p, rates):
    """Off-diagonal coupling C_mn (minus/plus basis) for angle rates; zero diagonal."""
    x = np.asarray(p.angles, dtype=float)[:, None]
    v = np.asarray(rates, dtype=float)[:, None]
    _, coup, _ = _coupling_matrices(p, x, v)
    return coup[0]
