"""Time-parameterized curves in (theta, phi, delta) space."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

ANGLES = ("theta", "phi", "delta")


def _ramp(kind):
    """Return (s(tau), ds/dtau) for a ramp on [0, 1]."""
    if kind == "linear":
        return (lambda x: x), (lambda x: np.ones_like(x))
    if kind == "smoothstep":
        return (lambda x: x * x * (3.0 - 2.0 * x)), (lambda x: 6.0 * x * (1.0 - x))
    raise ValidationError(f"unknown ramp {kind!r}; expected 'linear' or 'smoothstep'")


@dataclass(frozen=True, eq=False)
class SpherePath:
    """A curve t -> (theta, phi, delta) with analytic rates.

    ``angles`` and ``rates`` take an array of times and return a (3, n)
    array. ``samples`` is the number of uniform intervals used when the
    path is discretized (quadrature, integrators).
    """

    angles: Callable
    rates: Callable
    t_span: tuple
    samples: int = 10_000
    label: str = "path"

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.t_span)
        if not t1 > t0:
            raise ValidationError(f"path t_span must satisfy t1 > t0, got {self.t_span}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValidationError(f"path needs at least 2 samples (1 interval), got {self.samples}")
        object.__setattr__(self, "t_span", (t0, t1))
        object.__setattr__(self, "samples", int(self.samples))

    @property
    def duration(self):
        return self.t_span[1] - self.t_span[0]

    @property
    def times(self):
        return np.linspace(self.t_span[0], self.t_span[1], self.samples + 1)

    def at(self, t):
        return np.asarray(self.angles(np.asarray(t, dtype=float)), dtype=float)

    def velocity(self, t):
        return np.asarray(self.rates(np.asarray(t, dtype=float)), dtype=float)

    def sample(self):
        """(times, angles) on the uniform grid; angles has shape (3, samples + 1)."""
        t = self.times
        return t, self.at(t)

    def with_samples(self, samples):
        return SpherePath(self.angles, self.rates, self.t_span, samples, self.label)

    @property
    def closed(self):
        """True when the end point equals the start point (angles mod 2pi, as sphere points)."""
        ends = self.at(np.array(self.t_span))
        xyz = sphere_points(ends[0], ends[1])
        same_point = np.linalg.norm(xyz[:, 0] - xyz[:, 1]) < 1e-9
        ddelta = np.angle(np.exp(1j * (ends[2, 1] - ends[2, 0])))
        return bool(same_point and abs(ddelta) < 1e-9)

    def with_ramp(self, kind):
        """Reparameterize in time with a ramp profile, keeping the endpoints."""
        s, ds = _ramp(kind)
        t0, t1 = self.t_span
        span = t1 - t0

        def angles(t):
            return self.angles(t0 + span * s((np.asarray(t) - t0) / span))

        def rates(t):
            tau = (np.asarray(t) - t0) / span
            return self.rates(t0 + span * s(tau)) * ds(tau)

        return SpherePath(angles, rates, self.t_span, self.samples, self.label)


def sphere_points(theta, phi):
    """Unit vectors (3, ...) for polar angle theta and azimuth phi."""
    theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def single_angle(variable, start, end, base=(0.0, 0.0, 0.0), duration=1.0, samples=10_000,
                 ramp="linear"):
    """Linear motion of one angle from ``start`` to ``end``; the others stay at ``base``."""
    if variable not in ANGLES:
        raise ValidationError(f"variable must be one of {ANGLES}, got {variable!r}")
    if not duration > 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    idx = ANGLES.index(variable)
    base = np.asarray(base, dtype=float)
    speed = (end - start) / duration

    def angles(t):
        t = np.asarray(t, dtype=float)
        out = np.broadcast_to(base[:, None] if t.ndim else base, (3,) + t.shape).copy()
        out[idx] = start + speed * t
        return out

    def rates(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros((3,) + t.shape)
        out[idx] = speed
        return out

    path = SpherePath(angles, rates, (0.0, float(duration)), samples, f"{variable}-line")
    return path if ramp == "linear" else path.with_ramp(ramp)


def circle(center_theta, center_phi, radius, delta=0.0, duration=1.0, samples=10_000,
           ramp="linear", clockwise=False):
    """Small circle of angular ``radius`` about a centre on the unit sphere.

    The default orientation is counter-clockwise seen from outside the
    sphere, i.e. the enclosed cap lies to the left of the direction of motion.
    """
    if not 0 < radius < np.pi:
        raise ValidationError(f"radius must lie in (0, pi), got {radius}")
    if not duration > 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    c = sphere_points(center_theta, center_phi)
    u = np.array([np.cos(center_theta) * np.cos(center_phi),
                  np.cos(center_theta) * np.sin(center_phi), -np.sin(center_theta)])
    v = np.array([-np.sin(center_phi), np.cos(center_phi), 0.0])
    sign = -1.0 if clockwise else 1.0
    omega = sign * 2.0 * np.pi / duration

    def xyz(t):
        a = omega * np.asarray(t, dtype=float)
        return (np.cos(radius) * c[:, None] + np.sin(radius)
                * (np.cos(a)[None] * u[:, None] + np.sin(a)[None] * v[:, None]))

    def angles(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        p = xyz(t)
        th = np.arccos(np.clip(p[2], -1.0, 1.0))
        ph = np.arctan2(p[1], p[0])
        return np.stack([th, ph, np.full_like(th, delta)])

    def rates(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = omega * t
        p = xyz(t)
        dp = omega * np.sin(radius) * (-np.sin(a)[None] * u[:, None] + np.cos(a)[None] * v[:, None])
        rho2 = p[0] ** 2 + p[1] ** 2
        dth = -dp[2] / np.sqrt(rho2)
        dph = (p[0] * dp[1] - p[1] * dp[0]) / rho2
        return np.stack([dth, dph, np.zeros_like(dth)])

    path = SpherePath(angles, rates, (0.0, float(duration)), samples, "circle")
    return path if ramp == "linear" else path.with_ramp(ramp)


def from_functions(angles, rates, t_span, samples=10_000, label="custom"):
    """Wrap user callables (vectorized over time) as a SpherePath."""
    return SpherePath(angles, rates, t_span, samples, label)


def unwrap_phi(phi):
    return np.unwrap(np.asarray(phi, dtype=float))


def winding_number(phi):
    """Net number of turns of the azimuth along a sampled closed loop."""
    u = unwrap_phi(phi)
    return int(np.rint((u[-1] - u[0]) / (2.0 * np.pi)))


def optional_samples(path: SpherePath, samples: Optional[int]):
    return path if samples is None else path.with_samples(samples)
