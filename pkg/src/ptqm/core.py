"""Metric algebra and metric-compatible time evolution.

Units: hbar = 1. The Schrodinger-like equation integrated here is
``i d|Psi>/dt = Lambda(t)|Psi>`` with ``Lambda = H - (i/2) W^{-1} dW/dt``.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .matops import as_matrix, as_state, dagger, hermitian_residual

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class MetricOperator:
    """Hermitian positive-definite metric W defining <.|W|.>."""

    matrix: np.ndarray
    tol: float = HERMITIAN_TOL

    def __post_init__(self):
        w = as_matrix(self.matrix, "W")
        scale = max(np.linalg.norm(w), np.finfo(float).tiny)
        res = hermitian_residual(w)
        if res > self.tol * scale:
            raise ValidationError(f"metric is not Hermitian (residual {res:.3e})")
        lam = np.linalg.eigvalsh(0.5 * (w + dagger(w)))
        if lam[0] <= 0:
            raise ValidationError(f"metric is not positive-definite (smallest eigenvalue {lam[0]:.3e})")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "matrix", w)
        object.__setattr__(self, "_eigs", lam)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def condition(self):
        return float(self._eigs[-1] / self._eigs[0])

    def solve(self, rhs):
        """W^{-1} rhs."""
        return np.linalg.solve(self.matrix, rhs)


def as_metric(w):
    return w if isinstance(w, MetricOperator) else MetricOperator(w)


def _check_dims(*mats):
    dims = {m.shape[0] for m in mats}
    if len(dims) != 1:
        raise ValidationError(f"dimension mismatch: {sorted(dims)}")


def check_pt_symmetry(h, w, block=None):
    """Relative residual ||WH - H^dagger W|| / max(1, ||WH||).

    ``block`` restricts the comparison to the leading ``block x block``
    corner of both products (used for truncated infinite-dimensional models).
    """
    h = as_matrix(h, "H")
    w = as_metric(w).matrix
    _check_dims(h, w)
    wh = w @ h
    diff = wh - dagger(h) @ w
    if block is not None:
        diff, wh = diff[:block, :block], wh[:block, :block]
    return float(np.linalg.norm(diff) / max(1.0, np.linalg.norm(wh)))


@dataclass(frozen=True, eq=False)
class GeneratorPartition:
    """PT-symmetric part H~ and PT-anti-symmetric part A of a generator."""

    symmetric_part: np.ndarray
    anti_part: np.ndarray

    def reconstruct(self):
        return self.symmetric_part + self.anti_part

    def residuals(self, w):
        """(symmetric residual, anti-symmetric residual) relative to ||W||."""
        w = as_metric(w).matrix
        s, a = self.symmetric_part, self.anti_part
        scale = max(1.0, np.linalg.norm(w) * max(np.linalg.norm(s), np.linalg.norm(a), 1.0))
        rs = np.linalg.norm(w @ s - dagger(s) @ w) / scale
        ra = np.linalg.norm(w @ a + dagger(a) @ w) / scale
        return float(rs), float(ra)


def partition_generator(lam, w):
    """Split a generator into its unique PT-symmetric and anti-symmetric parts under W."""
    lam = as_matrix(lam, "Lambda")
    w = as_metric(w)
    _check_dims(lam, w.matrix)
    if w.condition > CONDITION_LIMIT:
        raise ValidationError(f"metric is ill-conditioned (condition number {w.condition:.3e})")
    mirrored = w.solve(dagger(lam) @ w.matrix)
    return GeneratorPartition(0.5 * (lam + mirrored), 0.5 * (lam - mirrored))


def metric_drift_generator(w, w_rate, tol=HERMITIAN_TOL):
    """A = -(i/2) W^{-1} dW/dt."""
    w = as_metric(w)
    w_rate = as_matrix(w_rate, "W_rate")
    _check_dims(w.matrix, w_rate)
    res = hermitian_residual(w_rate)
    if res > tol * max(1.0, np.linalg.norm(w_rate)):
        raise ValidationError(f"W_rate is not Hermitian (residual {res:.3e})")
    return -0.5j * w.solve(w_rate)


def build_time_generator(h, w, w_rate, tol=1e-8, block=None):
    """Lambda = H - (i/2) W^{-1} dW/dt, after checking WH = H^dagger W."""
    w = as_metric(w)
    res = check_pt_symmetry(h, w, block=block)
    if res > tol:
        raise ValidationError(f"H is not PT-symmetric under W (residual {res:.3e})")
    return as_matrix(h, "H") + metric_drift_generator(w, w_rate)


def w_inner(psi1, psi2, w):
    """<psi1|W|psi2>."""
    w = as_metric(w).matrix
    psi1 = as_state(psi1, w.shape[0], "psi1")
    psi2 = as_state(psi2, w.shape[0], "psi2")
    return complex(np.vdot(psi1, w @ psi2))


def mapping_generator_shift(eta, eta_rate):
    """(i/2)[eta' eta^{-1} - (eta' eta^{-1})^dagger]; the extra term in the mapped generator."""
    eta = as_matrix(eta, "eta")
    eta_rate = as_matrix(eta_rate, "eta_rate")
    x = np.linalg.solve(eta.T, eta_rate.T).T
    return 0.5j * (x - dagger(x))


def mapped_generator(h, eta, eta_rate):
    """eta H eta^{-1} plus the shift from a time-dependent mapping."""
    h = as_matrix(h, "H")
    eta = as_matrix(eta, "eta")
    mapped = np.linalg.solve(eta.T, (eta @ h).T).T
    return mapped + mapping_generator_shift(eta, eta_rate)


@dataclass(frozen=True)
class EvolutionSpec:
    """Time-dependent H(t), W(t) and optionally dW/dt on [t0, t1].

    With ``vectorized=True`` the callables accept an array of times and
    return stacks of shape (n, d, d); this is much faster for small d.
    ``pt_block`` restricts PT checks to a leading block (truncated models).
    """

    hamiltonian_at: Callable
    metric_at: Callable
    t_span: tuple
    step_count: int
    metric_rate_at: Optional[Callable] = None
    vectorized: bool = False
    pt_tolerance: float = 1e-8
    pt_block: Optional[int] = None

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.t_span)
        if not (np.isfinite(t0) and np.isfinite(t1)) or t1 <= t0:
            raise ValidationError(f"t_span must satisfy t1 > t0, got {self.t_span}")
        if int(self.step_count) != self.step_count or self.step_count < 1:
            raise ValidationError(f"step_count must be a positive integer, got {self.step_count}")
        object.__setattr__(self, "t_span", (t0, t1))
        object.__setattr__(self, "step_count", int(self.step_count))

    @property
    def step(self):
        return (self.t_span[1] - self.t_span[0]) / self.step_count

    def _eval(self, fn, times):
        if self.vectorized:
            out = np.asarray(fn(times), dtype=complex)
            if out.ndim == 2:
                out = np.broadcast_to(out, (len(times),) + out.shape)
            return out
        mats = []
        for t in times:
            m = fn(float(t))
            mats.append(m.matrix if isinstance(m, MetricOperator) else m)
        return np.asarray(mats, dtype=complex)

    def metrics(self, times):
        if self.vectorized:
            return self._eval(self.metric_at, times)
        out = []
        for t in times:
            m = self.metric_at(float(t))
            out.append(m.matrix if isinstance(m, MetricOperator) else np.asarray(m, dtype=complex))
        return np.asarray(out)

    def metric_rates(self, times):
        if self.metric_rate_at is not None:
            return self._eval(self.metric_rate_at, times)
        # 4th-order central differences, step = integration step / 10
        s = self.step / 10.0
        wm2, wm1, wp1, wp2 = (self.metrics(times + k * s) for k in (-2, -1, 1, 2))
        return (wm2 - 8.0 * wm1 + 8.0 * wp1 - wp2) / (12.0 * s)

    def generators(self, times, check=True):
        """Lambda(t) for an array of times, validating the spec at each t."""
        times = np.asarray(times, dtype=float)
        h = self._eval(self.hamiltonian_at, times)
        w = self.metrics(times)
        wr = self.metric_rates(times)
        if check:
            self._validate(times, h, w)
        return h - 0.5j * np.linalg.solve(w, wr)

    def _validate(self, times, h, w):
        norm_w = np.linalg.norm(w, axis=(-2, -1))
        bad = np.nonzero(hermitian_residual(w) > HERMITIAN_TOL * np.maximum(norm_w, 1e-300))[0]
        if bad.size:
            raise ValidationError(f"metric is not Hermitian at t = {float(times[bad[0]])!r}")
        wh = w @ h
        diff = wh - dagger(h) @ w
        if self.pt_block is not None:
            m = self.pt_block
            diff, wh = diff[:, :m, :m], wh[:, :m, :m]
        res = np.linalg.norm(diff, axis=(-2, -1)) / np.maximum(1.0, np.linalg.norm(wh, axis=(-2, -1)))
        bad = np.nonzero(res > self.pt_tolerance)[0]
        if bad.size:
            i = bad[0]
            raise ValidationError(
                f"PT symmetry WH = H^dagger W violated at t = {float(times[i])!r} (residual {res[i]:.3e})"
            )
        if w.shape[-1] <= 16:
            lam = np.linalg.eigvalsh(0.5 * (w + dagger(w)))[..., 0]
        else:
            lam = np.array([np.linalg.eigvalsh(0.5 * (x + dagger(x)))[0] for x in w])
        bad = np.nonzero(lam <= 0)[0]
        if bad.size:
            raise ValidationError(f"metric is not positive-definite at t = {float(times[bad[0]])!r}")


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Evolved states on the step grid.

    ``states`` has shape (n_times, n_states, dim); ``unitarity_drift`` is the
    largest change of any <Psi_i|W|Psi_j> relative to t0.
    """

    times: np.ndarray
    states: np.ndarray
    unitarity_drift: float
    certified: bool
    drift_tolerance: float = 1e-6
    gram: np.ndarray = field(default=None, repr=False)


def rk4_step_maps(b_start, b_mid, b_end, h):
    """Linear RK4 propagators for y' = B(t) y over one step, batched.

    Returns P with y(t+h) = P y(t) for the classical RK4 scheme.
    """
    eye = np.eye(b_start.shape[-1])
    k1 = b_start
    k2 = b_mid @ (eye + 0.5 * h * k1)
    k3 = b_mid @ (eye + 0.5 * h * k2)
    k4 = b_end @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _chunks(n_steps, dim):
    size = max(1, min(n_steps, int(2e6 // (dim * dim))))
    for start in range(0, n_steps, size):
        yield start, min(n_steps, start + size)


def propagate(spec, initial_states, drift_tolerance=1e-6):
    """Integrate i dPsi/dt = Lambda(t) Psi with fixed-step classical RK4.

    No projection is applied to the states: the conservation of
    <Psi_i|W|Psi_j> is measured and reported as ``unitarity_drift``.
    """
    psi = np.atleast_2d(np.asarray(initial_states, dtype=complex))
    if psi.size == 0:
        raise ValidationError("at least one initial state is required")
    t0, _ = spec.t_span
    n, h = spec.step_count, spec.step
    times = t0 + h * np.arange(n + 1)
    dim = spec.metrics(times[:1]).shape[-1]
    if psi.shape[-1] != dim:
        raise ValidationError(f"initial states have dimension {psi.shape[-1]}, system has {dim}")
    y = psi.T.copy()
    states = np.empty((n + 1, psi.shape[0], dim), dtype=complex)
    states[0] = psi
    direct = dim <= 16
    for lo, hi in _chunks(n, dim):
        grid = times[lo:hi + 1]
        lam_grid = spec.generators(grid)
        lam_mid = spec.generators(grid[:-1] + 0.5 * h)
        b0, bm, b1 = -1j * lam_grid[:-1], -1j * lam_mid, -1j * lam_grid[1:]
        if direct:
            maps = rk4_step_maps(b0, bm, b1, h)
            for k in range(hi - lo):
                y = maps[k] @ y
                states[lo + k + 1] = y.T
        else:
            for k in range(hi - lo):
                k1 = b0[k] @ y
                k2 = bm[k] @ (y + 0.5 * h * k1)
                k3 = bm[k] @ (y + 0.5 * h * k2)
                k4 = b1[k] @ (y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                states[lo + k + 1] = y.T
    drift, gram0 = 0.0, None
    for lo, hi in _chunks(n + 1, dim):
        w = spec.metrics(times[lo:hi])
        s = states[lo:hi]
        g = np.einsum("tai,tij,tbj->tab", s.conj(), w, s)
        if gram0 is None:
            gram0 = g[0].copy()
        drift = max(drift, float(np.max(np.abs(g - gram0))))
    certified = drift <= drift_tolerance
    if not certified:
        log.warning("unitarity drift %.3e exceeds %.1e; result not certified", drift, drift_tolerance)
    return PropagationResult(times, states, drift, certified, drift_tolerance, gram0)
