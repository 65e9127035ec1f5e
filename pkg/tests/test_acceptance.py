"""Acceptance criteria, each timed against its runtime budget."""

import time

import numpy as np
import pytest

from ptqm import cho, core, paths, propermap as pm, twolevel as tl

from conftest import random_complex, random_metric

pytestmark = pytest.mark.acceptance


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_01_metric_unitarity(acceptance):
    with Clock() as clk:
        p = tl.TwoLevelParams(a=1.0, b=0.6)
        T = 50.0
        w = 2 * np.pi / T
        path = paths.from_functions(
            lambda t: np.stack([1.0 + 0.6 * np.sin(w * t), 2 * w * t, w * t + 0.3 * np.sin(3 * w * t)]),
            lambda t: np.stack([0.6 * w * np.cos(w * t), 2 * w + 0 * t, w + 0.9 * w * np.cos(3 * w * t)]),
            (0.0, T), samples=100_000)
        rng = np.random.default_rng(1)
        psi0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        res = core.propagate(tl.evolution_spec(path, p), psi0, drift_tolerance=1e-8)
    ok = res.unitarity_drift <= 1e-8
    assert acceptance(1, "metric-unitarity", ok, f"drift {res.unitarity_drift:.2e} <= 1e-8", clk.elapsed, 10)


def test_02_delta_loop_berry_phase(acceptance):
    with Clock() as clk:
        p = tl.TwoLevelParams(a=1.0, b=0.6, theta=0.9, phi=0.4)
        target = -0.25 * np.pi
        closed = 0.5 * (1 - p.scales.a_over_gap) * 2 * np.pi
        loop = paths.single_angle("delta", 0.0, 2 * np.pi, base=(p.theta, p.phi, 0.0), samples=20_000)
        line = tl.geometric_phase_integral(loop, p, "+")
        mapped = -np.angle(pm.map_eigenstate_delta(p.replace(delta=0.0), 2 * np.pi).plus)
        T = 1e4
        slow = paths.single_angle("delta", 0.0, 2 * np.pi, base=(p.theta, p.phi, 0.0), duration=T,
                                  samples=400_000)
        psi_m, psi_p = tl.eigenstate_arrays(p.a, p.b, p.theta, p.phi, 0.0)
        res = core.propagate(tl.evolution_spec(slow, p), [psi_p], drift_tolerance=1e-6)
        w_end = tl.metric_matrices(p.a, p.b, p.theta, p.phi, 2 * np.pi)
        c_plus = np.vdot(psi_p, w_end @ res.states[-1, 0])
        energy = p.epsilon + p.gap
        propagated = np.angle(c_plus * np.exp(1j * energy * T))
    errs = [abs(closed - target), abs(line - target), abs(mapped - target)]
    slow_err = abs(np.angle(np.exp(1j * (propagated - target))))
    ok = max(errs) <= 1e-6 and slow_err <= 1e-3 and res.certified
    detail = f"closed/line/mapped max err {max(errs):.1e} <= 1e-6, slow propagation err {slow_err:.1e} <= 1e-3"
    assert acceptance(2, "delta-loop Berry phase", ok, detail, clk.elapsed, 30)


def test_03_figure1_crossing(acceptance):
    with Clock() as clk:
        curve = pm.figure1_curve(-0.95, np.pi / 3, 10 * np.pi / 9)
    x = curve.crossing / np.pi
    ok = 1.06 <= x <= 1.08
    assert acceptance(3, "mapped azimuth crossing", ok, f"Phi = 2pi at phi = {x:.5f} pi in [1.06, 1.08] pi",
                      clk.elapsed, 10)


def test_04_figure2_closure(acceptance):
    with Clock() as clk:
        f = pm.figure2_paths(-0.95, np.pi / 3, 10 * np.pi / 9)
    source_gap = np.linalg.norm(f.source_xyz[-1] - f.source_xyz[0])
    ok = f.closure <= 1e-3 and source_gap > 0.1 and 1.06 * np.pi <= f.phi_end <= 1.08 * np.pi
    detail = (f"mapped closure {f.closure:.1e} <= 1e-3, source gap {source_gap:.2f}, "
              f"phi_end {f.phi_end / np.pi:.4f} pi")
    assert acceptance(4, "closed mapped path", ok, detail, clk.elapsed, 10)


def test_05_mapped_period_laws(acceptance):
    errors = []
    with Clock() as clk:
        base = tl.params_for_zeta(-0.95, theta=np.pi / 3)
        for branch in (pm.SqrtBranch.PLUS, pm.SqrtBranch.MINUS):
            zeta = base.zeta(int(branch))
            half = pm.mapped_period(base.replace(delta=np.pi / 2), branch, periods=3)
            errors.append(abs(half / (2 * np.pi / abs(1 - 2 * zeta)) - 1))
            xi = base.scales.xi
            zero = pm.mapped_period(base.replace(delta=0.0), branch, periods=3)
            errors.append(abs(zero / (2 * np.pi / xi) - 1))
    ok = max(errors) <= 1e-4
    assert acceptance(5, "mapped-period laws", ok, f"max relative period error {max(errors):.1e} <= 1e-4",
                      clk.elapsed, 10)


def test_06_ode_vs_analytic_proper_map(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    with Clock() as clk:
        for variable in ("delta", "theta", "phi"):
            for _ in range(10):
                a = rng.uniform(0.5, 2.0)
                p = tl.TwoLevelParams(epsilon=rng.normal(), a=a, b=a * rng.uniform(-0.9, 0.9),
                                      theta=rng.uniform(0, np.pi), phi=rng.uniform(-np.pi, np.pi),
                                      delta=rng.uniform(-np.pi, np.pi))
                branch = pm.SqrtBranch.PLUS if rng.random() < 0.5 else pm.SqrtBranch.MINUS
                end = rng.uniform(1.0, 2 * np.pi)
                base = p.replace(**{variable: 0.0})
                path = pm.single_angle_path(p, variable, end, samples=10_000)
                u0 = pm.analytic_single_angle_U(base, variable, 0.0, branch)
                tr = pm.solve_proper_unitary(path, base, branch, U0=u0, steps=10_000)
                ua = pm.analytic_single_angle_U(base, variable, end * tr.times, branch)
                worst = max(worst, float(np.max(np.linalg.norm(tr.U - ua, axis=(-2, -1)))))
    ok = worst <= 1e-7
    assert acceptance(6, "ODE vs analytic proper map", ok, f"30 runs, max ||U_ode - U_analytic|| {worst:.1e}"
                      " <= 1e-7", clk.elapsed, 60)


def test_07_stokes_monopole(acceptance):
    rng = np.random.default_rng(11)
    worst, strength_err, north_count, labels_ok = 0.0, 0.0, 0, True
    with Clock() as clk:
        p = tl.TwoLevelParams(a=1.0, b=0.6)
        for i in range(20):
            radius = rng.uniform(0.2, 0.8)
            if i < 10:
                ct = rng.uniform(0.0, radius - 0.1)
            else:
                ct = rng.uniform(radius + 0.1, np.pi - radius - 0.1)
            clockwise = bool(rng.random() < 0.5)
            loop = paths.circle(ct, rng.uniform(-np.pi, np.pi), radius, samples=20_000, clockwise=clockwise)
            north_count += ct < radius
            for band in ("+", "-"):
                res = tl.berry_phase_sphere(loop, p, band)
                worst = max(worst, abs(res.line_integral - res.flux_integral))
            # the region on the left of a clockwise loop is the complement of the cap
            labels_ok &= res.encloses_pole == ((ct < radius) != clockwise)
        for r in (0.0, 0.3, 0.6, -0.8):
            q = tl.TwoLevelParams(a=1.0, b=r)
            for band in (1, -1):
                expected = -band * 0.5 / np.sqrt(1 - r * r)
                for theta in (0.4, 1.3, 2.5):
                    strength_err = max(strength_err,
                                       abs(tl.curvature_from_connection(q, band, theta) - expected))
        hermitian = [tl.monopole_field(tl.TwoLevelParams(a=1.0), (1.0, 0.7, 0.0), band) for band in "+-"]
    exact = [m.strength for m in hermitian] == [-0.5, 0.5] and \
        all(m.string_coefficient in (2 * np.pi, 0.0) for m in hermitian) and \
        hermitian[0].string_coefficient == 2 * np.pi
    ok = worst <= 1e-6 and strength_err <= 1e-8 and exact and north_count == 10 and labels_ok
    detail = (f"line - flux {worst:.1e} <= 1e-6 on 20 caps ({north_count} around the north pole), "
              f"strength err {strength_err:.1e} <= 1e-8, b=0 exact: {exact}")
    assert acceptance(7, "Stokes / monopole", ok, detail, clk.elapsed, 10)


def test_08_partition_uniqueness(acceptance):
    rng = np.random.default_rng(3)
    inv, rec, uniq = 0.0, 0.0, 0.0
    with Clock() as clk:
        for k in range(100):
            n = 2 + k % 5
            w = random_metric(rng, n, spread=3.0)
            lam = random_complex(rng, n)
            part = core.partition_generator(lam, w)
            inv = max(inv, *part.residuals(w))
            rec = max(rec, np.linalg.norm(part.reconstruct() - lam) / np.linalg.norm(lam))
            again = core.partition_generator(part.symmetric_part, w)
            uniq = max(uniq, np.linalg.norm(again.anti_part) / np.linalg.norm(lam))
    ok = inv <= 1e-10 and rec <= 1e-12 and uniq <= 1e-10
    detail = f"invariants {inv:.1e} <= 1e-10, reconstruction {rec:.1e} <= 1e-12, re-split {uniq:.1e}"
    assert acceptance(8, "partition uniqueness", ok, detail, clk.elapsed, 5)


def test_09_cho_spectrum(acceptance):
    with Clock() as clk:
        c = cho.ChoParams(X=2.0, Y=0.5, Z=1.0, y=0.3, N=60)
        s = cho.cho_spectrum(c)
    low = s.eigenvalues[:5]
    err = float(np.max(np.abs(low.real - (np.arange(5) + 0.5) * np.sqrt(1.75))))
    imag = float(np.max(np.abs(low.imag)))
    iso = float(np.max(np.abs(s.eigenvalues.real - s.gho_eigenvalues)))
    ok = err <= 1e-6 and imag <= 1e-8 and iso <= 1e-6
    detail = f"level err {err:.1e} <= 1e-6, imag {imag:.1e} <= 1e-8, isospectral {iso:.1e} <= 1e-6"
    assert acceptance(9, "CHO spectrum", ok, detail, clk.elapsed, 10)


def test_10_adiabatic_convergence(acceptance):
    amps, phase_err = [], None
    with Clock() as clk:
        p = tl.TwoLevelParams(a=1.0, b=0.6)
        ref = tl.geometric_phase_integral(paths.circle(0.9, 0.0, 0.5, samples=10_000), p, "+", check=False)
        for T in (1e2, 1e3, 1e4):
            loop = paths.circle(0.9, 0.0, 0.5, duration=T, samples=int(T / 0.025), ramp="smoothstep")
            tr = tl.coefficient_dynamics(loop, p, (0.0, 1.0))
            amps.append(abs(tr.c_minus[-1]))
        phase_err = abs(np.angle(tr.c_plus[-1] * np.exp(-1j * ref)))
    ok = amps[0] > amps[1] > amps[2] and phase_err <= 1e-3
    detail = "|c_minus| " + ", ".join(f"{x:.1e}" for x in amps) + f" decreasing, phase err {phase_err:.1e} <= 1e-3"
    assert acceptance(10, "adiabatic convergence", ok, detail, clk.elapsed, 60)
