"""Command-line front end: ``ptqm <scenario> --config FILE``.

Exit codes: 0 success, 2 invalid config or unknown scenario, 3 results
computed but not certified (drift or residual above tolerance), 4 file I/O
failure. ``PTQM_LOG`` (quiet, info, debug) sets the stderr log level.
"""

import argparse
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from . import __version__
from . import cho as cho_mod
from . import config as cfgmod
from . import propermap as pm
from . import twolevel as tl
from .core import propagate as propagate_states
from .errors import NumericalError, PTQMError, ValidationError
from .paths import circle, single_angle, sphere_points

log = logging.getLogger("ptqm")

EXIT_OK, EXIT_INVALID, EXIT_UNCERTIFIED, EXIT_IO = 0, 2, 3, 4
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


@dataclass
class Table:
    """Result of one scenario run: ordered columns plus scalar results."""

    columns: Dict[str, list]
    results: Dict[str, object] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    certified: bool = True

    @property
    def rows(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0


# ---------------------------------------------------------------------------
# building module objects from a config


def two_level_params(cfg):
    q = dict(cfg.params)
    if "zeta_plus" in q:
        if "b" in q:
            raise ValidationError("params.b and params.zeta_plus are mutually exclusive")
        return tl.params_for_zeta(q.pop("zeta_plus"), **q)
    return tl.TwoLevelParams(**q)


def build_path(cfg, p):
    q = cfg.path
    var = q.get("variable")
    if var is None:
        raise ValidationError("path.variable is required")
    samples = q.get("samples", 10_000)
    duration = q.get("duration", 1.0)
    ramp = q.get("ramp", "linear")
    if var == "circle":
        missing = [k for k in ("center_theta", "center_phi", "radius") if k not in q]
        if missing:
            raise ValidationError(f"circle path needs path.{', path.'.join(missing)}")
        if "start" in q or "end" in q:
            raise ValidationError("path.start/path.end do not apply to circle paths")
        return circle(q["center_theta"], q["center_phi"], q["radius"], delta=p.delta,
                      duration=duration, samples=samples, ramp=ramp,
                      clockwise=q.get("clockwise", False))
    if "center_theta" in q or "center_phi" in q or "radius" in q or "clockwise" in q:
        raise ValidationError("path.center_theta/center_phi/radius/clockwise apply to circle paths only")
    start = q.get("start", float(getattr(p, var)))
    if "end" in q:
        end = q["end"]
    elif q.get("closed", False):
        end = start + 2.0 * np.pi
    else:
        raise ValidationError("path.end is required unless path.closed = true")
    base = p.replace(**{var: start}).angles
    path = single_angle(var, start, end, base=tuple(base), duration=duration,
                        samples=samples, ramp=ramp)
    if q.get("closed", False) and not path.closed:
        raise ValidationError(f"path.closed = true but the {var} path from {start} to {end} is open")
    return path


def cho_params(cfg):
    q = cfg.params
    missing = [k for k in ("X", "Y", "Z", "y") if k not in q]
    if missing:
        raise ValidationError(f"cho needs params.{', params.'.join(missing)}")
    return cho_mod.ChoParams(q["X"], q["Y"], q["Z"], q["y"], cfg.numeric.get("N", 60))


def validate(cfg):
    """Build every module object the scenario needs, so errors surface before computing."""
    kind = cfg.kind
    if kind == "cho":
        cho_params(cfg)
        return
    if kind in ("figure1", "figure2"):
        if "zeta_plus" not in cfg.params:
            raise ValidationError(f"{kind} needs params.zeta_plus")
        two_level_params(cfg)
        return
    p = two_level_params(cfg)
    if kind in ("berry", "propagate", "map"):
        if kind == "map":
            var = cfg.path.get("variable")
            if var not in ("delta", "theta", "phi"):
                raise ValidationError("map needs path.variable = delta, theta or phi")
            if "end" not in cfg.path:
                raise ValidationError("map needs path.end (the angle moves from 0 to end)")
            return
        path = build_path(cfg, p)
        if kind == "berry" and not path.closed:
            raise ValidationError("berry needs a closed path (set path.closed = true or use a circle)")


# ---------------------------------------------------------------------------
# scenarios


def run_spectrum(cfg):
    p = two_level_params(cfg)
    es = tl.eigensystem(p)
    s = p.scales
    cols = {"epsilon": p.epsilon, "a": p.a, "b": p.b, "theta": p.theta, "phi": p.phi,
            "delta": p.delta, "E_minus": es.E_minus, "E_plus": es.E_plus, "gap": s.gap,
            "beta": s.beta, "chi_plus": s.chi_plus, "chi_minus": s.chi_minus,
            "zeta_plus": s.zeta_plus, "zeta_minus": s.zeta_minus, "xi": s.xi}
    return Table({k: [float(v)] for k, v in cols.items()})


def _mapped_delta_phase(p, start, end, band):
    deltas = np.linspace(start, end, 257)
    factors = [pm.map_eigenstate_delta(p.replace(delta=start), d - start) for d in deltas]
    arg = np.unwrap([np.angle(f.plus if band > 0 else f.minus) for f in factors])
    return float(-(arg[-1] - arg[0]))


def run_berry(cfg):
    p = two_level_params(cfg)
    loop = build_path(cfg, p)
    tol = cfg.numeric.get("tolerance", 1e-6)
    cols = {}
    results = {}
    certified = True
    for name, band in (("minus", -1), ("plus", 1)):
        cols[f"gamma_{name}"] = [tl.geometric_phase_integral(loop, p, band, check=False)]
    var = cfg.path["variable"]
    if var == "delta":
        start, end = (float(x) for x in loop.at(np.array(loop.t_span))[2])
        k = p.scales.a_over_gap
        for name, band in (("minus", -1), ("plus", 1)):
            closed = band * 0.5 * (1.0 - k) * (end - start)
            mapped = _mapped_delta_phase(p, start, end, band)
            cols[f"closed_form_{name}"] = [closed]
            cols[f"mapped_{name}"] = [mapped]
            err = max(abs(cols[f"gamma_{name}"][0] - closed), abs(mapped - closed))
            certified &= err <= tol
    else:
        try:
            omega, north, south = tl.loop_geometry(loop)
        except ValidationError as exc:
            results["flux_form"] = f"unavailable: {exc}"
        else:
            cols["solid_angle"] = [omega]
            cols["encloses_north"] = [int(north)]
            cols["encloses_south"] = [int(south)]
            for name, band in (("minus", -1), ("plus", 1)):
                flux = tl.flux_formula(p, band, omega, north, south)
                cols[f"flux_{name}"] = [flux]
                certified &= abs(cols[f"gamma_{name}"][0] - flux) <= tol
    return Table({k: [float(v[0])] for k, v in cols.items()}, results, {"tolerance": tol}, certified)


def _record_indices(n_steps, record):
    return np.unique(np.rint(np.linspace(0, n_steps, max(2, min(record, n_steps + 1)))).astype(int))


def run_propagate(cfg):
    p = two_level_params(cfg)
    path = build_path(cfg, p)
    steps = cfg.numeric.get("steps", path.samples)
    tol = cfg.numeric.get("drift_tolerance", 1e-6)
    initial = cfg.numeric.get("initial", "plus")
    x0 = path.at(np.array([path.t_span[0]]))[:, 0]
    psi_m, psi_p = tl.eigenstate_arrays(p.a, p.b, *x0)
    if initial == "random":
        rng = np.random.default_rng(cfg.numeric.get("seed", 0))
        states = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        w0 = tl.metric_matrices(p.a, p.b, *x0)
        states /= np.sqrt(np.einsum("ki,ij,kj->k", states.conj(), w0, states).real)[:, None]
    elif initial == "plus":
        states = np.stack([psi_p, psi_m])
    else:
        states = np.stack([psi_m, psi_p])
    spec = tl.evolution_spec(path, p, steps)
    res = propagate_states(spec, states, drift_tolerance=tol)
    idx = _record_indices(spec.step_count, cfg.numeric.get("record", 201))
    t = res.times[idx]
    psi = res.states[idx, 0]
    x = path.at(t)
    em, ep = tl.eigenstate_arrays(p.a, p.b, *x)
    w = tl.metric_matrices(p.a, p.b, *x)
    wpsi = np.einsum("tij,tj->ti", w, psi)
    c_m = np.einsum("ti,ti->t", em.conj(), wpsi)
    c_p = np.einsum("ti,ti->t", ep.conj(), wpsi)
    cols = {"t": t, "theta": x[0], "phi": x[1], "delta": x[2],
            "psi1_re": psi[:, 0].real, "psi1_im": psi[:, 0].imag,
            "psi2_re": psi[:, 1].real, "psi2_im": psi[:, 1].imag,
            "c_minus_re": c_m.real, "c_minus_im": c_m.imag,
            "c_plus_re": c_p.real, "c_plus_im": c_p.imag,
            "w_norm": np.einsum("ti,ti->t", psi.conj(), wpsi).real}
    return Table({k: list(map(float, v)) for k, v in cols.items()},
                 {"unitarity_drift": res.unitarity_drift, "steps": spec.step_count},
                 {"drift_tolerance": tol}, res.certified)


def run_map(cfg):
    p = two_level_params(cfg)
    var, end = cfg.path["variable"], cfg.path["end"]
    branch = pm.SqrtBranch.parse(cfg.numeric.get("branch", "plus"))
    steps = cfg.numeric.get("steps", cfg.path.get("samples", 10_000))
    tol = cfg.numeric.get("tolerance", 1e-6)
    path = pm.single_angle_path(p, var, end, samples=steps)
    base = p.replace(**{var: 0.0})
    u0 = pm.analytic_single_angle_U(base, var, 0.0, branch)
    tr = pm.solve_proper_unitary(path, base, branch, U0=u0, steps=steps, residual_tol=tol)
    values = end * tr.times
    ua = pm.analytic_single_angle_U(base, var, values, branch)
    u_err = np.linalg.norm(tr.U - ua, axis=(-2, -1))
    idx = _record_indices(steps, cfg.numeric.get("record", 201))
    cols = {"t": tr.times[idx], var: values[idx], "Theta": tr.theta_cap[idx],
            "Phi": tr.phi_cap[idx], "u_error": u_err[idx]}
    results = {"properness_residual": tr.properness_residual,
               "unitarity_residual": tr.unitarity_residual,
               "hermiticity_residual": tr.hermiticity_residual,
               "metric_residual": tr.metric_residual,
               "max_u_error": float(u_err.max()), "branch": branch.name.lower()}
    certified = tr.certified and float(u_err.max()) <= tol
    return Table({k: list(map(float, v)) for k, v in cols.items()}, results,
                 {"tolerance": tol}, certified)


def run_cho(cfg):
    c = cho_params(cfg)
    tol = cfg.numeric.get("tolerance", 1e-6)
    pad = cfg.numeric.get("pad")
    sp = cho_mod.cho_spectrum(c)
    mapping = cho_mod.proper_map_cho(c, pad)
    n = np.arange(sp.trusted)
    err = np.abs(sp.eigenvalues - sp.exact)
    cols = {"n": n, "E_re": sp.eigenvalues.real, "E_im": sp.eigenvalues.imag,
            "E_gho": sp.gho_eigenvalues, "E_exact": sp.exact, "abs_error": err}
    results = {"intertwining_residual": mapping.residual, "interior_block": c.interior,
               "frequency": c.frequency}
    certified = float(err.max()) <= tol and float(np.abs(sp.eigenvalues.imag).max()) <= tol
    return Table({k: [float(x) if k != "n" else int(x) for x in v] for k, v in cols.items()},
                 results, {"tolerance": tol}, certified)


def _figure_params(cfg):
    q = dict(cfg.params)
    return dict(zeta_plus=q["zeta_plus"], theta=q.get("theta", 0.0), delta=q.get("delta", 0.0),
                a=q.get("a", 1.0), epsilon=q.get("epsilon", 0.0))


def run_figure1(cfg):
    kw = _figure_params(cfg)
    samples = cfg.path.get("samples", 2001)
    method = cfg.numeric.get("method", "analytic")
    extra = {"phi_end": cfg.numeric["phi_end"]} if "phi_end" in cfg.numeric else {}
    curve = pm.figure1_curve(phi_samples=samples, method=method, **kw, **extra)
    results = {"crossing": curve.crossing if curve.crossing is not None else "none",
               "crossing_over_pi": curve.crossing / np.pi if curve.crossing is not None else "none",
               "monotone": curve.monotone, "method": method}
    return Table({"phi": list(map(float, curve.phi)), "Phi": list(map(float, curve.Phi))},
                 results, {}, curve.crossing is not None)


def run_figure2(cfg):
    kw = _figure_params(cfg)
    samples = cfg.path.get("samples", 2001)
    f = pm.figure2_paths(samples=samples, phi_end=cfg.numeric.get("phi_end"), **kw)
    src, mp = f.source_xyz, f.mapped_xyz
    cols = {"phi": f.phi, "theta": f.theta, "Theta": f.Theta, "Phi": f.Phi,
            "x": src[:, 0], "y": src[:, 1], "z": src[:, 2],
            "X_mapped": mp[:, 0], "Y_mapped": mp[:, 1], "Z_mapped": mp[:, 2]}
    results = {"closure": f.closure, "phi_end": f.phi_end, "phi_end_over_pi": f.phi_end / np.pi}
    return Table({k: list(map(float, np.broadcast_to(v, f.phi.shape))) for k, v in cols.items()},
                 results, {"closure_tolerance": 1e-3}, f.closure <= 1e-3)


RUNNERS = {"spectrum": run_spectrum, "berry": run_berry, "propagate": run_propagate,
           "map": run_map, "cho": run_cho, "figure1": run_figure1, "figure2": run_figure2}


# ---------------------------------------------------------------------------
# orchestration and output


def run(cfg, workers=None) -> Table:
    """Run a (possibly swept) config. Sweep points run in parallel and merge by sweep index."""
    points = cfg.expand()
    for point in points:
        validate(point)
    runner = RUNNERS[cfg.kind]
    if len(points) == 1:
        return runner(points[0])
    workers = workers or min(len(points), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tables = list(pool.map(runner, points))
    return merge(points, tables, cfg.sweep_fields())


def merge(points, tables, fields) -> Table:
    names = list(tables[0].columns)
    for t in tables[1:]:
        if list(t.columns) != names:
            raise NumericalError("sweep points produced different column sets")
    cols: Dict[str, list] = {"sweep_index": []}
    for s, k in fields:
        cols[f"{s}.{k}"] = []
    for name in names:
        cols[name] = []
    results = {}
    for i, (point, t) in enumerate(zip(points, tables)):
        cols["sweep_index"] += [i] * t.rows
        for s, k in fields:
            cols[f"{s}.{k}"] += [point.section(s)[k]] * t.rows
        for name in names:
            cols[name] += t.columns[name]
        for key, value in t.results.items():
            results[f"{key}[{i}]"] = value
    return Table(cols, results, tables[0].tolerances, all(t.certified for t in tables))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def to_csv(cfg, table) -> str:
    out = io.StringIO()
    out.write(f"# version: ptqm {__version__}\n# scenario: {cfg.kind}\n# config:\n")
    for line in cfgmod.echo(cfg).splitlines():
        out.write(f"#   {line}\n" if line else "#\n")
    for key in sorted(table.tolerances):
        out.write(f"# tolerance: {key} = {_fmt(table.tolerances[key])}\n")
    for key in table.results:
        out.write(f"# result: {key} = {_fmt(table.results[key])}\n")
    out.write(f"# certified: {_fmt(table.certified)}\n")
    names = list(table.columns)
    out.write(",".join(names) + "\n")
    for row in zip(*(table.columns[n] for n in names)):
        out.write(",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def to_json(cfg, table) -> str:
    doc = {
        "metadata": {
            "version": __version__,
            "scenario": cfg.kind,
            "config": cfgmod.echo(cfg),
            "tolerances": {k: _jsonable(v) for k, v in sorted(table.tolerances.items())},
            "results": {k: _jsonable(v) for k, v in table.results.items()},
            "certified": bool(table.certified),
        },
        "columns": {k: [_jsonable(v) for v in vals] for k, vals in table.columns.items()},
    }
    return json.dumps(doc, indent=1) + "\n"


def data_section(text: str) -> str:
    """The non-comment part of a CSV output (header and rows)."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def config_from_csv(text: str, kind=None):
    """Re-parse the config echoed in a CSV metadata block."""
    lines, inside = [], False
    for line in text.splitlines():
        if line == "# config:":
            inside = True
            continue
        if inside:
            if line.startswith("#   "):
                lines.append(line[4:])
            elif line == "#":
                lines.append("")
            else:
                break
    return cfgmod.loads("\n".join(lines) + "\n", kind)


def _configure_logging():
    level_name = os.environ.get("PTQM_LOG", "quiet").strip().lower()
    level = LOG_LEVELS.get(level_name, logging.ERROR)
    root = logging.getLogger("ptqm")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("ptqm %(levelname)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
    if level_name not in LOG_LEVELS:
        log.error("PTQM_LOG=%r not recognized; using quiet", level_name)


def build_parser():
    parser = argparse.ArgumentParser(prog="ptqm", description="Time-dependent PT-symmetric QM studies.")
    parser.add_argument("scenario", help=f"one of: {', '.join(cfgmod.SCENARIOS)}")
    parser.add_argument("--config", required=True, help="INI-style or JSON scenario file")
    parser.add_argument("--out", help="output file (default: config output.file or stdout)")
    parser.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    parser.add_argument("--steps", type=int, help="override numeric.steps")
    parser.add_argument("--seed", type=int, help="override numeric.seed")
    parser.add_argument("--version", action="version", version=f"ptqm {__version__}")
    return parser


def main(argv: List[str] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.scenario not in cfgmod.SCENARIOS:
        print(f"ptqm: unknown scenario {args.scenario!r}; expected one of "
              f"{', '.join(cfgmod.SCENARIOS)}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = cfgmod.load(args.config, args.scenario)
    except OSError as exc:
        print(f"ptqm: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"ptqm: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    overrides = {}
    usable = cfgmod.ALLOWED[args.scenario].get("numeric", set())
    for key in ("steps", "seed"):
        value = getattr(args, key)
        if value is None:
            continue
        if key in usable:
            overrides[key] = value
        else:
            log.warning("--%s does not apply to scenario %s; ignored", key, args.scenario)
    try:
        if overrides:
            text = cfgmod.echo(cfg.with_overrides(**overrides))
            cfg = cfgmod.loads(text, args.scenario)
        table = run(cfg)
    except ValidationError as exc:
        print(f"ptqm: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PTQMError as exc:
        print(f"ptqm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_UNCERTIFIED
    fmt = args.format or cfg.output.get("format", "csv")
    text = to_json(cfg, table) if fmt == "json" else to_csv(cfg, table)
    target = args.out or cfg.output.get("file")
    try:
        if target and target != "-":
            with open(target, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"ptqm: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if not table.certified:
        print("ptqm: results not certified (drift or residual above tolerance)", file=sys.stderr)
        return EXIT_UNCERTIFIED
    log.info("wrote %d rows", table.rows)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
