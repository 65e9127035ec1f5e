"""Scenario configuration files.

Two input formats are accepted. The text format is INI-style::

    [scenario]
    kind = figure1

    [params]
    zeta_plus = -0.95
    theta = 1/3 pi
    delta = 10/9 pi

    [numeric]
    steps = 10000

Sections are ``scenario``, ``params``, ``path``, ``numeric`` and ``output``.
A value is a boolean (``true``/``false``), a bare word, or an arithmetic
product of numbers and ``pi``. Multiplication is written as ``*``, a space,
or juxtaposition (``2pi``), and division as ``/``. A leading sign is allowed.
A bracketed comma-separated list (``b = [0.2, 0.4, 0.6]``) makes the field a
sweep. JSON input uses the same sections as nested objects, and numbers may
also be given as strings in the grammar above.

``echo`` writes a canonical text form that ``loads`` parses back to an equal
config.
"""

import configparser
import itertools
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

from .errors import ValidationError

SCENARIOS = ("spectrum", "berry", "propagate", "map", "cho", "figure1", "figure2")
SECTIONS = ("scenario", "params", "path", "numeric", "output")

_REAL, _INT, _BOOL, _WORD = "real", "int", "bool", "word"

SCHEMA: Dict[str, Dict[str, Any]] = {
    "params": {
        "epsilon": _REAL, "a": _REAL, "b": _REAL, "zeta_plus": _REAL,
        "theta": _REAL, "phi": _REAL, "delta": _REAL,
        "X": _REAL, "Y": _REAL, "Z": _REAL, "y": _REAL,
    },
    "path": {
        "variable": ("delta", "theta", "phi", "circle"),
        "start": _REAL, "end": _REAL, "samples": _INT, "closed": _BOOL,
        "duration": _REAL, "ramp": ("linear", "smoothstep"),
        "center_theta": _REAL, "center_phi": _REAL, "radius": _REAL, "clockwise": _BOOL,
    },
    "numeric": {
        "steps": _INT, "tolerance": _REAL, "drift_tolerance": _REAL, "N": _INT, "pad": _INT,
        "band": ("plus", "minus"), "branch": ("plus", "minus"),
        "initial": ("plus", "minus", "random"), "seed": _INT, "record": _INT,
        "phi_end": _REAL, "method": ("analytic", "ode"),
    },
    "output": {"file": _WORD, "format": ("csv", "json")},
}

# which sections/keys a scenario may use
ALLOWED = {
    "spectrum": {"params": {"epsilon", "a", "b", "zeta_plus", "theta", "phi", "delta"}},
    "berry": {"params": {"epsilon", "a", "b", "zeta_plus", "theta", "phi", "delta"},
              "path": set(SCHEMA["path"]), "numeric": {"tolerance"}},
    "propagate": {"params": {"epsilon", "a", "b", "zeta_plus", "theta", "phi", "delta"},
                  "path": set(SCHEMA["path"]),
                  "numeric": {"steps", "drift_tolerance", "initial", "seed", "record"}},
    "map": {"params": {"epsilon", "a", "b", "zeta_plus", "theta", "phi", "delta"},
            "path": {"variable", "end", "samples"},
            "numeric": {"steps", "tolerance", "branch", "record"}},
    "cho": {"params": {"X", "Y", "Z", "y"}, "numeric": {"N", "pad", "tolerance"}},
    "figure1": {"params": {"epsilon", "a", "zeta_plus", "theta", "delta"},
                "path": {"samples"}, "numeric": {"phi_end", "method"}},
    "figure2": {"params": {"epsilon", "a", "zeta_plus", "theta", "delta"},
                "path": {"samples"}, "numeric": {"phi_end"}},
}

_NUMBER = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(rf"\s*({_NUMBER}|pi|[*/])")


def parse_number(text: str) -> float:
    """Evaluate the number grammar: a signed product/quotient of numbers and ``pi``."""
    s = text.strip()
    sign = 1.0
    if s[:1] in ("+", "-"):
        sign = -1.0 if s[0] == "-" else 1.0
        s = s[1:]
    if not s:
        raise ValueError(f"not a number: {text!r}")
    pos, value, op, expect_operand = 0, 1.0, "*", True
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m:
            raise ValueError(f"not a number: {text!r}")
        tok = m.group(1)
        pos = m.end()
        if tok in "*/":
            if expect_operand:
                raise ValueError(f"not a number: {text!r}")
            op, expect_operand = tok, True
            continue
        operand = math.pi if tok == "pi" else float(tok)
        value = value * operand if op == "*" else value / operand
        op, expect_operand = "*", False
    if expect_operand:
        raise ValueError(f"not a number: {text!r}")
    return sign * value


def _split_list(text: str) -> List[str]:
    inner = text.strip()[1:-1].strip()
    return [] if not inner else [x.strip() for x in inner.split(",")]


def _coerce(section: str, key: str, raw: Any):
    kind = SCHEMA[section][key]
    where = f"{section}.{key}"
    if isinstance(kind, tuple):
        value = str(raw).strip().lower() if not isinstance(raw, bool) else raw
        if value not in kind:
            raise ValidationError(f"{where} must be one of {', '.join(kind)}, got {raw!r}")
        return value
    if kind == _WORD:
        return str(raw).strip()
    if kind == _BOOL:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise ValidationError(f"{where} must be a boolean, got {raw!r}")
    try:
        if isinstance(raw, bool):
            raise ValueError
        value = float(raw) if isinstance(raw, (int, float)) else parse_number(str(raw))
    except ValueError:
        raise ValidationError(f"{where} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where} must be finite, got {raw!r}")
    if kind == _INT:
        if value != int(value):
            raise ValidationError(f"{where} must be an integer, got {raw!r}")
        return int(value)
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    """A parsed scenario. Section values are scalars or tuples (sweeps)."""

    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    path: Dict[str, Any] = field(default_factory=dict)
    numeric: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)

    def section(self, name):
        return getattr(self, name)

    def sweep_fields(self) -> List[Tuple[str, str]]:
        return [(s, k) for s in ("params", "path", "numeric")
                for k in sorted(self.section(s)) if isinstance(self.section(s)[k], tuple)]

    def expand(self) -> List["ScenarioConfig"]:
        """Cartesian product of all list-valued fields, in a fixed order (last field fastest)."""
        fields = self.sweep_fields()
        if not fields:
            return [self]
        out = []
        for combo in itertools.product(*(self.section(s)[k] for s, k in fields)):
            parts = {s: dict(self.section(s)) for s in ("params", "path", "numeric")}
            for (s, k), v in zip(fields, combo):
                parts[s][k] = v
            out.append(ScenarioConfig(self.kind, output=dict(self.output), **parts))
        return out

    def with_overrides(self, **numeric) -> "ScenarioConfig":
        merged = dict(self.numeric)
        merged.update({k: v for k, v in numeric.items() if v is not None})
        return ScenarioConfig(self.kind, dict(self.params), dict(self.path), merged, dict(self.output))


def _from_sections(sections: Dict[str, Dict[str, Any]], kind=None) -> ScenarioConfig:
    unknown = set(sections) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown section(s): {', '.join(sorted(unknown))}")
    declared = sections.get("scenario", {}).get("kind")
    extra = set(sections.get("scenario", {})) - {"kind"}
    if extra:
        raise ValidationError(f"unknown key(s) in scenario: {', '.join(sorted(extra))}")
    if declared is not None and kind is not None and str(declared).strip() != kind:
        raise ValidationError(f"scenario.kind is {declared!r} but {kind!r} was requested")
    kind = kind or (str(declared).strip() if declared is not None else None)
    if kind not in SCENARIOS:
        raise ValidationError(f"unknown scenario {kind!r}; expected one of {', '.join(SCENARIOS)}")
    parsed = {}
    for name in ("params", "path", "numeric", "output"):
        values = {}
        for key, raw in sections.get(name, {}).items():
            if key not in SCHEMA[name]:
                raise ValidationError(f"unknown key {name}.{key}")
            if name != "output" and key not in ALLOWED[kind].get(name, set()):
                raise ValidationError(f"{name}.{key} is not used by scenario {kind!r}")
            items = raw if isinstance(raw, list) else (
                _split_list(raw) if isinstance(raw, str) and raw.strip().startswith("[") else None)
            if items is not None:
                if name == "output":
                    raise ValidationError(f"{name}.{key} cannot be a list")
                if not items:
                    raise ValidationError(f"{name}.{key} is an empty list")
                values[key] = tuple(_coerce(name, key, x) for x in items)
            else:
                values[key] = _coerce(name, key, raw)
        parsed[name] = values
    return ScenarioConfig(kind, **parsed)


def loads(text: str, kind=None) -> ScenarioConfig:
    """Parse config text. JSON is detected by a leading ``{``."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ValidationError("JSON config must map section names to objects")
        return _from_sections(data, kind)
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"invalid config syntax: {exc}") from None
    return _from_sections({s: dict(parser[s]) for s in parser.sections()}, kind)


def load(path, kind=None) -> ScenarioConfig:
    """Read a config file. OSError propagates to the caller."""
    return loads(Path(path).read_text(encoding="utf-8"), kind)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo(cfg: ScenarioConfig) -> str:
    """Canonical text form; keys sorted, floats at full precision."""
    lines = ["[scenario]", f"kind = {cfg.kind}"]
    for name in ("params", "path", "numeric", "output"):
        values = cfg.section(name)
        if values:
            lines += ["", f"[{name}]"] + [f"{k} = {_fmt(values[k])}" for k in sorted(values)]
    return "\n".join(lines) + "\n"
