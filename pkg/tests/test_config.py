import math

import pytest
from hypothesis import given, strategies as st

from ptqm import config as cfgmod
from ptqm.errors import ValidationError


@pytest.mark.parametrize("text,value", [
    ("1.5", 1.5), ("-2", -2.0), ("pi", math.pi), ("2pi", 2 * math.pi), ("1/3 pi", math.pi / 3),
    ("10/9 pi", 10 * math.pi / 9), ("pi/3", math.pi / 3), ("-0.5 * pi", -0.5 * math.pi),
    ("1e-3", 1e-3), (".25", 0.25), ("+3", 3.0),
])
def test_number_grammar(text, value):
    assert cfgmod.parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["", "-", "pi/", "*2", "2 ** 3", "1/3 tau", "1,5"])
def test_number_grammar_rejects(text):
    with pytest.raises(ValueError):
        cfgmod.parse_number(text)


FIGURE1 = """
[scenario]
kind = figure1   # inline comment
[params]
zeta_plus = -0.95
theta = 1/3 pi
delta = 10/9 pi
[path]
samples = 501
"""


def test_loads_text_and_json_agree():
    a = cfgmod.loads(FIGURE1)
    b = cfgmod.loads('{"scenario": {"kind": "figure1"}, "params": {"zeta_plus": -0.95, '
                     '"theta": "1/3 pi", "delta": "10/9 pi"}, "path": {"samples": 501}}')
    assert a == b
    assert a.kind == "figure1" and a.path["samples"] == 501
    assert a.params["delta"] == pytest.approx(10 * math.pi / 9)


def test_kind_from_command_line():
    text = "[params]\na = 1\nb = 0.2\n"
    assert cfgmod.loads(text, "spectrum").kind == "spectrum"
    with pytest.raises(ValidationError, match="kind"):
        cfgmod.loads(FIGURE1, "spectrum")
    with pytest.raises(ValidationError, match="unknown scenario"):
        cfgmod.loads(text)


@pytest.mark.parametrize("body,field", [
    ("[params]\nb = lots\n", "params.b"),
    ("[params]\nbeta = 1\n", "params.beta"),
    ("[path]\nvariable = psi\n", "path.variable"),
    ("[path]\nclosed = maybe\n", "path.closed"),
    ("[path]\nsamples = 2.5\n", "path.samples"),
    ("[numeric]\nN = 60\n", "numeric.N"),
    ("[params]\nb = []\n", "params.b"),
])
def test_errors_name_the_field(body, field):
    with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
        cfgmod.loads("[scenario]\nkind = berry\n" + body)


def test_structural_errors():
    with pytest.raises(ValidationError, match="section"):
        cfgmod.loads("[scenario]\nkind = berry\n[extras]\nx = 1\n")
    with pytest.raises(ValidationError, match="syntax"):
        cfgmod.loads("kind = berry\n")
    with pytest.raises(ValidationError, match="JSON"):
        cfgmod.loads("{not json")
    with pytest.raises(ValidationError, match="list"):
        cfgmod.loads("[scenario]\nkind = berry\n[output]\nformat = [csv, json]\n")


def test_sweep_expansion_order():
    cfg = cfgmod.loads("[scenario]\nkind = spectrum\n[params]\na = 1\nb = [0.1, 0.2]\ntheta = [0, pi, 2pi]\n")
    assert cfg.sweep_fields() == [("params", "b"), ("params", "theta")]
    points = cfg.expand()
    assert len(points) == 6
    assert [(p.params["b"], p.params["theta"] / math.pi) for p in points[:4]] == \
        [(0.1, 0.0), (0.1, 1.0), (0.1, 2.0), (0.2, 0.0)]
    single = cfgmod.loads("[scenario]\nkind = spectrum\n[params]\nb = 0.1\n")
    assert single.expand() == [single]


def test_overrides():
    cfg = cfgmod.loads("[scenario]\nkind = propagate\n[numeric]\nsteps = 10\n")
    assert cfg.with_overrides(steps=20, seed=None).numeric == {"steps": 20}


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(
    params=st.fixed_dictionaries({}, optional={"a": finite, "b": finite, "theta": finite,
                                                 "delta": st.tuples(finite, finite)}),
    path=st.fixed_dictionaries({}, optional={
        "variable": st.sampled_from(["delta", "circle"]), "closed": st.booleans(),
        "samples": st.integers(1, 10 ** 6)}),
    numeric=st.fixed_dictionaries({}, optional={"tolerance": finite}),
    out=st.fixed_dictionaries({}, optional={"format": st.sampled_from(["csv", "json"]),
                                             "file": st.sampled_from(["out.csv", "a/b.json"])}),
)
def test_echo_round_trip(params, path, numeric, out):
    cfg = cfgmod.ScenarioConfig("berry", params, path, numeric, out)
    text = cfgmod.echo(cfg)
    again = cfgmod.loads(text)
    assert again == cfg
    assert cfgmod.echo(again) == text
