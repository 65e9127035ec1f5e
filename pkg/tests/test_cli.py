import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ptqm import cli
from ptqm import config as cfgmod

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FIGURE = """[params]
zeta_plus = -0.95
theta = 1/3 pi
delta = 10/9 pi
[path]
samples = 1001
"""

BERRY = """[params]
a = 1
b = 0.6
[path]
variable = delta
start = 0
closed = true
samples = 4000
"""


def write(tmp_path, text, name="cfg.ini"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(cli.data_section(text))))


def test_figure1_crossing(tmp_path, capsys):
    code, out, _ = run_cli(["figure1", "--config", write(tmp_path, FIGURE)], capsys)
    assert code == 0
    table = rows(out)
    assert list(table[0]) == ["phi", "Phi"]
    phi = np.array([float(r["phi"]) for r in table])
    big_phi = np.array([float(r["Phi"]) for r in table])
    nearest = phi[np.argmin(np.abs(big_phi - 2 * np.pi))]
    assert 1.06 * np.pi <= nearest <= 1.08 * np.pi


def test_figure2_columns_and_closure(tmp_path, capsys):
    code, out, _ = run_cli(["figure2", "--config", write(tmp_path, FIGURE)], capsys)
    assert code == 0
    table = rows(out)
    assert list(table[0]) == ["phi", "theta", "Theta", "Phi", "x", "y", "z",
                              "X_mapped", "Y_mapped", "Z_mapped"]
    first = np.array([float(table[0][k]) for k in ("X_mapped", "Y_mapped", "Z_mapped")])
    last = np.array([float(table[-1][k]) for k in ("X_mapped", "Y_mapped", "Z_mapped")])
    assert np.linalg.norm(first - last) <= 1e-3
    assert float(table[-1]["phi"]) == pytest.approx(1.07 * np.pi, abs=0.01 * np.pi)


def test_berry_delta_loop(tmp_path, capsys):
    code, out, _ = run_cli(["berry", "--config", write(tmp_path, BERRY)], capsys)
    assert code == 0
    (row,) = rows(out)
    assert float(row["gamma_plus"]) == pytest.approx(-0.25 * np.pi, abs=1e-6)
    assert float(row["gamma_minus"]) == pytest.approx(0.25 * np.pi, abs=1e-6)
    assert float(row["mapped_plus"]) == pytest.approx(-0.25 * np.pi, abs=1e-6)


def test_metadata_block_and_round_trip(tmp_path, capsys):
    path = write(tmp_path, BERRY)
    _, out, _ = run_cli(["berry", "--config", path], capsys)
    comments = [line for line in out.splitlines() if line.startswith("#")]
    assert comments[0].startswith("# version: ptqm ")
    assert "# tolerance: tolerance = 9.9999999999999995e-07" in comments
    assert comments[-1] == "# certified: true"
    assert cli.config_from_csv(out) == cfgmod.load(path, "berry")
    header = cli.data_section(out).splitlines()[0]
    assert header == "gamma_minus,gamma_plus,closed_form_minus,mapped_minus,closed_form_plus,mapped_plus"


def test_data_sections_are_byte_identical(tmp_path, capsys):
    path = write(tmp_path, FIGURE)
    a = run_cli(["figure2", "--config", path], capsys)[1]
    b = run_cli(["figure2", "--config", path], capsys)[1]
    assert cli.data_section(a) == cli.data_section(b)
    assert a == b


def test_number_format(tmp_path, capsys):
    _, out, _ = run_cli(["berry", "--config", write(tmp_path, BERRY)], capsys)
    (row,) = rows(out)
    assert float(row["gamma_plus"]) == float(f"{float(row['gamma_plus']):.17g}")
    assert len(row["gamma_plus"].lstrip("-").replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_json_output_and_out_file(tmp_path, capsys):
    target = tmp_path / "res.json"
    code, out, _ = run_cli(["spectrum", "--config", str(CONFIGS / "spectrum.ini"),
                            "--format", "json", "--out", str(target)], capsys)
    assert code == 0 and out == ""
    doc = json.loads(target.read_text())
    assert doc["metadata"]["scenario"] == "spectrum"
    assert doc["metadata"]["certified"] is True
    assert doc["columns"]["E_plus"][0] == pytest.approx(0.1 + 0.8)


def test_sweep_merges_in_order(tmp_path, capsys):
    text = "[params]\na = 1\nb = [0, 0.3, 0.6]\n"
    code, out, _ = run_cli(["spectrum", "--config", write(tmp_path, text)], capsys)
    assert code == 0
    table = rows(out)
    assert [int(r["sweep_index"]) for r in table] == [0, 1, 2]
    assert [float(r["params.b"]) for r in table] == [0.0, 0.3, 0.6]
    assert [float(r["E_plus"]) for r in table] == pytest.approx([1.0, math.sqrt(0.91), 0.8])


def test_exit_codes(tmp_path, capsys):
    assert run_cli(["nonsense", "--config", write(tmp_path, BERRY)], capsys)[0] == 2
    code, _, err = run_cli(["berry", "--config", write(tmp_path, "[params]\nb = 2\n")], capsys)
    assert code == 2 and "b" in err
    code, _, err = run_cli(["cho", "--config", write(tmp_path, "[params]\nX = 1\n")], capsys)
    assert code == 2 and "params.Y" in err
    assert run_cli(["berry", "--config", str(tmp_path / "missing.ini")], capsys)[0] == 4
    assert run_cli(["berry", "--config", write(tmp_path, BERRY),
                    "--out", str(tmp_path / "no" / "dir.csv")], capsys)[0] == 4
    tight = "[params]\na = 1\nb = 0.6\n[path]\nvariable = circle\ncenter_theta = 1\ncenter_phi = 0\n" \
            "radius = 0.5\nduration = 5\nsamples = 20\n[numeric]\ndrift_tolerance = 1e-300\n"
    code, out, err = run_cli(["propagate", "--config", write(tmp_path, tight)], capsys)
    assert code == 3 and "certified" in err
    assert "# certified: false" in out


def test_steps_and_seed_flags(tmp_path, capsys):
    text = ("[params]\na = 1\nb = 0.6\n[path]\nvariable = circle\ncenter_theta = 1\ncenter_phi = 0\n"
            "radius = 0.5\nduration = 5\nsamples = 200\n[numeric]\ninitial = random\n")
    path = write(tmp_path, text)
    a = run_cli(["propagate", "--config", path, "--seed", "3", "--steps", "300"], capsys)[1]
    b = run_cli(["propagate", "--config", path, "--seed", "4", "--steps", "300"], capsys)[1]
    assert cli.data_section(a) != cli.data_section(b)
    assert cli.config_from_csv(a).numeric == {"initial": "random", "seed": 3, "steps": 300}
    code, _, _ = run_cli(["spectrum", "--config", str(CONFIGS / "spectrum.ini"), "--steps", "5"], capsys)
    assert code == 0


def test_log_level_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PTQM_LOG", "info")
    _, _, err = run_cli(["spectrum", "--config", str(CONFIGS / "spectrum.ini")], capsys)
    assert "wrote 1 rows" in err
    monkeypatch.setenv("PTQM_LOG", "quiet")
    _, _, err = run_cli(["spectrum", "--config", str(CONFIGS / "spectrum.ini")], capsys)
    assert err == ""


@pytest.mark.parametrize("name", ["spectrum", "berry_cap", "map", "cho"])
def test_shipped_configs_run(name, capsys):
    kind = cfgmod.load(CONFIGS / f"{name}.ini").kind
    assert run_cli([kind, "--config", str(CONFIGS / f"{name}.ini")], capsys)[0] == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ptqm", "spectrum", "--config",
                           str(CONFIGS / "spectrum.ini"), "--format", "json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["metadata"]["certified"] is True
