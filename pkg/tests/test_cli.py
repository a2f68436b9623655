import csv
import json
import os

import numpy as np
import pytest

from kreinkg.cli import main
from kreinkg.config import ConfigError, parse_config
from kreinkg.fileio import read_matrix, write_matrix

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
EXACT = 1e-12


def cfg(name):
    return os.path.join(CONFIGS, name)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, command, config, *extra):
    out = tmp_path / command
    code = main([command, "--config", config, "--out", str(out), *extra])
    return code, out


# ---------------------------------------------------------------- config validation

def test_config_error_names_line_and_field():
    text = "[run]\ncommand = spectrum\n\n[model]\nkind = flat\nn = 4\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 6 and info.value.field == "model.n"


@pytest.mark.parametrize("text, field", [
    ("[model]\nkind = torus\n", "model.kind"),
    ("[model]\nkind = flat\nn = 32\nbox_radius = -1\n", "model.box_radius"),
    ("[analysis]\ndelta = 2\n", "analysis.delta"),
    ("[analysis]\neps = 0.1 0.2\n", "analysis.eps"),
    ("[model]\nwhatever = 1\n", "model.whatever"),
])
def test_config_rejects(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nkind = flat\nn = 4\n")
    code, _ = run(tmp_path, "spectrum", str(bad))
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_command_mismatch(tmp_path):
    code, _ = run(tmp_path, "lap", cfg("spectrum_scalar.ini"))
    assert code == 2


# ---------------------------------------------------------------- matrix files

def test_matrix_roundtrip(tmp_path):
    A = np.random.default_rng(0).normal(size=(3, 4)) + 1j * np.random.default_rng(1).normal(
        size=(3, 4))
    p = tmp_path / "a.mat"
    write_matrix(p, A)
    assert np.array_equal(read_matrix(p), A)


def test_matrix_bad_file(tmp_path):
    from kreinkg.errors import InputError
    p = tmp_path / "a.mat"
    p.write_text("2 2\n1 0\n")
    with pytest.raises(InputError):
        read_matrix(p)


# ---------------------------------------------------------------- commands

def test_spectrum_scalar(tmp_path):
    code, out = run(tmp_path, "spectrum", cfg("spectrum_scalar.ini"))
    assert code == 0
    table = rows(out / "spectrum.csv")
    for op in ("H", "K"):
        got = sorted((complex(float(r["re"]), float(r["im"])) for r in table
                     if r["operator"] == op), key=lambda z: z.imag)
        assert np.allclose(got, [1 - 1j, 1 + 1j], atol=EXACT)
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("config_hash", "seed", "toolkit_version", "workers", "stages_seconds"):
        assert key in manifest
    assert manifest["exit_code"] == 0
    summary = (out / "summary.txt").read_text().splitlines()
    assert all(line.split()[0] in ("PASS", "NOTE") for line in summary)


def test_lap_eigenvalue_refused(tmp_path, capsys):
    code, out = run(tmp_path, "lap", cfg("lap_eigenvalue.ini"))
    assert code == 2
    err = capsys.readouterr().err
    assert "eigenvalue" in err
    log = (out / "run.log").read_text()
    assert '"error": "PreconditionError"' in log


def test_definitize_scalar(tmp_path):
    code, out = run(tmp_path, "definitize", cfg("definitize_scalar.ini"))
    assert code == 0
    first = rows(out / "definitize.csv")[0]
    coef = [float(c) for c in first["coefficients"].split()]
    assert np.allclose(coef, [2, -2, 1], atol=1e-10) and first["verified"] == "1"


def test_model_dump(tmp_path):
    code, out = run(tmp_path, "model-dump", cfg("model_dump.ini"))
    assert code == 0
    mats = sorted(p for p in os.listdir(out) if p.endswith(".mat"))
    assert mats
    for name in mats:
        assert np.isfinite(read_matrix(out / name)).all()


@pytest.mark.parametrize("name, command", [
    ("spectrum_scalar.ini", "spectrum"),
    ("pencil_free.ini", "pencil"),
    ("calculus_bump.ini", "calculus"),
])
def test_workers_do_not_change_outputs(tmp_path, name, command):
    a = tmp_path / "w1"
    b = tmp_path / "w4"
    assert main([command, "--config", cfg(name), "--out", str(a), "--workers", "1"]) == 0
    assert main([command, "--config", cfg(name), "--out", str(b), "--workers", "4"]) == 0
    csvs = sorted(p for p in os.listdir(a) if p.endswith(".csv"))
    assert csvs
    for p in csvs:
        assert (a / p).read_bytes() == (b / p).read_bytes()
