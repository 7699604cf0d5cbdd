import json
import subprocess
import sys

import numpy as np
import pytest

from freeconv import __version__, cli, linpen
from freeconv.ncexpr import parse

FIG3 = {
    "task": "density",
    "expression": "x*y+y*x+x^2",
    "variables": {"x": {"law": "semicircle"}, "y": {"law": "marchenko_pastur", "ratio": 0.25}},
    "grid": {"min": -4, "max": 10, "points": 400},
    "output": "fig3.csv",
}
FIG5 = {
    "task": "brown",
    "expression": "x+1i*y",
    "variables": {"x": {"law": "semicircle"}, "y": {"law": "semicircle"}},
    "grid": {"re": [-2, 2], "im": [-2, 2], "points": 101},
    "epsilon": 1e-3,
    "output": "fig5.csv",
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _summary(path):
    line = [l for l in path.read_text().splitlines() if l.startswith("# summary")][0]
    return dict(kv.split("=") for kv in line.split()[2:])


def test_selfcheck_passes_and_is_deterministic(capsys):
    assert cli.main(["selfcheck"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["selfcheck"]) == 0
    assert capsys.readouterr().out == first
    assert "FAIL" not in first and first.strip().endswith("selfcheck passed")


def test_selfcheck_tampered_tolerance_fails(capsys):
    assert cli.selfcheck(tolerance_scale=1e-30) == cli.EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out


def test_density_run(tmp_path, capsys):
    cfg = dict(FIG3, plot=True)
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    out = tmp_path / "fig3.csv"
    text = out.read_text().splitlines()
    assert text[0] == f"# freeconv {__version__}"
    assert text[1].startswith("# config-sha256 ") and text[3].startswith("# epsilon ")
    assert text[5] == "t,density"
    assert len([l for l in text if not l.startswith("#")]) == 401
    mass = float(_summary(out)["mass"])
    assert 0.98 <= mass <= 1.02
    assert (tmp_path / "fig3.gp").read_text().count("fig3.csv") == 1
    first = out.read_bytes()
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    assert out.read_bytes() == first


def test_brown_run(tmp_path):
    assert cli.main(["run", _write(tmp_path, FIG5)]) == 0
    out = tmp_path / "fig5.csv"
    summary = _summary(out)
    assert 0.9 <= float(summary["mass"]) <= 1.1 and summary["failed_nodes"] == "0"
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "re,im,density" and len(rows) == 1 + 101 * 101


def test_compare_run(tmp_path):
    cfg = dict(FIG3, task="compare", grid={"min": -4, "max": 10, "points": 200},
               rmt={"ensembles": {"x": {"kind": "wigner"}, "y": {"kind": "wishart", "ratio": 0.25}},
                    "N": 200, "trials": 2, "seed": 3})
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    assert "# distance ks=" in (tmp_path / "fig3.csv").read_text()
    spectrum = (tmp_path / "fig3.spectrum.csv").read_text().splitlines()
    assert len([l for l in spectrum if not l.startswith("#")]) == 400


def test_pencil_file_config(tmp_path):
    pen = linpen.linearize_sa(parse("x*y+y*x+x^2", ["x", "y"]))
    linpen.write_pencil(pen, tmp_path / "p.pen")
    cfg = dict(FIG3, grid={"min": -4, "max": 10, "points": 50})
    del cfg["expression"]
    cfg["pencil"] = "p.pen"
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0


@pytest.mark.parametrize(
    "patch, needle",
    [
        ({"variables": {"x": {"law": "semicirc"}, "y": {"law": "semicircle"}}}, "semicirc"),
        ({"grdi": {}}, "grdi"),
        ({"grid": {"min": 0, "max": 1, "points": 4}}, "points"),
        ({"expression": "x*y"}, "selfadjoint"),
        ({"expression": "x*+y"}, "expression"),
        ({"epsilon": [0.01, 0.02]}, "epsilon"),
        ({"solver": {"tol": -1}}, "solver"),
        ({"solver": {"tolerance": 1e-9}}, "tolerance"),
        ({"task": "plot"}, "task"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, patch, needle):
    cfg = dict(FIG3, **patch)
    assert cli.main(["run", _write(tmp_path, cfg)]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_and_bad_json(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = dict(FIG3, solver={"max_iter": 2})
    assert cli.main(["run", _write(tmp_path, cfg)]) == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "freeconv." in err


def test_verify_pencil_command(tmp_path, capsys, sym_pencil):
    good = tmp_path / "good.pen"
    linpen.write_pencil(sym_pencil, good)
    assert cli.main(["verify-pencil", str(good), "x*y+y*x+x^2"]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    c = sym_pencil.constant.copy()
    c[1, 2] = c[2, 1] = 1.0
    bad = tmp_path / "bad.pen"
    linpen.write_pencil(linpen.LinearPencil(3, c, sym_pencil.coeffs), bad)
    assert cli.main(["verify-pencil", str(bad), "x*y+y*x+x^2"]) == 1
    assert cli.main(["verify-pencil", str(good), "x*("]) == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "freeconv.cli", "selfcheck"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def test_threads_env_does_not_change_output(tmp_path, monkeypatch):
    cfg = dict(FIG3, grid={"min": -4, "max": 10, "points": 64}, solver={"chunk": 16})
    monkeypatch.setenv("FREECONV_THREADS", "1")
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    one = (tmp_path / "fig3.csv").read_bytes()
    monkeypatch.setenv("FREECONV_THREADS", "4")
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    assert (tmp_path / "fig3.csv").read_bytes() == one
