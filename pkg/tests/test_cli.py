import argparse
import csv
import json
import math

import pytest

from autores.cli import _build_parser, main
from autores.phase_model import bifurcation_delta


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out-dir", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_roots_example(tmp_path, capsys):
    code, out = run(tmp_path, "roots", "--lambda", "1", "--nu", "0", "--mu0", "0.5")
    assert code == 0
    listing = json.loads(capsys.readouterr().out)["roots"]
    assert [(r["sigma"], r["multiplicity"]) for r in listing] == [(0.0, 3), (math.pi, 1)]
    rows = list(csv.DictReader((out / "roots.csv").open()))
    assert float(rows[1]["sigma"]) == math.pi
    assert rows[1]["sigma"] == "3.1415926535897931"  # 17 significant digits
    assert "roots.csv" in manifest(out)["outputs"]


def test_partition_small_grid(tmp_path):
    code, out = run(tmp_path, "partition", "--nu-steps", "4", "--delta", "-1.5:1.5:0.25")
    assert code == 0
    rows = list(csv.DictReader((out / "partition.csv").open()))
    assert len(rows) == 4 * 13
    assert {"delta", "nu", "gamma", "region", "n_roots"} <= set(rows[0])
    for r in rows:
        g = float(r["gamma"])
        if abs(g) > 0.05:
            assert int(r["n_roots"]) == (4 if g > 0 else 2)


def test_rerun_gives_identical_checksums(tmp_path):
    argv = ["stability", "--mu0", "0.2", "--root", "1", "--samples", "2", "--horizon", "400",
            "--seed", "7"]
    code_a, a = run(tmp_path, *argv, name="a")
    code_b, b = run(tmp_path, *argv, "--threads", "1", name="b")
    assert code_a == code_b == 0
    ma, mb = manifest(a), manifest(b)
    assert ma["outputs"] == mb["outputs"]
    assert ma["config_hash"] == mb["config_hash"]
    assert ma["seed"] == 7


def test_json_format_and_series(tmp_path):
    code, out = run(tmp_path, "series", "--mu0", "0.2", "--root", "1", "--format", "json",
                    "--tau-points", "3")
    assert code == 0
    values = json.loads((out / "series_values.json").read_text())
    assert len(values) == 3 and set(values[0]) == {"tau", "rho", "psi", "trunc_rho", "trunc_psi"}
    report = json.loads((out / "series.json").read_text())
    assert report["case"] == "I" and report["psi_coeffs"][0] == pytest.approx(math.pi)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"params": {"lambda": 1.0, "nu": 0.0, "mu0": 0.3},
                               "io": {"format": "json"}, "seed": 5}))
    code, out = run(tmp_path, "roots", "--config", str(cfg), "--mu0", "0.5")
    assert code == 0
    conf = manifest(out)["config"]
    assert conf["mu0"] == 0.5 and conf["format"] == "json" and conf["seed"] == 5
    assert (out / "roots.json").exists()


@pytest.mark.parametrize("content", ['{"params": {"lambda": 1.0,, }}', '{"bogus": 1}',
                                     '{"mu0": "abc"}', '{"seed": 1.5}', "[1, 2]"])
def test_config_errors_exit_2(tmp_path, content, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(content)
    code, _ = run(tmp_path, "roots", "--config", str(cfg))
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_config_error_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "mu0": 0.5,\n  oops\n}')
    assert run(tmp_path, "roots", "--config", str(cfg))[0] == 2
    assert "bad.json:3:" in capsys.readouterr().err


def test_invalid_parameters_exit_2(tmp_path):
    assert run(tmp_path, "roots", "--nu", "4")[0] == 2
    assert run(tmp_path, "series", "--mu0", "0.2", "--root", "9")[0] == 2
    assert run(tmp_path, "roots", "--format", "xml")[0] == 2
    assert run(tmp_path, "partition", "--delta", "1:0:0.1")[0] == 2


def test_computation_error_exits_1(tmp_path, capsys):
    nu = math.pi / 6
    d = bifurcation_delta(nu)
    # on the upper curve the double root has P'' > 0: no real particular solution
    code, _ = run(tmp_path, "series", "--nu", repr(nu), "--mu0", repr(d), "--root", "2")
    err = capsys.readouterr().err
    assert code == 1
    assert "NoRealBranch" in err


def test_out_dir_falls_back_to_environment(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("AUTORES_OUT", str(target))
    assert main(["roots"]) == 0
    assert (target / "manifest.json").exists()


def test_every_flag_is_documented_with_its_default():
    parser = _build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    assert set(sub.choices) == {"roots", "partition", "series", "simulate", "capture-map",
                                "oscillator-demo", "stability", "portrait", "action-angle",
                                "envelope"}
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            if action.dest == "help":
                continue
            assert action.help, (name, action.dest)
            assert action.option_strings[0] in text
            if not isinstance(action, argparse._StoreTrueAction):
                assert "%(default)" not in action.help
        assert text.count("(default:") >= len(p._actions) - 2


def test_portrait_and_action_angle(tmp_path):
    code, out = run(tmp_path, "portrait", "--n-r", "5", "--n-psi", "7", name="portrait")
    assert code == 0
    pts = json.loads((out / "critical_points.json").read_text())["points"]
    assert {p["kind"] for p in pts} == {"Saddle", "Degenerate"}
    code, out = run(tmp_path, "action-angle", "--levels", "4", name="aa")
    assert code == 0
    summary = json.loads((out / "action_angle_summary.json").read_text())
    assert summary["I_star"] > 0 and summary["mu0"] < 0


def test_simulate_and_capture_map(tmp_path):
    code, out = run(tmp_path, "simulate", "--mu0", "0.2", "--rho0", "1.0", "--psi0", "3.0",
                    "--tau-end", "100", name="sim")
    assert code == 0
    assert json.loads((out / "verdict.json").read_text())["verdict"] in {
        "Captured", "NotCaptured", "Undecided"}
    code, out = run(tmp_path, "capture-map", "--n-rho", "2", "--n-psi", "2", "--horizon", "50",
                    name="cm")
    assert code == 0
    assert len((out / "capture_map.csv").read_text().splitlines()) == 5
