import os

import numpy as np
import pytest
import yaml

from kgscatter import cli, io
from kgscatter.errors import ConfigError
from kgscatter.scene import SceneConfig, builtin, validate

BUILTINS = ["empty", "ab_torus", "coulomb_gauge", "longrange_tail", "gaussian_electric", "inverse_power"]


@pytest.mark.parametrize("name", BUILTINS)
def test_config_round_trip_is_fixed_point(name):
    cfg = builtin(name)
    text = cfg.to_yaml()
    again = SceneConfig.from_yaml(text)
    assert again.to_yaml() == text
    assert again.to_dict() == yaml.safe_load(text)


def test_unknown_keys_and_contradictions_rejected():
    with pytest.raises(ConfigError):
        SceneConfig.from_dict({"dataset": {"bogus": 1}})
    with pytest.raises(ConfigError):
        builtin("gaussian_electric", flags={"A0_zero": True, "B_zero": True}).check()
    with pytest.raises(ConfigError):
        builtin("nope")


@pytest.mark.parametrize("name", ["ab_torus", "longrange_tail", "gaussian_electric", "inverse_power"])
def test_builtins_validate(name):
    results = validate(builtin(name))
    assert results and all(r.ok for r in results), [r for r in results if not r.ok]


def test_long_range_tail_tagged_short_range_fails_decay_check():
    cfg = builtin("longrange_tail")
    cfg.potentials[0]["tag"] = "SR"
    assert not all(r.ok for r in validate(cfg))


def test_fmt_and_csv_dialect(tmp_path):
    assert io.fmt(0.1) == "0.1"
    assert io.fmt(-0.0) == "0.0"
    assert io.fmt(np.float64(1e-20)) == "1e-20"
    assert io.fmt(float("nan")) == "nan"
    p = tmp_path / "t.csv"
    io.write_csv(p, ["a", "b"], [[1, 0.5], [2, -1.25]])
    raw = p.read_bytes()
    assert b"\r" not in raw
    assert raw == b"a,b\n1,0.5\n2,-1.25\n"
    cols = io.read_columns(p)
    assert np.array_equal(cols["b"], [0.5, -1.25])


def _write(cfg, path):
    path.write_text(cfg.to_yaml())
    return str(path)


def test_cli_validate_and_forward(tmp_path, capsys):
    conf = _write(builtin("ab_torus"), tmp_path / "ab.yaml")
    assert cli.main(["validate", "--config", conf]) == 0
    assert "PASS" in capsys.readouterr().out
    out = tmp_path / "o"
    assert cli.main(["forward", "--config", conf, "--out", str(out), "--seed", "3"]) == 0
    for f in ("xray.csv", "phases.csv", "flux.csv"):
        assert (out / f).exists()
    header, rows = io.read_csv(out / "phases.csv")
    assert header[:3] == ["dir", "s1", "s2"] and "theta_plus" in header
    flux = io.read_columns(out / "flux.csv")
    assert np.nanmax(np.abs(flux["F_h"])) == pytest.approx(np.pi / 3, abs=1e-8)
    assert cli.main(["export-plots", "--out", str(out)]) == 0
    assert (out / "plot_phases.csv").exists()


def test_cli_invert_products_and_refusal(tmp_path, capsys):
    cfg = builtin("longrange_tail")
    conf = _write(cfg, tmp_path / "lr.yaml")
    out = tmp_path / "o"
    assert cli.main(["invert", "--config", conf, "--out", str(out)]) == 0
    text = (out / "errors.txt").read_text()
    errs = dict(line.split("=") for line in text.strip().splitlines())
    assert max(float(v) for k, v in errs.items() if k.startswith("Phi_L")) < 1e-8
    assert max(float(v) for k, v in errs.items() if k.startswith("Ainf_sum")) < 1e-6
    cfg.inversion["products"] = ["Ainf"]
    conf = _write(cfg, tmp_path / "lr2.yaml")
    assert cli.main(["invert", "--config", conf, "--out", str(out)]) == 2
    assert "refused" in capsys.readouterr().out


def test_cli_verify_on_empty_scene_reports_degenerate_fit(tmp_path, capsys):
    cfg = builtin("inverse_power")
    cfg.potentials = []
    cfg.solver.update({"n": 128, "v_list": [4.0, 16.0], "resolution_check": False})
    conf = _write(cfg, tmp_path / "e.yaml")
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", conf, "--out", str(out)]) == 0
    assert "notice" in capsys.readouterr().out
    assert "degenerate=1" in (out / "verify.txt").read_text()
    assert (out / "run.csv").read_text().startswith("v,theta_plus_measured")


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert cli.main(["forward", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_thread_fallback(monkeypatch):
    args = cli.build_parser().parse_args(["validate"])
    monkeypatch.setenv("KGSCATTER_THREADS", "3")
    assert cli._threads(args) == 3
    args = cli.build_parser().parse_args(["validate", "--threads", "2"])
    assert cli._threads(args) == 2
