import json
import re

import numpy as np
import pytest

from gicmag.cli import main
from gicmag.rates import RateSeries, write_rate
from gicmag.synth import SynthConfig, Storm
from gicmag.timeseries import UniformSeries, write_series

ERROR_LINE = re.compile(r'^error kind=(usage|validation|io) msg=".*"$')


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert ERROR_LINE.match(err[-1]), err
    # the message itself is one line and valid JSON
    json.loads(err[-1].split(" msg=", 1)[1])
    return err[-1]


@pytest.fixture
def small_day(tmp_path):
    cfg = SynthConfig(duration_s=4000, dt_s=2, baseline_x=(0, 3), baseline_y=(1, -2), noise_std_nt=0.05,
                      storms=(Storm(1000, 1500, 5.0, 200),), gain=(1.1, 0.9), offset=(10, -5), seed=3)
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert "kind=usage" in error_line(capsys)


def test_missing_required_flag(capsys):
    assert main(["fit-baseline", "--in", "x.csv"]) == 2
    error_line(capsys)


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "pipeline" in capsys.readouterr().out


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["fit-baseline", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")]) == 4
    assert "kind=io" in error_line(capsys)


def test_bad_parameter_is_validation_error(tmp_path, capsys):
    write_series(UniformSeries(0, 2.0, np.arange(10.0), np.zeros(10)), tmp_path / "in.csv")
    status = main(["fit-baseline", "--lambda", "-1", "--in", str(tmp_path / "in.csv"),
                   "--out", str(tmp_path / "o.csv")])
    assert status == 3
    assert "kind=validation" in error_line(capsys)


def test_non_uniform_input_is_validation_error(tmp_path, capsys):
    (tmp_path / "in.csv").write_text("t_ms,x_nt,y_nt\n0,1,1\n2000,1,1\n5000,1,1\n")
    assert main(["derive-rate", "--in", str(tmp_path / "in.csv"), "--out", str(tmp_path / "r.csv")]) == 3
    assert "index 2" in error_line(capsys)


def test_score_perfect_forecast(tmp_path, capsys):
    rng = np.random.default_rng(2)
    v = rng.uniform(0, 0.2, 600 * 6)
    v[[700, 1900, 3000]] = [0.5, 1.2, 2.0]
    write_rate(RateSeries(0, 2.0, v), tmp_path / "obs.csv")
    out = tmp_path / "report.json"
    assert main(["score", "--obs", str(tmp_path / "obs.csv"), "--forecast", str(tmp_path / "obs.csv"),
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [row["hss"] for row in doc["thresholds"]] == [1.0, 1.0, 1.0, 1.0]
    assert doc["window_samples"] == 600 and doc["n_windows"] == 6
    assert "HSS=1.0000" in capsys.readouterr().out


def test_score_threshold_flag(tmp_path):
    write_rate(RateSeries(0, 2.0, np.linspace(0, 1, 600)), tmp_path / "obs.csv")
    out = tmp_path / "report.json"
    assert main(["score", "--obs", str(tmp_path / "obs.csv"), "--forecast", str(tmp_path / "obs.csv"),
                 "--window-s", "100", "--thresholds", "0.25,0.5", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [row["threshold"] for row in doc["thresholds"]] == [0.25, 0.5]
    assert doc["window_samples"] == 50


def test_subcommands_are_idempotent(tmp_path, small_day):
    def run_all(d):
        d.mkdir()
        assert main(["synth", "--config", str(small_day), "--out-raw", str(d / "raw.csv"),
                     "--out-corrected", str(d / "truth.csv"), "--out-baseline", str(d / "bl.csv")]) == 0
        assert main(["fit-baseline", "--lambda", "1e8", "--in", str(d / "raw.csv"), "--out", str(d / "corr.csv"),
                     "--baseline-out", str(d / "fit.csv")]) == 0
        assert main(["derive-rate", "--in", str(d / "corr.csv"), "--out", str(d / "rate.csv")]) == 0
        cfg = d / "train.json"
        cfg.write_text(json.dumps({"max_epochs": 3, "window": 8}))
        assert main(["train", "--arch", "cnn", "--config", str(cfg), "--seed", "4", "--in", str(d / "raw.csv"),
                     "--target", str(d / "corr.csv"), "--out", str(d / "cnn.json")]) == 0
        assert main(["predict", "--model", str(d / "cnn.json"), "--in", str(d / "raw.csv"),
                     "--out", str(d / "pred.csv")]) == 0
        assert main(["replay", "--model", str(d / "cnn.json"), "--in", str(d / "raw.csv"),
                     "--log", str(d / "log.csv")]) == 0
        assert main(["derive-rate", "--in", str(d / "log.csv"), "--out", str(d / "rate_fc.csv")]) == 0
        assert main(["score", "--obs", str(d / "rate.csv"), "--forecast", str(d / "rate_fc.csv"),
                     "--window-s", "200", "--obs-series", str(d / "corr.csv"),
                     "--forecast-series", str(d / "log.csv"), "--out", str(d / "report.json")]) == 0
        return {p.name: p.read_bytes() for p in d.iterdir()}

    first = run_all(tmp_path / "a")
    second = run_all(tmp_path / "b")
    assert first == second
    assert first["pred.csv"] == first["log.csv"]
    doc = json.loads(first["report.json"])
    assert set(doc["nrmse"]) == {"x", "y"}


def test_train_rejects_unknown_config_key(tmp_path, small_day, capsys):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"momentum": 0.9}))
    assert main(["synth", "--config", str(small_day), "--out-raw", str(tmp_path / "raw.csv"),
                 "--out-corrected", str(tmp_path / "t.csv"), "--out-baseline", str(tmp_path / "b.csv")]) == 0
    assert main(["train", "--arch", "ann", "--config", str(cfg), "--in", str(tmp_path / "raw.csv"),
                 "--target", str(tmp_path / "t.csv"), "--out", str(tmp_path / "m.json")]) == 3
    assert "momentum" in error_line(capsys)


@pytest.mark.slow
def test_pipeline_equals_manual_composition(storm_run, tmp_path):
    out, _ = storm_run
    cfg = json.loads((out / "pipeline_config.json").read_text())
    m = tmp_path
    (m / "deploy_synth.json").write_text(json.dumps(cfg["deploy_synth"]))
    als = cfg["als"]
    als_flags = ["--lambda", repr(als["lam"]), "--p", repr(als["p"]), "--d", str(als["d"]),
                 "--max-iter", str(als["max_iter"]), "--tol", repr(als["tol"])]

    assert main(["synth", "--preset", "storm", "--seed", "1", "--out-raw", str(m / "raw.csv"),
                 "--out-corrected", str(m / "ct.csv"), "--out-baseline", str(m / "bt.csv")]) == 0
    assert main(["synth", "--config", str(m / "deploy_synth.json"), "--out-raw", str(m / "d_raw.csv"),
                 "--out-corrected", str(m / "d_ct.csv"), "--out-baseline", str(m / "d_bt.csv")]) == 0
    assert main(["fit-baseline", *als_flags, "--in", str(m / "raw.csv"), "--out", str(m / "corr.csv")]) == 0
    assert main(["fit-baseline", *als_flags, "--in", str(m / "d_raw.csv"), "--out", str(m / "d_corr.csv")]) == 0
    assert main(["derive-rate", "--in", str(m / "d_corr.csv"), "--out", str(m / "rate_obs.csv")]) == 0
    assert main(["train", "--arch", "ann", "--config", str(out / "train_config.json"), "--in", str(m / "raw.csv"),
                 "--target", str(m / "corr.csv"), "--out", str(m / "ann.json")]) == 0
    assert main(["replay", "--model", str(m / "ann.json"), "--in", str(m / "d_raw.csv"),
                 "--log", str(m / "log.csv")]) == 0
    assert main(["derive-rate", "--in", str(m / "log.csv"), "--out", str(m / "rate_ann.csv")]) == 0
    assert main(["score", "--obs", str(m / "rate_obs.csv"), "--forecast", str(m / "rate_ann.csv"),
                 "--obs-series", str(m / "d_corr.csv"), "--forecast-series", str(m / "log.csv"),
                 "--model-id", "ann", "--out", str(m / "report.json")]) == 0

    pairs = [("raw.csv", "train/raw.csv"), ("corr.csv", "train/corrected.csv"), ("d_raw.csv", "deploy/raw.csv"),
             ("d_corr.csv", "deploy/corrected.csv"), ("rate_obs.csv", "deploy/rate_obs.csv"),
             ("ann.json", "models/ann.json"), ("log.csv", "deploy/predictions_ann.csv"),
             ("rate_ann.csv", "deploy/rate_ann.csv"), ("report.json", "reports/report_ann.json")]
    for mine, theirs in pairs:
        assert (m / mine).read_bytes() == (out / theirs).read_bytes(), theirs
