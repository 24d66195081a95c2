"""End-to-end workflow: synthesize, correct, train, replay, derive, score.

Every step reads and writes the same files as the matching CLI subcommand,
so a ``pipeline`` run can be reproduced one subcommand at a time.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .als import AlsParams, als_fit, subtract_baseline
from .evaluation import EventConfig, SkillReport, event_report, nrmse
from .neural import (ModelBundle, TrainConfig, build_dataset, component_nrmse, default_spec, load_bundle,
                     save_bundle, train)
from .rates import RateSeries, align, derive_rate, read_rate, write_rate
from .replay import ReplayConfig, offline_records, read_log, records_to_series, replay, write_log
from .synth import SynthConfig, generate, storm_peak_rates
from .timeseries import SplitSpec, UniformSeries, format_float, read_series, split, write_series

log = logging.getLogger(__name__)

PRESETS = ("storm",)


@dataclass(frozen=True)
class PipelineConfig:
    synth: SynthConfig
    deploy_synth: SynthConfig
    als: AlsParams = AlsParams()
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    cnn_window: int = 16
    event: EventConfig = EventConfig()
    replay: ReplayConfig = ReplayConfig()
    architectures: tuple = ("ann", "cnn")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Thread one seed into both synthetic days and training."""
        return replace(self, synth=self.synth.with_seed(seed), deploy_synth=self.deploy_synth.with_seed(seed + 1),
                       train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        return {
            "synth": self.synth.to_dict(),
            "deploy_synth": self.deploy_synth.to_dict(),
            "als": {"lam": self.als.lam, "p": self.als.p, "d": self.als.d,
                    "max_iter": self.als.max_iter, "tol": self.als.tol},
            "split": {"train_frac": self.split.train_frac, "val_frac_of_train": self.split.val_frac_of_train},
            "train": self.train.to_dict(),
            "cnn_window": self.cnn_window,
            "event": {"window_s": self.event.window_s, "thresholds": list(self.event.thresholds)},
            "replay": {"tick_s": self.replay.tick_s, "pacing": self.replay.pacing},
            "architectures": list(self.architectures),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {"synth", "deploy_synth", "als", "split", "train", "cnn_window", "event", "replay", "architectures"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        synth = SynthConfig.from_dict(doc["synth"])
        deploy = SynthConfig.from_dict(doc["deploy_synth"]) if "deploy_synth" in doc else synth.with_seed(synth.seed + 1)
        return cls(
            synth=synth,
            deploy_synth=deploy,
            als=AlsParams(**doc.get("als", {})),
            split=SplitSpec(**doc.get("split", {})),
            train=TrainConfig.from_dict(doc.get("train", {})),
            cnn_window=int(doc.get("cnn_window", 16)),
            event=EventConfig(**doc.get("event", {})),
            replay=ReplayConfig(**doc.get("replay", {})),
            architectures=tuple(doc.get("architectures", ("ann", "cnn"))),
        )


def load_preset(name: str) -> PipelineConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("gicmag.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return PipelineConfig.from_dict(json.loads(text))


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_dict(json.load(fh))


def write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- steps shared with the CLI subcommands ---------------------------------

def synth_step(cfg: SynthConfig, out_raw, out_corrected, out_baseline):
    raw, corrected, baseline = generate(cfg)
    peaks = storm_peak_rates(corrected, cfg)
    for storm, peak in zip(cfg.storms, peaks):
        log.info("storm at %.0f s (%.3g nT): peak dB_H/dt %.3f nT/s", storm.onset_s, storm.amplitude_nt, peak)
    write_series(raw, out_raw)
    write_series(corrected, out_corrected)
    write_series(baseline, out_baseline)
    return raw, corrected, baseline


def fit_baseline_step(params: AlsParams, in_path, out_path, baseline_out=None):
    raw = read_series(in_path)
    fits = [als_fit(raw.x, params), als_fit(raw.y, params)]
    for name, fit in zip("xy", fits):
        if not fit.converged:
            log.warning("ALS on %s did not converge in %d iterations", name, fit.iterations)
    corrected = raw.with_values(subtract_baseline(raw.x, fits[0].z), subtract_baseline(raw.y, fits[1].z),
                                label="baseline corrected")
    write_series(corrected, out_path)
    if baseline_out is not None:
        write_series(raw.with_values(fits[0].z, fits[1].z, label="baseline"), baseline_out)
    return corrected


def train_step(arch: str, config: TrainConfig, split_spec: SplitSpec, in_path, target_path, out_path,
               window: int = 16) -> ModelBundle:
    inputs = read_series(in_path)
    targets = read_series(target_path)
    if inputs.start_t != targets.start_t or inputs.dt_s != targets.dt_s:
        raise ValueError("input and target series are not aligned")
    spec = default_spec(arch, window)
    ranges = split(inputs, targets, split_spec)
    W = spec.input_window
    bundle = train(spec, build_dataset(inputs, targets, W, ranges.train),
                   build_dataset(inputs, targets, W, ranges.validation), config)
    bundle.meta["split"] = ranges.as_dict()
    bundle.meta["offline_nrmse"] = component_nrmse(bundle, build_dataset(inputs, targets, W, ranges.test))
    log.info("%s: best epoch %d, offline NRMSE x=%.4f y=%.4f", arch, bundle.history["best_epoch"],
             bundle.meta["offline_nrmse"]["x"], bundle.meta["offline_nrmse"]["y"])
    save_bundle(bundle, out_path)
    return bundle


def predict_step(model_path, in_path, out_path, tick_s: Optional[float] = None):
    bundle = load_bundle(model_path)
    raw = read_series(in_path)
    records = offline_records(raw, bundle, tick_s)
    write_log(records, out_path)
    return records


def replay_step(model_path, in_path, log_path, pacing: str = "logical", tick_s: float = 2.0):
    bundle = load_bundle(model_path)
    raw = read_series(in_path)
    return replay(raw, bundle, ReplayConfig(tick_s=tick_s, pacing=pacing, log_path=str(log_path)))


def read_components(path) -> UniformSeries:
    """Series CSV, or the predicted components of a prediction log."""
    with open(path, "rb") as fh:
        head = fh.readline()
    if head.startswith(b"t_ms,x_nt,y_nt,xhat_nt"):
        contents = read_log(path)
        if contents.truncated:
            log.warning("%s ends in a partial record; using the durable prefix", path)
        return records_to_series(contents.records)
    return read_series(path)


def derive_rate_step(in_path, out_path) -> RateSeries:
    rate = derive_rate(read_components(in_path))
    write_rate(rate, out_path)
    return rate


def _common_components(a: UniformSeries, b: UniformSeries):
    ta, tb = a.t_ms, b.t_ms
    start, stop = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    ia = np.searchsorted(ta, [start, stop])
    ib = np.searchsorted(tb, [start, stop])
    return (a.x[ia[0]:ia[1] + 1], a.y[ia[0]:ia[1] + 1]), (b.x[ib[0]:ib[1] + 1], b.y[ib[0]:ib[1] + 1])


def score_step(obs_path, fc_path, cfg: EventConfig, out_path, obs_series_path=None, fc_series_path=None,
               model_id: str = "") -> SkillReport:
    obs, fc = align(read_rate(obs_path), read_rate(fc_path))
    component = None
    if obs_series_path is not None and fc_series_path is not None:
        (ox, oy), (fx, fy) = _common_components(read_components(obs_series_path), read_components(fc_series_path))
        component = {"x": nrmse(fx, ox), "y": nrmse(fy, oy)}
    report = event_report(obs, fc, cfg, model=model_id, component_nrmse=component)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_json())
    return report


# -- end to end -------------------------------------------------------------

def _plot_rows(t_ms, columns) -> str:
    def fmt(v):
        return "NA" if np.isnan(v) else format_float(v)
    lines = []
    for i, t in enumerate(t_ms.tolist()):
        lines.append(",".join([str(t)] + [fmt(col[i]) for col in columns]))
    return "\n".join(lines) + "\n"


def _aligned(series: UniformSeries, t_ms: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.full(len(t_ms), np.nan)
    idx = np.searchsorted(t_ms, series.t_ms)
    out[idx] = values
    return out


def write_component_plot_data(corrected: UniformSeries, predictions: dict, path) -> None:
    """Time vs corrected and predicted X and Y, one column per model."""
    t = corrected.t_ms
    cols, names = [corrected.x], ["x_corrected_nt"]
    for arch, pred in predictions.items():
        cols.append(_aligned(pred, t, pred.x))
        names.append(f"xhat_{arch}_nt")
    cols.append(corrected.y)
    names.append("y_corrected_nt")
    for arch, pred in predictions.items():
        cols.append(_aligned(pred, t, pred.y))
        names.append(f"yhat_{arch}_nt")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t_ms," + ",".join(names) + "\n")
        fh.write(_plot_rows(t, cols))


def write_rate_plot_data(obs: RateSeries, forecasts: dict, path) -> None:
    t = obs.t_ms
    cols, names = [obs.values], ["dbh_dt_obs_nts"]
    for arch, rate in forecasts.items():
        out = np.full(len(t), np.nan)
        mask = np.isin(rate.t_ms, t)
        out[np.searchsorted(t, rate.t_ms[mask])] = rate.values[mask]
        cols.append(out)
        names.append(f"dbh_dt_{arch}_nts")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t_ms," + ",".join(names) + "\n")
        fh.write(_plot_rows(t, cols))


def write_history_plot_data(bundles: dict, path) -> None:
    n = max(len(b.history["val_loss"]) for b in bundles.values())
    cols, names = [], []
    for arch, b in bundles.items():
        for key in ("train_loss", "val_loss"):
            vals = np.full(n, np.nan)
            vals[:len(b.history[key])] = b.history[key]
            cols.append(vals)
            names.append(f"{arch}_{key}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch," + ",".join(names) + "\n")
        fh.write(_plot_rows(np.arange(1, n + 1), cols))


def train_config_doc(cfg: PipelineConfig) -> dict:
    """Contents of the ``train --config`` file equivalent to ``cfg``."""
    doc = cfg.train.to_dict()
    doc["split"] = {"train_frac": cfg.split.train_frac, "val_frac_of_train": cfg.split.val_frac_of_train}
    doc["window"] = cfg.cnn_window
    return doc


def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """Run the full workflow into ``out_dir``; returns the summary document."""
    out = Path(out_dir)
    for sub in ("train", "deploy", "models", "reports", "plots"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    write_json(cfg.to_dict(), out / "pipeline_config.json")
    write_json(train_config_doc(cfg), out / "train_config.json")

    tr, dp = out / "train", out / "deploy"
    synth_step(cfg.synth, tr / "raw.csv", tr / "corrected_truth.csv", tr / "baseline_truth.csv")
    fit_baseline_step(cfg.als, tr / "raw.csv", tr / "corrected.csv", tr / "baseline.csv")
    synth_step(cfg.deploy_synth, dp / "raw.csv", dp / "corrected_truth.csv", dp / "baseline_truth.csv")
    deploy_corrected = fit_baseline_step(cfg.als, dp / "raw.csv", dp / "corrected.csv", dp / "baseline.csv")
    obs_rate = derive_rate_step(dp / "corrected.csv", dp / "rate_obs.csv")

    bundles, predictions, forecasts, reports = {}, {}, {}, {}
    for arch in cfg.architectures:
        model_path = out / "models" / f"{arch}.json"
        bundles[arch] = train_step(arch, cfg.train, cfg.split, tr / "raw.csv", tr / "corrected.csv", model_path,
                                   window=cfg.cnn_window)
        log_path = dp / f"predictions_{arch}.csv"
        replay_step(model_path, dp / "raw.csv", log_path, cfg.replay.pacing, cfg.replay.tick_s)
        predictions[arch] = read_components(log_path)
        forecasts[arch] = derive_rate_step(log_path, dp / f"rate_{arch}.csv")
        reports[arch] = score_step(dp / "rate_obs.csv", dp / f"rate_{arch}.csv", cfg.event,
                                   out / "reports" / f"report_{arch}.json",
                                   dp / "corrected.csv", log_path, model_id=arch)

    write_component_plot_data(deploy_corrected, predictions, out / "plots" / "components.csv")
    write_rate_plot_data(obs_rate, forecasts, out / "plots" / "dbh_dt.csv")
    write_history_plot_data(bundles, out / "plots" / "training_history.csv")

    summary = {
        "models": {
            arch: {
                "offline_nrmse": bundles[arch].meta["offline_nrmse"],
                "realtime_nrmse": reports[arch].nrmse,
                "best_epoch": bundles[arch].history["best_epoch"],
                "epochs_run": len(bundles[arch].history["val_loss"]),
                "hss": {repr(s.threshold): s.hss for s in reports[arch].scores},
            }
            for arch in cfg.architectures
        },
        "window_s": cfg.event.window_s,
        "n_windows": next(iter(reports.values())).n_windows if reports else 0,
    }
    write_json(summary, out / "reports" / "summary.json")
    _write_summary_tables(summary, out / "reports")
    return summary


def _write_summary_tables(summary: dict, directory: Path) -> None:
    models = list(summary["models"])
    lines = ["model,component,realtime_nrmse,offline_nrmse"]
    for arch in models:
        m = summary["models"][arch]
        for comp in ("x", "y"):
            lines.append(f"{arch},{comp},{format_float(m['realtime_nrmse'][comp])},"
                         f"{format_float(m['offline_nrmse'][comp])}")
    (directory / "nrmse.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    lines = ["threshold_nts," + ",".join(f"hss_{a}" for a in models)]
    thresholds = list(summary["models"][models[0]]["hss"]) if models else []
    for thr in thresholds:
        vals = []
        for a in models:
            v = summary["models"][a]["hss"][thr]
            vals.append("NA" if v is None else format_float(v))
        lines.append(f"{thr}," + ",".join(vals))
    (directory / "hss.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


__all__ = [
    "PipelineConfig", "load_preset", "load_pipeline_config", "run_pipeline", "synth_step", "fit_baseline_step",
    "train_step", "predict_step", "replay_step", "derive_rate_step", "score_step", "train_config_doc",
]
