"""Command-line entry point.

Exit status: 0 on success, 2 for usage errors, 3 for invalid input or
configuration, 4 for I/O failures. Failures print one line to stderr of the
form ``error kind=<usage|validation|io> msg=<json string>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .als import AlsParams
from .evaluation import DEFAULT_THRESHOLDS, DEFAULT_WINDOW_S, EventConfig
from .neural import TrainConfig
from .pipeline import (PRESETS, derive_rate_step, fit_baseline_step, load_pipeline_config, load_preset,
                       predict_step, replay_step, run_pipeline, score_step, synth_step, train_step)
from .synth import load_synth_config
from .timeseries import SplitSpec

EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 2, 3, 4


class UsageError(Exception):
    pass


def _fail(kind: str, message: str) -> None:
    print(f"error kind={kind} msg={json.dumps(message)}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _thresholds(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid threshold list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gicmag", description="Magnetometer baseline correction, dB_H/dt forecasting and "
                                                "binary event verification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    D = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic raw/corrected/baseline day", formatter_class=D)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="synthetic-data config JSON")
    src.add_argument("--preset", choices=PRESETS, help="use the training day of a shipped preset")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-raw", required=True, help="raw sensor series CSV")
    p.add_argument("--out-corrected", required=True, help="corrected-truth series CSV")
    p.add_argument("--out-baseline", required=True, help="baseline-truth series CSV")

    p = sub.add_parser("fit-baseline", help="ALS baseline correction of both components", formatter_class=D)
    d = AlsParams()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="roughness penalty")
    p.add_argument("--p", type=float, default=d.p, help="asymmetry weight for points above the baseline")
    p.add_argument("--d", type=int, default=d.d, help="difference order")
    p.add_argument("--max-iter", type=int, default=d.max_iter, help="reweighting iteration cap")
    p.add_argument("--tol", type=float, default=d.tol, help="stop when at most this fraction of weights flip")
    p.add_argument("--in", dest="inp", required=True, help="input series CSV")
    p.add_argument("--out", required=True, help="corrected series CSV")
    p.add_argument("--baseline-out", default=None, help="optional fitted-baseline CSV")

    p = sub.add_parser("derive-rate", help="dB_H/dt from a series CSV or a prediction log", formatter_class=D)
    p.add_argument("--in", dest="inp", required=True, help="series CSV or prediction log")
    p.add_argument("--out", required=True, help="rate CSV (t_ms,dbh_dt_nts)")

    p = sub.add_parser("train", help="train an ANN or CNN regressor", formatter_class=D)
    p.add_argument("--arch", choices=("ann", "cnn"), required=True)
    p.add_argument("--config", default=None,
                   help="train JSON: Adam/batch/epoch fields plus optional 'split' and 'window'")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--in", dest="inp", required=True, help="raw input series CSV")
    p.add_argument("--target", required=True, help="baseline-corrected target series CSV")
    p.add_argument("--out", required=True, help="model bundle JSON")

    p = sub.add_parser("predict", help="offline batch prediction, written in the replay log format",
                       formatter_class=D)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tick-s", type=float, default=None, help="rate divisor; defaults to the input cadence")

    p = sub.add_parser("replay", help="tick-by-tick streaming inference with a durable log", formatter_class=D)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--log", required=True, help="prediction log CSV")
    p.add_argument("--pacing", choices=("logical", "wall"), default="logical")
    p.add_argument("--tick-s", type=float, default=2.0)

    p = sub.add_parser("score", help="binary event analysis and HSS", formatter_class=D)
    p.add_argument("--obs", required=True, help="observed rate CSV")
    p.add_argument("--forecast", required=True, help="forecast rate CSV")
    p.add_argument("--window-s", type=float, default=DEFAULT_WINDOW_S)
    p.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS,
                   help="comma-separated nT/s thresholds")
    p.add_argument("--obs-series", default=None, help="observed components, adds NRMSE to the report")
    p.add_argument("--forecast-series", default=None, help="forecast components or prediction log")
    p.add_argument("--model-id", default="")
    p.add_argument("--out", required=True, help="report JSON")

    p = sub.add_parser("pipeline", help="synth, fit-baseline, train, replay, derive-rate and score",
                       formatter_class=D)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS, default=None)
    src.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=None, help="one seed for synthetic data and training")
    p.add_argument("--out-dir", default="gicmag-out")
    return parser


def _train_config(path, seed):
    doc = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    split_doc = doc.pop("split", {})
    window = int(doc.pop("window", 16))
    cfg = TrainConfig.from_dict(doc)
    if seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
    return cfg, SplitSpec(**split_doc), window


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "synth":
        cfg = load_preset(args.preset).synth if args.preset else load_synth_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        synth_step(cfg, args.out_raw, args.out_corrected, args.out_baseline)
    elif cmd == "fit-baseline":
        params = AlsParams(lam=args.lam, p=args.p, d=args.d, max_iter=args.max_iter, tol=args.tol)
        fit_baseline_step(params, args.inp, args.out, args.baseline_out)
    elif cmd == "derive-rate":
        derive_rate_step(args.inp, args.out)
    elif cmd == "train":
        cfg, split_spec, window = _train_config(args.config, args.seed)
        train_step(args.arch, cfg, split_spec, args.inp, args.target, args.out, window=window)
    elif cmd == "predict":
        predict_step(args.model, args.inp, args.out, args.tick_s)
    elif cmd == "replay":
        replay_step(args.model, args.inp, args.log, args.pacing, args.tick_s)
    elif cmd == "score":
        cfg = EventConfig(window_s=args.window_s, thresholds=args.thresholds)
        report = score_step(args.obs, args.forecast, cfg, args.out, args.obs_series, args.forecast_series,
                            args.model_id)
        for s in report.scores:
            print(f"threshold {s.threshold:g} nT/s: H={s.table.h} M={s.table.m} F={s.table.f} N={s.table.n} "
                  f"HSS={'undefined' if s.hss is None else format(s.hss, '.4f')}")
    elif cmd == "pipeline":
        if args.config:
            cfg = load_pipeline_config(args.config)
        else:
            cfg = load_preset(args.preset or "storm")
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        summary = run_pipeline(cfg, args.out_dir)
        for arch, m in summary["models"].items():
            hss = ", ".join(f"{t}: {'NA' if v is None else format(v, '.3f')}" for t, v in m["hss"].items())
            print(f"{arch}: realtime NRMSE x={m['realtime_nrmse']['x']:.4f} y={m['realtime_nrmse']['y']:.4f}; "
                  f"HSS {hss}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _fail("usage", str(exc))
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except OSError as exc:
        _fail("io", str(exc))
        return EXIT_IO
    except (ValueError, KeyError, TypeError, RuntimeError) as exc:
        _fail("validation", str(exc))
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
