"""Tick-by-tick emulation of on-device inference with an append-only log.

Each tick feeds one raw sample to the model, derives the running dB_H/dt
from the two most recent predictions and appends one CSV record to the
log, flushed before the next tick is consumed. ``NA`` marks absent values:
predictions during the CNN warm-up, and the rate until two predictions
exist.
"""

from __future__ import annotations

import io
import logging
import math
import os
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .neural.model import ModelBundle, predict_denorm, predict_series
from .rates import horizontal_magnitude
from .timeseries import UniformSeries, format_float

log = logging.getLogger(__name__)

LOG_HEADER = "t_ms,x_nt,y_nt,xhat_nt,yhat_nt,dbh_dt_nts"
NA = "NA"


class LogWriteError(OSError):
    def __init__(self, last_tick: Optional[int], cause: Exception):
        super().__init__(f"log write failed after tick {last_tick}: {cause}")
        self.last_tick = last_tick


class LogCorruptError(ValueError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"corrupt log record at byte {offset}: {reason}")
        self.offset = offset


@dataclass(frozen=True)
class ReplayConfig:
    tick_s: float = 2.0
    pacing: str = "logical"
    log_path: Optional[str] = None
    fsync: bool = False

    def __post_init__(self):
        if not self.tick_s > 0:
            raise ValueError("tick_s must be positive")
        if self.pacing not in ("logical", "wall"):
            raise ValueError(f"pacing must be 'logical' or 'wall', got {self.pacing!r}")


@dataclass(frozen=True)
class PredictionRecord:
    t: int
    x: float
    y: float
    xhat: Optional[float] = None
    yhat: Optional[float] = None
    dbh_dt: Optional[float] = None

    def to_line(self) -> str:
        def fmt(v):
            return NA if v is None else format_float(v)
        return f"{self.t},{fmt(self.x)},{fmt(self.y)},{fmt(self.xhat)},{fmt(self.yhat)},{fmt(self.dbh_dt)}\n"

    @classmethod
    def from_line(cls, line: str, offset: int) -> "PredictionRecord":
        fields = line.split(",")
        if len(fields) != 6:
            raise LogCorruptError(offset, f"expected 6 fields, got {len(fields)}")
        try:
            t = int(fields[0])
            vals = [None if f == NA else float(f) for f in fields[1:]]
        except ValueError as exc:
            raise LogCorruptError(offset, str(exc)) from None
        if vals[0] is None or vals[1] is None:
            raise LogCorruptError(offset, "raw components may not be NA")
        if any(v is not None and not math.isfinite(v) for v in vals):
            raise LogCorruptError(offset, "non-finite value")
        if (vals[2] is None) != (vals[3] is None):
            raise LogCorruptError(offset, "prediction partially absent")
        return cls(t, *vals)


@dataclass(frozen=True)
class LogContents:
    records: list
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _ticks(raw: UniformSeries) -> Iterator[tuple]:
    yield from zip(raw.t_ms.tolist(), raw.x.tolist(), raw.y.tolist())


class _Pacer:
    def __init__(self, cfg: ReplayConfig):
        self.cfg = cfg
        self.t0 = None
        self.k = 0

    def wait(self):
        if self.cfg.pacing == "logical":
            return
        now = time.monotonic()
        if self.t0 is None:
            self.t0 = now
        else:
            deadline = self.t0 + self.k * self.cfg.tick_s
            if deadline > now:
                time.sleep(deadline - now)
        self.k += 1


def replay(raw: UniformSeries, bundle: ModelBundle, cfg: ReplayConfig = ReplayConfig(),
           on_record: Optional[Callable[[PredictionRecord], None]] = None) -> list:
    """Stream ``raw`` through ``bundle`` one sample per tick.

    A rolling window of the last ``input_window`` raw samples feeds the model.
    The rate uses a forward difference over ``tick_s``.
    """
    W = bundle.spec.input_window
    window = deque(maxlen=W)
    pacer = _Pacer(cfg)
    records = []
    prev = None
    sink = None
    last_tick = None
    if cfg.log_path is not None:
        sink = open(cfg.log_path, "w", encoding="utf-8", newline="")
    try:
        if sink is not None:
            sink.write(LOG_HEADER + "\n")
            sink.flush()
        for t, x, y in _ticks(raw):
            pacer.wait()
            window.append((x, y))
            xhat = yhat = rate = None
            if len(window) == W:
                pred = predict_denorm(bundle, np.array(window)[None, :, :])
                xhat, yhat = float(pred[0, 0]), float(pred[0, 1])
                if prev is not None:
                    dx = (xhat - prev[0]) / cfg.tick_s
                    dy = (yhat - prev[1]) / cfg.tick_s
                    rate = float(horizontal_magnitude(np.array([dx]), np.array([dy]))[0])
                prev = (xhat, yhat)
            rec = PredictionRecord(t, x, y, xhat, yhat, rate)
            if sink is not None:
                try:
                    sink.write(rec.to_line())
                    sink.flush()
                    if cfg.fsync:
                        os.fsync(sink.fileno())
                except OSError as exc:
                    raise LogWriteError(last_tick, exc) from exc
            last_tick = t
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    finally:
        if sink is not None:
            sink.close()
    return records


def offline_records(raw: UniformSeries, bundle: ModelBundle, tick_s: Optional[float] = None) -> list:
    """Batch counterpart of :func:`replay`, without pacing or a log."""
    tick_s = raw.dt_s if tick_s is None else tick_s
    xhat, yhat = predict_series(bundle, raw)
    valid = ~np.isnan(xhat)
    rate = np.full(len(raw), np.nan)
    both = valid[1:] & valid[:-1]
    dx = (xhat[1:] - xhat[:-1]) / tick_s
    dy = (yhat[1:] - yhat[:-1]) / tick_s
    rate[1:][both] = horizontal_magnitude(dx[both], dy[both])
    out = []
    for t, x, y, a, b, r in zip(raw.t_ms.tolist(), raw.x.tolist(), raw.y.tolist(),
                                xhat.tolist(), yhat.tolist(), rate.tolist()):
        out.append(PredictionRecord(t, x, y, None if math.isnan(a) else a,
                                    None if math.isnan(b) else b, None if math.isnan(r) else r))
    return out


def write_log(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(LOG_HEADER + "\n")
        for rec in records:
            fh.write(rec.to_line())


def parse_log(data: bytes) -> LogContents:
    """Parse log bytes; a torn final record is dropped and flagged."""
    if not data:
        return LogContents([], False)
    header_end = data.find(b"\n")
    if header_end < 0:
        return LogContents([], True)
    if data[:header_end].decode("utf-8", "replace") != LOG_HEADER:
        raise LogCorruptError(0, "unexpected header")
    records = []
    pos = header_end + 1
    while pos < len(data):
        end = data.find(b"\n", pos)
        if end < 0:
            return LogContents(records, True)
        try:
            line = data[pos:end].decode("utf-8")
        except UnicodeDecodeError:
            raise LogCorruptError(pos, "invalid UTF-8") from None
        records.append(PredictionRecord.from_line(line, pos))
        pos = end + 1
    return LogContents(records, False)


def read_log(source) -> LogContents:
    if isinstance(source, (bytes, bytearray)):
        return parse_log(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_log(fh.read())
    data = source.read()
    return parse_log(data.encode("utf-8") if isinstance(data, str) else data)


def records_to_series(records, label: str = "predictions") -> UniformSeries:
    """Predicted components over the records that carry a prediction."""
    rows = [r for r in records if r.xhat is not None]
    if len(rows) < 2:
        raise ValueError("need at least 2 predicted records")
    gaps = {b.t - a.t for a, b in zip(rows, rows[1:])}
    if len(gaps) != 1:
        raise ValueError("predicted records are not evenly spaced")
    return UniformSeries(rows[0].t, gaps.pop() / 1000.0, [r.xhat for r in rows], [r.yhat for r in rows], label)


def log_bytes(records) -> bytes:
    buf = io.StringIO()
    buf.write(LOG_HEADER + "\n")
    for rec in records:
        buf.write(rec.to_line())
    return buf.getvalue().encode("utf-8")
