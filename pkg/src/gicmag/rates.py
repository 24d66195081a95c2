"""Component rates and the horizontal rate-of-change proxy dB_H/dt."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .timeseries import MalformedRowError, SeriesError, UniformSeries, format_float, parse_float

RATE_HEADER = ("t_ms", "dbh_dt_nts")


@dataclass(frozen=True, eq=False)
class RateSeries:
    """Rates in nT/s. Each value is stamped at the later sample of its pair."""

    start_t: int
    dt_s: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise SeriesError("rate values must be one-dimensional")
        if not self.dt_s > 0:
            raise SeriesError(f"dt_s must be positive, got {self.dt_s}")
        if not np.isfinite(v).all():
            raise SeriesError("rate series contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def t_ms(self) -> np.ndarray:
        idx = np.arange(len(self), dtype=np.float64)
        return self.start_t + np.round(idx * (self.dt_s * 1000.0)).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, RateSeries):
            return NotImplemented
        return (self.start_t == other.start_t and self.dt_s == other.dt_s
                and np.array_equal(self.values, other.values))


def finite_diff(values, dt_s: float) -> np.ndarray:
    """Forward difference ``(v[i+1] - v[i]) / dt_s``."""
    v = np.asarray(values, dtype=np.float64)
    if not dt_s > 0:
        raise ValueError(f"dt_s must be positive, got {dt_s}")
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("need at least 2 values")
    return (v[1:] - v[:-1]) / dt_s


def horizontal_magnitude(dx, dy) -> np.ndarray:
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if dx.shape != dy.shape:
        raise ValueError(f"length mismatch: {dx.shape} vs {dy.shape}")
    return np.sqrt(dx * dx + dy * dy)


def horizontal_rate(dx, dy, start_t: int = 0, dt_s: float = 1.0) -> RateSeries:
    return RateSeries(start_t, dt_s, horizontal_magnitude(dx, dy))


def derive_rate(series: UniformSeries) -> RateSeries:
    """dB_H/dt of a component series, on the grid of its later samples."""
    if len(series) < 2:
        raise ValueError("need at least 2 samples")
    dx = finite_diff(series.x, series.dt_s)
    dy = finite_diff(series.y, series.dt_s)
    return horizontal_rate(dx, dy, int(series.t_ms[1]), series.dt_s)


def emit_rate_csv(rate: RateSeries, sink) -> None:
    sink.write(",".join(RATE_HEADER) + "\n")
    for t, v in zip(rate.t_ms.tolist(), rate.values.tolist()):
        sink.write(f"{t},{format_float(v)}\n")


def write_rate(rate: RateSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        emit_rate_csv(rate, fh)


def read_rate(path) -> RateSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_rate_csv(fh)


def parse_rate_csv(source) -> RateSeries:
    if isinstance(source, (bytes, str)):
        source = io.StringIO(source.decode("utf-8") if isinstance(source, bytes) else source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != RATE_HEADER:
        raise MalformedRowError(1, f"expected header {','.join(RATE_HEADER)}")
    ts, vs = [], []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedRowError(line, f"expected 2 fields, got {len(row)}")
        try:
            ts.append(int(row[0]))
        except ValueError:
            raise MalformedRowError(line, f"cannot parse t_ms={row[0]!r}") from None
        vs.append(parse_float(row[1], line, "dbh_dt_nts"))
    if not ts:
        raise SeriesError("rate file has no rows")
    if len(ts) == 1:
        return RateSeries(ts[0], 1.0, vs)
    gaps = np.diff(ts)
    if (gaps != gaps[0]).any() or gaps[0] <= 0:
        i = int(np.flatnonzero(gaps != gaps[0])[0]) + 1 if (gaps != gaps[0]).any() else 1
        raise SeriesError(f"non-uniform rate cadence at index {i}")
    return RateSeries(ts[0], gaps[0] / 1000.0, vs)


def align(a: RateSeries, b: RateSeries) -> tuple[RateSeries, RateSeries]:
    """Crop two same-cadence rate series to their common time span."""
    if not math.isclose(a.dt_s, b.dt_s, rel_tol=1e-9):
        raise ValueError(f"cadence mismatch: {a.dt_s} vs {b.dt_s}")
    ta, tb = a.t_ms, b.t_ms
    start = max(ta[0], tb[0])
    stop = min(ta[-1], tb[-1])
    if start > stop:
        raise ValueError("rate series do not overlap")
    ia = np.searchsorted(ta, [start, stop])
    ib = np.searchsorted(tb, [start, stop])
    if ta[ia[0]] != start or tb[ib[0]] != start:
        raise ValueError("rate series grids are offset from each other")
    return (RateSeries(int(start), a.dt_s, a.values[ia[0]:ia[1] + 1]),
            RateSeries(int(start), b.dt_s, b.values[ib[0]:ib[1] + 1]))
