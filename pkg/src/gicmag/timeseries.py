"""Two-component magnetic time series: containers, CSV interchange and splitting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, TextIO

import numpy as np

HEADER = ("t_ms", "x_nt", "y_nt")
CADENCE_RTOL = 1e-6


class SeriesError(ValueError):
    """Base class for invalid or malformed series data."""


class MalformedRowError(SeriesError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonUniformCadenceError(SeriesError):
    def __init__(self, index: int, gap_ms: float, expected_ms: float):
        super().__init__(
            f"non-uniform cadence at index {index}: gap {gap_ms:g} ms, expected {expected_ms:g} ms"
        )
        self.index = index


class NonFiniteValueError(SeriesError):
    def __init__(self, line: int, column: str):
        super().__init__(f"line {line}: non-finite value in column {column}")
        self.line = line
        self.column = column


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MagSample:
    t: int
    x: float
    y: float

    def __post_init__(self):
        if self.t < 0:
            raise SeriesError("sample time must be non-negative")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SeriesError("sample components must be finite")


@dataclass(frozen=True, eq=False)
class UniformSeries:
    """Fixed-cadence X/Y series in nT.

    Sample ``i`` is taken at ``start_t + round(i * dt_s * 1000)`` epoch
    milliseconds. Arrays are stored read-only.
    """

    start_t: int
    dt_s: float
    x: np.ndarray
    y: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 1 or y.ndim != 1:
            raise SeriesError("x and y must be one-dimensional")
        if len(x) != len(y):
            raise SeriesError(f"x and y lengths differ ({len(x)} != {len(y)})")
        if len(x) == 0:
            raise SeriesError("series is empty")
        if not (self.dt_s > 0 and math.isfinite(self.dt_s)):
            raise SeriesError(f"dt_s must be positive, got {self.dt_s}")
        if self.start_t < 0:
            raise SeriesError("start_t must be non-negative")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise SeriesError("series contains non-finite values")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def t_ms(self) -> np.ndarray:
        idx = np.arange(len(self), dtype=np.float64)
        return self.start_t + np.round(idx * (self.dt_s * 1000.0)).astype(np.int64)

    def samples(self) -> Iterable[MagSample]:
        for t, x, y in zip(self.t_ms.tolist(), self.x.tolist(), self.y.tolist()):
            yield MagSample(t, x, y)

    def slice(self, start: int, stop: int) -> "UniformSeries":
        t0 = int(self.t_ms[start])
        return UniformSeries(t0, self.dt_s, self.x[start:stop], self.y[start:stop], self.label)

    def with_values(self, x, y, label: str | None = None) -> "UniformSeries":
        return UniformSeries(self.start_t, self.dt_s, x, y, self.label if label is None else label)

    def __eq__(self, other):
        if not isinstance(other, UniformSeries):
            return NotImplemented
        return (
            self.start_t == other.start_t
            and self.dt_s == other.dt_s
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


def _as_text(source) -> TextIO:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRowError(line, f"cannot parse {column}={text!r}") from None
    if not math.isfinite(value):
        raise NonFiniteValueError(line, column)
    return value


def ingest_csv(source: BinaryIO | bytes, label: str = "") -> UniformSeries:
    """Parse a ``t_ms,x_nt,y_nt`` CSV into a :class:`UniformSeries`.

    The cadence is the (lower) median gap between timestamps; every gap must match
    it to within one part in a million.
    """
    reader = csv.reader(_as_text(source))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRowError(1, "missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise MalformedRowError(1, f"expected header {','.join(HEADER)}, got {','.join(header)}")

    ts, xs, ys = [], [], []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedRowError(line, f"expected 3 fields, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError:
            raise MalformedRowError(line, f"cannot parse t_ms={row[0]!r}") from None
        if t < 0:
            raise MalformedRowError(line, "t_ms must be non-negative")
        if ts and t <= ts[-1]:
            raise MalformedRowError(line, "t_ms not strictly increasing")
        ts.append(t)
        xs.append(parse_float(row[1], line, "x_nt"))
        ys.append(parse_float(row[2], line, "y_nt"))

    if len(ts) < 2:
        raise SeriesError(f"need at least 2 rows, got {len(ts)}")
    gaps = np.diff(np.asarray(ts, dtype=np.int64)).astype(np.float64)
    # lower median: with an even count an actual observed gap is the reference
    median = float(np.sort(gaps)[(len(gaps) - 1) // 2])
    bad = np.flatnonzero(np.abs(gaps - median) > CADENCE_RTOL * median)
    if bad.size:
        i = int(bad[0])
        raise NonUniformCadenceError(i + 1, gaps[i], median)
    return UniformSeries(ts[0], median / 1000.0, xs, ys, label)


def read_series(path, label: str | None = None) -> UniformSeries:
    with open(path, "rb") as fh:
        return ingest_csv(fh, label=str(path) if label is None else label)


def format_float(value: float) -> str:
    # repr gives the shortest string that round-trips to the same double
    return repr(float(value))


def emit_csv(series: UniformSeries, sink: TextIO) -> None:
    sink.write(",".join(HEADER) + "\n")
    for t, x, y in zip(series.t_ms.tolist(), series.x.tolist(), series.y.tolist()):
        sink.write(f"{t},{format_float(x)},{format_float(y)}\n")


def to_csv_bytes(series: UniformSeries) -> bytes:
    buf = io.StringIO()
    emit_csv(series, buf)
    return buf.getvalue().encode("utf-8")


def write_series(series: UniformSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        emit_csv(series, fh)


def pearson(a, b) -> float:
    """Pearson product-moment correlation of two equal-length sequences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least 2 values")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise ValueError("zero variance input")
    r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac_of_train: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if not 0.0 <= self.val_frac_of_train < 1.0:
            raise ValueError(f"val_frac_of_train must be in [0, 1), got {self.val_frac_of_train}")


@dataclass(frozen=True)
class SplitRanges:
    train: range
    validation: range
    test: range

    def as_dict(self) -> dict:
        return {k: [r.start, r.stop] for k, r in
                (("train", self.train), ("validation", self.validation), ("test", self.test))}


def _floor_frac(frac: float, n: int) -> int:
    # rounding first keeps e.g. 0.8 * 10 from flooring to 7
    return math.floor(round(frac * n, 9))


def split_indices(n: int, spec: SplitSpec) -> SplitRanges:
    """Chronological train/validation/test ranges over ``n`` samples."""
    n_fit = _floor_frac(spec.train_frac, n)
    n_val = _floor_frac(spec.val_frac_of_train, n_fit)
    ranges = SplitRanges(range(0, n_fit - n_val), range(n_fit - n_val, n_fit), range(n_fit, n))
    for name, r in (("train", ranges.train), ("validation", ranges.validation), ("test", ranges.test)):
        if len(r) == 0:
            raise ValueError(f"{name} range would be empty (n={n}, {spec})")
    return ranges


def split(inputs: UniformSeries, targets: UniformSeries, spec: SplitSpec) -> SplitRanges:
    if len(inputs) != len(targets):
        raise ValueError(f"inputs and targets differ in length ({len(inputs)} != {len(targets)})")
    return split_indices(len(inputs), spec)
