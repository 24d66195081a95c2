import time

import numpy as np
import pytest

from gicmag.neural import ModelBundle, Normalization, default_ann_spec, default_cnn_spec, init_params
from gicmag.replay import (LOG_HEADER, LogCorruptError, PredictionRecord, ReplayConfig, log_bytes,
                           offline_records, parse_log, read_log, records_to_series, replay)
from gicmag.timeseries import UniformSeries


def bundle_for(spec, seed=0):
    rng = np.random.default_rng(seed)
    norm = Normalization([100.0, -50.0], [20.0, 10.0], [1.0, -1.0], [3.0, 2.0])
    return ModelBundle(spec, init_params(spec, rng), norm)


def raw_series(n, seed=1):
    rng = np.random.default_rng(seed)
    return UniformSeries(1_000_000, 2.0, 100 + 20 * rng.normal(size=n), -50 + 10 * rng.normal(size=n))


def test_ann_three_samples():
    recs = replay(raw_series(3), bundle_for(default_ann_spec()))
    assert len(recs) == 3
    assert all(r.xhat is not None and r.yhat is not None for r in recs)
    assert recs[0].dbh_dt is None
    assert recs[1].dbh_dt is not None and recs[2].dbh_dt is not None
    assert [r.t for r in recs] == [1_000_000, 1_002_000, 1_004_000]


def test_cnn_warm_up():
    recs = replay(raw_series(20), bundle_for(default_cnn_spec(16)))
    assert all(r.xhat is None and r.dbh_dt is None for r in recs[:15])
    assert recs[15].xhat is not None and recs[15].dbh_dt is None
    assert all(r.dbh_dt is not None for r in recs[16:])


def test_rate_uses_tick():
    recs = replay(raw_series(4), bundle_for(default_ann_spec()), ReplayConfig(tick_s=4.0))
    a, b = recs[1], recs[2]
    expected = np.hypot((b.xhat - a.xhat) / 4.0, (b.yhat - a.yhat) / 4.0)
    assert b.dbh_dt == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("spec", [default_ann_spec(), default_cnn_spec(16)], ids=["ann", "cnn"])
def test_streaming_equals_offline_bitwise(spec):
    raw = raw_series(300, seed=4)
    bundle = bundle_for(spec, 3)
    streamed = replay(raw, bundle)
    batch = offline_records(raw, bundle)
    assert streamed == batch
    assert log_bytes(streamed) == log_bytes(batch)


def test_log_round_trip(tmp_path):
    path = tmp_path / "log.csv"
    recs = replay(raw_series(40), bundle_for(default_cnn_spec(16)), ReplayConfig(log_path=str(path)))
    data = path.read_bytes()
    assert data == log_bytes(recs)
    assert data.startswith((LOG_HEADER + "\n").encode())
    assert b"NA" in data
    back = read_log(path)
    assert not back.truncated and back.records == recs


def test_every_truncation_point_is_recoverable():
    recs = replay(raw_series(20), bundle_for(default_cnn_spec(16)))
    data = log_bytes(recs)
    ends = [i + 1 for i, c in enumerate(data) if c == ord("\n")]
    for cut in range(len(data) + 1):
        got = parse_log(data[:cut])
        complete = sum(1 for e in ends[1:] if e <= cut)
        assert got.records == recs[:complete]
        at_boundary = cut == 0 or cut in ends
        assert got.truncated == (not at_boundary)


def test_empty_log():
    got = parse_log(b"")
    assert got.records == [] and not got.truncated


def test_corrupt_record_offset():
    recs = replay(raw_series(5), bundle_for(default_ann_spec()))
    data = log_bytes(recs)
    lines = data.split(b"\n")
    offset = len(lines[0]) + 1 + len(lines[1]) + 1
    lines[2] = b"abc," + lines[2].split(b",", 1)[1]
    with pytest.raises(LogCorruptError) as exc:
        parse_log(b"\n".join(lines))
    assert exc.value.offset == offset


@pytest.mark.parametrize("line", [
    "1,2,3,4,5",
    "1,NA,3,4,5,6",
    "1,2,3,4,NA,6",
    "1,2,3,inf,5,6",
])
def test_bad_record_lines(line):
    with pytest.raises(LogCorruptError):
        PredictionRecord.from_line(line, 0)


def test_bad_header():
    with pytest.raises(LogCorruptError) as exc:
        parse_log(b"t,x\n1,2\n")
    assert exc.value.offset == 0


@pytest.mark.parametrize("k", [1, 7, 19])
def test_crash_after_k_ticks_leaves_k_records(tmp_path, k):
    path = tmp_path / "crash.csv"
    seen = []

    def on_record(rec):
        seen.append(rec)
        if len(seen) == k:
            raise KeyboardInterrupt

    with pytest.raises(KeyboardInterrupt):
        replay(raw_series(30), bundle_for(default_cnn_spec(16)), ReplayConfig(log_path=str(path)), on_record)
    got = read_log(path)
    assert not got.truncated
    assert got.records == seen


def test_wall_pacing(tmp_path):
    raw = raw_series(8)
    bundle = bundle_for(default_ann_spec())
    stamps = []
    tick = 0.03
    wall = tmp_path / "wall.csv"
    replay(raw, bundle, ReplayConfig(tick_s=tick, pacing="wall", log_path=str(wall)),
           lambda rec: stamps.append(time.monotonic()))
    intervals = np.diff(stamps)
    assert np.all(intervals >= 0.9 * tick)
    logical = tmp_path / "logical.csv"
    replay(raw, bundle, ReplayConfig(tick_s=tick, log_path=str(logical)))
    assert wall.read_bytes() == logical.read_bytes()


def test_records_to_series_skips_warm_up():
    raw = raw_series(20)
    recs = replay(raw, bundle_for(default_cnn_spec(16)))
    s = records_to_series(recs)
    assert s.start_t == raw.t_ms[15] and len(s) == 5 and s.dt_s == 2.0


@pytest.mark.parametrize("kwargs", [dict(tick_s=0.0), dict(pacing="fast")])
def test_replay_config_invariants(kwargs):
    with pytest.raises(ValueError):
        ReplayConfig(**kwargs)
