import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gicmag.timeseries import (MalformedRowError, NonFiniteValueError, NonUniformCadenceError, SeriesError,
                               SplitSpec, UniformSeries, ingest_csv, pearson, split, split_indices,
                               to_csv_bytes)


def csv_bytes(rows):
    return ("t_ms,x_nt,y_nt\n" + "".join(f"{t},{x},{y}\n" for t, x, y in rows)).encode()


def test_ingest_uniform():
    s = ingest_csv(io.BytesIO(csv_bytes([(0, 1, 0), (2000, 2, 0), (4000, 3, 0)])))
    assert s.dt_s == 2.0
    assert len(s) == 3
    assert s.x.tolist() == [1.0, 2.0, 3.0]
    assert s.t_ms.tolist() == [0, 2000, 4000]


def test_ingest_non_uniform_reports_index():
    with pytest.raises(NonUniformCadenceError) as exc:
        ingest_csv(csv_bytes([(0, 1, 0), (2000, 2, 0), (5000, 3, 0)]))
    assert exc.value.index == 2


def test_ingest_nan_rejected():
    data = b"t_ms,x_nt,y_nt\n0,NaN,0\n2000,1,0\n"
    with pytest.raises(NonFiniteValueError) as exc:
        ingest_csv(data)
    assert exc.value.line == 2


@pytest.mark.parametrize("body, line", [
    (b"0,1\n", 2),
    (b"0,1,2\nabc,1,2\n", 3),
    (b"0,1,2\n2000,x,2\n", 3),
    (b"2000,1,2\n0,1,2\n", 3),
])
def test_ingest_malformed_row_line(body, line):
    with pytest.raises(MalformedRowError) as exc:
        ingest_csv(b"t_ms,x_nt,y_nt\n" + body)
    assert exc.value.line == line


def test_ingest_needs_two_rows():
    with pytest.raises(SeriesError):
        ingest_csv(b"t_ms,x_nt,y_nt\n0,1,2\n")


def test_ingest_bad_header():
    with pytest.raises(MalformedRowError):
        ingest_csv(b"time,x,y\n0,1,2\n2,1,2\n")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40),
       st.integers(0, 10**13), st.sampled_from([1, 500, 2000, 60000]))
def test_csv_round_trip_bit_exact(values, start, gap):
    xs, ys = zip(*values)
    s = UniformSeries(start, gap / 1000.0, xs, ys)
    text = to_csv_bytes(s)
    back = ingest_csv(text)
    assert back.start_t == start and back.dt_s == s.dt_s
    assert back.x.tobytes() == s.x.tobytes()
    assert back.y.tobytes() == s.y.tobytes()
    assert to_csv_bytes(back) == text


def test_series_invariants():
    with pytest.raises(SeriesError):
        UniformSeries(0, 2.0, [1, 2], [1])
    with pytest.raises(SeriesError):
        UniformSeries(0, 0.0, [1], [1])
    with pytest.raises(SeriesError):
        UniformSeries(0, 2.0, [np.inf], [1])
    s = UniformSeries(0, 2.0, [1, 2], [3, 4])
    with pytest.raises(ValueError):
        s.x[0] = 5


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    # hand evaluation: deviations (-1.5,-.5,.5,1.5) and (-1.5,-.5,1.5,.5); 4 / sqrt(5 * 5)
    assert pearson([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(0.8, abs=1e-15)


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


vectors = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=50)


@settings(max_examples=80, deadline=None)
@given(vectors, st.data(), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_properties(a, data, scale, shift):
    b = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))
    a, b = np.array(a), np.array(b)
    if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
        return
    r = pearson(a, b)
    assert -1.0 <= r <= 1.0
    assert pearson(a, a) == pytest.approx(1.0, abs=1e-12)
    assert pearson(b, a) == pytest.approx(r, abs=1e-12)
    assert pearson(scale * a + shift, b) == pytest.approx(r, abs=1e-9)


def test_split_examples():
    r = split_indices(100, SplitSpec(0.8, 0.2))
    assert (r.train, r.validation, r.test) == (range(0, 64), range(64, 80), range(80, 100))
    # floor(0.8 * 5) = 4 fit samples, floor(0.25 * 4) = 1 of them for validation
    r = split_indices(5, SplitSpec(0.8, 0.25))
    assert (r.train, r.validation, r.test) == (range(0, 3), range(3, 4), range(4, 5))
    with pytest.raises(ValueError, match="validation"):
        split_indices(10, SplitSpec(0.8, 0.0))


def test_split_requires_equal_lengths():
    a = UniformSeries(0, 2.0, np.zeros(10), np.zeros(10))
    b = UniformSeries(0, 2.0, np.zeros(9), np.zeros(9))
    with pytest.raises(ValueError):
        split(a, b, SplitSpec())


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
def test_split_spec_invariants(frac):
    with pytest.raises(ValueError):
        SplitSpec(train_frac=frac)


@given(st.integers(5, 5000), st.floats(0.3, 0.95), st.floats(0.05, 0.5))
def test_split_is_partition(n, tf, vf):
    try:
        r = split_indices(n, SplitSpec(tf, vf))
    except ValueError:
        return
    assert r.train.start == 0 and r.train.stop == r.validation.start
    assert r.validation.stop == r.test.start and r.test.stop == n
    assert min(len(r.train), len(r.validation), len(r.test)) > 0
