"""Magnetometer baseline correction, neural dB_H/dt forecasting and event verification."""

from .als import AlsParams, BaselineResult, als_fit, subtract_baseline, whittaker_solve
from .evaluation import ContingencyTable, EventConfig, SkillReport, contingency, event_report, hss, nrmse, \
    windowed_max
from .rates import RateSeries, derive_rate, finite_diff, horizontal_rate
from .timeseries import SplitSpec, UniformSeries, ingest_csv, pearson, read_series, split, write_series

__version__ = "0.1.0"
