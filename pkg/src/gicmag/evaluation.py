"""Forecast verification: NRMSE, windowed maxima, contingency tables and HSS."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .rates import RateSeries

DEFAULT_WINDOW_S = 1200.0
DEFAULT_THRESHOLDS = (0.3, 0.7, 1.1, 1.5)


def nrmse(pred, obs) -> float:
    """RMSE normalized by the observed range ``max(obs) - min(obs)``."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape or pred.ndim != 1:
        raise ValueError(f"length mismatch: {pred.shape} vs {obs.shape}")
    if len(obs) < 2:
        raise ValueError("need at least 2 values")
    span = float(obs.max() - obs.min())
    if span == 0.0:
        raise ValueError("observed series has zero range")
    err = pred - obs
    return math.sqrt(float(np.mean(err * err))) / span


def window_samples(window_s: float, dt_s: float) -> int:
    if not window_s >= dt_s > 0:
        raise ValueError(f"window {window_s} s shorter than cadence {dt_s} s")
    return math.floor(window_s / dt_s + 1e-9)


def windowed_max(rate: RateSeries, window_s: float) -> np.ndarray:
    """Maximum of each full, non-overlapping window; a partial tail is dropped."""
    if len(rate) == 0:
        raise ValueError("empty rate series")
    k = window_samples(window_s, rate.dt_s)
    full = len(rate) // k
    return rate.values[:full * k].reshape(full, k).max(axis=1)


@dataclass(frozen=True)
class ContingencyTable:
    h: int
    m: int
    f: int
    n: int

    def __post_init__(self):
        if min(self.h, self.m, self.f, self.n) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return self.h + self.m + self.f + self.n


@dataclass(frozen=True)
class EventConfig:
    window_s: float = DEFAULT_WINDOW_S
    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.window_s > 0:
            raise ValueError("window_s must be positive")
        if not self.thresholds:
            raise ValueError("at least one threshold is required")
        if self.thresholds[0] <= 0 or any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be positive and strictly increasing")


def contingency(obs_max, fc_max, threshold: float) -> ContingencyTable:
    """Classify windows as events when their maximum is at or above ``threshold``."""
    obs = np.asarray(obs_max, dtype=np.float64) >= threshold
    fc = np.asarray(fc_max, dtype=np.float64) >= threshold
    if obs.shape != fc.shape:
        raise ValueError(f"length mismatch: {obs.shape} vs {fc.shape}")
    return ContingencyTable(
        h=int(np.count_nonzero(obs & fc)),
        m=int(np.count_nonzero(obs & ~fc)),
        f=int(np.count_nonzero(~obs & fc)),
        n=int(np.count_nonzero(~obs & ~fc)),
    )


def hss(table: ContingencyTable) -> Optional[float]:
    """Heidke skill score, or None when the denominator vanishes."""
    h, m, f, n = table.h, table.m, table.f, table.n
    denom = (h + m) * (m + n) + (h + f) * (f + n)
    if denom == 0:
        return None
    # integer numerator/denominator: the single division is correctly rounded
    return 2 * (h * n - m * f) / denom


@dataclass(frozen=True)
class ThresholdScore:
    threshold: float
    table: ContingencyTable
    hss: Optional[float]


@dataclass
class SkillReport:
    model: str
    window_s: float
    window_samples: int
    n_windows: int
    start_t_ms: int
    end_t_ms: int
    scores: list = field(default_factory=list)
    nrmse: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    def hss_at(self, threshold: float) -> Optional[float]:
        for s in self.scores:
            if s.threshold == threshold:
                return s.hss
        raise KeyError(threshold)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "window_s": self.window_s,
            "window_samples": self.window_samples,
            "n_windows": self.n_windows,
            "data_range": {"start_t_ms": self.start_t_ms, "end_t_ms": self.end_t_ms},
            "thresholds": [
                {"threshold": s.threshold, "h": s.table.h, "m": s.table.m,
                 "f": s.table.f, "n": s.table.n, "hss": s.hss}
                for s in self.scores
            ],
            "nrmse": self.nrmse,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SkillReport":
        return cls(
            model=doc["model"],
            window_s=doc["window_s"],
            window_samples=doc["window_samples"],
            n_windows=doc["n_windows"],
            start_t_ms=doc["data_range"]["start_t_ms"],
            end_t_ms=doc["data_range"]["end_t_ms"],
            scores=[ThresholdScore(r["threshold"], ContingencyTable(r["h"], r["m"], r["f"], r["n"]), r["hss"])
                    for r in doc["thresholds"]],
            nrmse=doc.get("nrmse"),
            metadata=doc.get("metadata", {}),
        )


def event_report(obs_rate: RateSeries, fc_rate: RateSeries, cfg: EventConfig = EventConfig(),
                 model: str = "", component_nrmse: Optional[dict] = None,
                 metadata: Optional[dict] = None) -> SkillReport:
    """Binary event analysis of a forecast dB_H/dt against the observed one."""
    if obs_rate.start_t != fc_rate.start_t or obs_rate.dt_s != fc_rate.dt_s or len(obs_rate) != len(fc_rate):
        raise ValueError("observed and forecast rates must share start, cadence and length")
    k = window_samples(cfg.window_s, obs_rate.dt_s)
    obs_max = windowed_max(obs_rate, cfg.window_s)
    fc_max = windowed_max(fc_rate, cfg.window_s)
    if len(obs_max) == 0:
        raise ValueError(f"series of {len(obs_rate)} samples holds no full {k}-sample window")
    scores = []
    for thr in cfg.thresholds:
        table = contingency(obs_max, fc_max, thr)
        scores.append(ThresholdScore(thr, table, hss(table)))
    t = obs_rate.t_ms
    return SkillReport(
        model=model,
        window_s=cfg.window_s,
        window_samples=k,
        n_windows=len(obs_max),
        start_t_ms=int(t[0]),
        end_t_ms=int(t[len(obs_max) * k - 1]),
        scores=scores,
        nrmse=component_nrmse,
        metadata=dict(metadata or {}),
    )


def scores_table(scores: Sequence[ThresholdScore]) -> str:
    lines = ["threshold_nts,h,m,f,n,hss"]
    for s in scores:
        val = "NA" if s.hss is None else repr(s.hss)
        lines.append(f"{s.threshold!r},{s.table.h},{s.table.m},{s.table.f},{s.table.n},{val}")
    return "\n".join(lines) + "\n"
