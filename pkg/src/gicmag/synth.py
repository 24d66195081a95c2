"""Synthetic magnetometer days with known baseline and disturbance components.

``corrected = diurnal + storms + noise`` and ``baseline = polynomial drift``.
The raw sensor channel is ``gain * (corrected + baseline) + offset``.
A storm is a step onset followed by exponential decay, truncated after its
duration. It moves X by its amplitude and Y by ``storm_y_fraction`` of it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .rates import derive_rate
from .timeseries import UniformSeries


@dataclass(frozen=True)
class Storm:
    onset_s: float
    duration_s: float
    amplitude_nt: float
    decay_s: float

    def __post_init__(self):
        if self.onset_s < 0 or self.duration_s <= 0 or self.decay_s <= 0:
            raise ValueError(f"invalid storm {self}")


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 57600.0
    dt_s: float = 2.0
    start_t_ms: int = 0
    # polynomial drift in u = t / duration_s, ascending powers, nT
    baseline_x: tuple = (0.0,)
    baseline_y: tuple = (0.0,)
    diurnal_amplitude_nt: float = 0.0
    diurnal_period_s: float = 86400.0
    noise_std_nt: float = 0.0
    storms: tuple = ()
    storm_y_fraction: float = 0.5
    gain: tuple = (1.0, 1.0)
    offset: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "baseline_x", tuple(float(c) for c in self.baseline_x))
        object.__setattr__(self, "baseline_y", tuple(float(c) for c in self.baseline_y))
        object.__setattr__(self, "storms", tuple(s if isinstance(s, Storm) else Storm(**s) for s in self.storms))
        object.__setattr__(self, "gain", tuple(float(g) for g in self.gain))
        object.__setattr__(self, "offset", tuple(float(o) for o in self.offset))
        if not (self.dt_s > 0 and self.duration_s >= self.dt_s):
            raise ValueError("need duration_s >= dt_s > 0")
        if self.noise_std_nt < 0:
            raise ValueError("noise_std_nt must be non-negative")
        if self.diurnal_period_s <= 0:
            raise ValueError("diurnal_period_s must be positive")
        if len(self.gain) != 2 or len(self.offset) != 2 or 0.0 in self.gain:
            raise ValueError("gain and offset need two entries; gains must be nonzero")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for s in self.storms:
            if s.onset_s + s.duration_s > self.duration_s:
                raise ValueError(f"storm at {s.onset_s} s runs past the end of the series")

    @property
    def n_samples(self) -> int:
        return math.floor(self.duration_s / self.dt_s + 1e-9)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("baseline_x", "baseline_y", "gain", "offset"):
            doc[key] = list(doc[key])
        doc["storms"] = [asdict(s) for s in self.storms]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**doc)

    def with_seed(self, seed: int) -> "SynthConfig":
        return replace(self, seed=seed)


def storm_signal(t_s: np.ndarray, storms) -> np.ndarray:
    t_s = np.asarray(t_s, dtype=np.float64)
    out = np.zeros_like(t_s)
    for s in storms:
        rel = t_s - s.onset_s
        inside = (rel >= 0) & (rel < s.duration_s)
        out[inside] += s.amplitude_nt * np.exp(-rel[inside] / s.decay_s)
    return out


def generate(cfg: SynthConfig):
    """Return ``(raw, corrected_truth, baseline_truth)`` as aligned series."""
    n = cfg.n_samples
    t_s = np.arange(n) * float(cfg.dt_s)
    u = t_s / cfg.duration_s
    # Philox is counter-based: streams are reproducible across platforms
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    noise = rng.standard_normal((2, n)) * cfg.noise_std_nt if cfg.noise_std_nt > 0 else np.zeros((2, n))

    phase = 2.0 * np.pi * t_s / cfg.diurnal_period_s
    storm = storm_signal(t_s, cfg.storms)
    cx = cfg.diurnal_amplitude_nt * np.sin(phase) + storm + noise[0]
    cy = cfg.diurnal_amplitude_nt * np.cos(phase) + cfg.storm_y_fraction * storm + noise[1]
    bx = np.polynomial.polynomial.polyval(u, cfg.baseline_x)
    by = np.polynomial.polynomial.polyval(u, cfg.baseline_y)
    rx = cfg.gain[0] * (cx + bx) + cfg.offset[0]
    ry = cfg.gain[1] * (cy + by) + cfg.offset[1]

    t0, dt = cfg.start_t_ms, cfg.dt_s
    return (UniformSeries(t0, dt, rx, ry, "synthetic raw"),
            UniformSeries(t0, dt, cx, cy, "synthetic corrected truth"),
            UniformSeries(t0, dt, bx, by, "synthetic baseline truth"))


def storm_peak_rates(corrected: UniformSeries, cfg: SynthConfig) -> list:
    """Peak dB_H/dt (nT/s) of ``corrected`` inside each storm's span."""
    rate = derive_rate(corrected)
    t_s = (rate.t_ms - corrected.start_t) / 1000.0
    peaks = []
    for s in cfg.storms:
        inside = (t_s >= s.onset_s) & (t_s <= s.onset_s + s.duration_s)
        peaks.append(float(rate.values[inside].max()) if inside.any() else 0.0)
    return peaks


def load_synth_config(path) -> SynthConfig:
    with open(path, encoding="utf-8") as fh:
        return SynthConfig.from_dict(json.load(fh))


def spike_fixture(n: int = 1000, n_spikes: int = 5, height: float = 100.0, seed: int = 7):
    """Quadratic baseline plus single-sample positive spikes.

    Returns ``(data, baseline, spike_indices)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    u = np.arange(n) / (n - 1)
    baseline = 10.0 + 20.0 * u - 15.0 * u * u
    idx = np.sort(rng.choice(np.arange(10, n - 10), size=n_spikes, replace=False))
    data = baseline.copy()
    data[idx] += height
    return data, baseline, idx


def affine_fixture(n: int = 2000, noise_frac: float = 0.01, seed: int = 5, dt_s: float = 2.0):
    """Raw inputs and an affine image of them with noise at ``noise_frac`` of each target's range.

    Returns ``(inputs, targets)`` as aligned series.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    t = np.arange(n) * dt_s
    x = 40.0 * np.sin(2 * np.pi * t / 1800.0) + 15.0 * np.sin(2 * np.pi * t / 517.0) + rng.standard_normal(n)
    y = 25.0 * np.cos(2 * np.pi * t / 1300.0) + 10.0 * np.sin(2 * np.pi * t / 311.0) + rng.standard_normal(n)
    tx = 0.8 * x + 0.3 * y + 5.0
    ty = -0.2 * x + 1.1 * y - 7.0
    tx = tx + noise_frac * (tx.max() - tx.min()) * rng.standard_normal(n)
    ty = ty + noise_frac * (ty.max() - ty.min()) * rng.standard_normal(n)
    return (UniformSeries(0, dt_s, x, y, "affine fixture input"),
            UniformSeries(0, dt_s, tx, ty, "affine fixture target"))
