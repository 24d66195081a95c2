"""Adam optimizer over a flat parameter vector."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be an unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = cls.__dataclass_fields__
        unknown = set(doc) - set(known)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, grads, state: AdamState, config: TrainConfig, t: int):
    """One bias-corrected Adam update at step ``t`` (1-based).

    Returns the updated parameters and moment state; inputs are not modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError(f"length mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if t < 1:
        raise ValueError("step index starts at 1")
    b1, b2 = config.beta1, config.beta2
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new, AdamState(m, v)
