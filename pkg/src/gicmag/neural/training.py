"""Mini-batch training with validation-based early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..evaluation import nrmse
from ..timeseries import UniformSeries
from .model import ModelBundle, ModelSpec, Normalization, init_params, make_windows, predict_denorm, \
    rmse_loss_and_grad
from .optim import AdamState, TrainConfig, adam_step

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw-unit model inputs ``(n, window, 2)`` and targets ``(n, 2)``."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ValueError(f"inconsistent dataset shapes {self.inputs.shape} / {self.targets.shape}")

    def __len__(self) -> int:
        return len(self.inputs)


def build_dataset(inputs: UniformSeries, targets: UniformSeries, window: int, index: range) -> Dataset:
    """Samples whose target index lies in ``index``; windows may reach back before it."""
    if len(inputs) != len(targets):
        raise ValueError("inputs and targets must be aligned and of equal length")
    start = max(index.start, window - 1)
    if start >= index.stop:
        raise ValueError(f"range {index.start}..{index.stop} holds no full {window}-sample window")
    windows = make_windows(inputs.x, inputs.y, window)[start - window + 1:index.stop - window + 1]
    tg = np.stack([targets.x[start:index.stop], targets.y[start:index.stop]], axis=1)
    return Dataset(np.ascontiguousarray(windows), tg)


def _full_rmse(spec, params, x, y) -> float:
    loss, _ = rmse_loss_and_grad(spec, params, x, y)
    return loss


def train(spec: ModelSpec, train_set: Dataset, val_set: Dataset, config: TrainConfig = TrainConfig()) -> ModelBundle:
    """Fit ``spec`` with Adam on RMSE; returns the best-validation parameters.

    Normalization statistics come from ``train_set`` only. With
    ``patience == 0`` early stopping is disabled.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    norm = Normalization.fit(train_set.inputs, train_set.targets)
    xt = norm.normalize_inputs(train_set.inputs)
    yt = norm.normalize_targets(train_set.targets)
    xv = norm.normalize_inputs(val_set.inputs)
    yv = norm.normalize_targets(val_set.targets)

    rng = np.random.default_rng(config.seed)
    params = init_params(spec, rng)
    state = AdamState.zeros(spec.n_params)
    best_params = params.copy()
    best_val = math.inf
    best_epoch = 0
    train_hist, val_hist = [], []
    step = 0
    stale = 0
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            loss, grad = rmse_loss_and_grad(spec, params, xt[idx], yt[idx])
            if not (math.isfinite(loss) and np.isfinite(grad).all()):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            step += 1
            params, state = adam_step(params, grad, state, config, step)
            batch_losses.append(loss)
        val = _full_rmse(spec, params, xv, yv)
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        train_hist.append(float(np.mean(batch_losses)))
        val_hist.append(val)
        if val < best_val:
            best_val, best_epoch, best_params, stale = val, epoch, params.copy(), 0
        else:
            stale += 1
        log.debug("epoch %d train %.5f val %.5f", epoch, train_hist[-1], val)
        if config.patience and stale >= config.patience:
            break

    return ModelBundle(
        spec=spec,
        params=best_params,
        norm=norm,
        history={"train_loss": train_hist, "val_loss": val_hist, "best_epoch": best_epoch},
        meta={"train_config": config.to_dict(), "seed": config.seed},
    )


def component_nrmse(bundle: ModelBundle, data: Dataset) -> dict:
    pred = predict_denorm(bundle, data.inputs)
    return {"x": nrmse(pred[:, 0], data.targets[:, 0]), "y": nrmse(pred[:, 1], data.targets[:, 1])}
