"""Layer specs, parameter layout, forward passes and RMSE gradients.

Activations flow as ``(n, length, channels)`` blocks through conv layers and
as ``(n, features)`` after a flatten. Dense weights are stored ``(in, out)``,
conv weights ``(kernel, in_channels, out_channels)``; both row-major in the
flat parameter vector, each followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_TYPES = ("dense", "conv1d", "flatten")
ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    type: str
    width: Optional[int] = None
    channels: Optional[int] = None
    kernel: Optional[int] = None
    activation: str = "identity"

    def __post_init__(self):
        if self.type not in LAYER_TYPES:
            raise ValueError(f"unknown layer type {self.type!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.type == "dense" and not (self.width and self.width > 0):
            raise ValueError("dense layer needs a positive width")
        if self.type == "conv1d" and not (self.channels and self.channels > 0 and self.kernel and self.kernel > 0):
            raise ValueError("conv1d layer needs positive channels and kernel")

    @property
    def parameterized(self) -> bool:
        return self.type != "flatten"

    def to_dict(self) -> dict:
        if self.type == "flatten":
            return {"type": "flatten"}
        if self.type == "dense":
            return {"type": "dense", "width": self.width, "activation": self.activation}
        return {"type": "conv1d", "channels": self.channels, "kernel": self.kernel,
                "activation": self.activation}


@dataclass(frozen=True)
class ParamSlot:
    layer: int
    name: str
    offset: int
    shape: tuple

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    layers: tuple
    input_window: int = 1
    in_channels: int = 2
    out_dim: int = 2
    _layout: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.kind not in ("ann", "cnn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_window < 1 or self.in_channels < 1 or self.out_dim < 1:
            raise ValueError("input_window, in_channels and out_dim must be positive")
        param_layers = [l for l in self.layers if l.parameterized]
        if len(param_layers) != 4:
            raise ShapeError(f"expected three hidden layers plus an output layer, got "
                             f"{len(param_layers)} parameterized layers")
        last = self.layers[-1]
        if last.type != "dense" or last.width != self.out_dim or last.activation != "identity":
            raise ShapeError(f"final layer must be a linear dense layer of width {self.out_dim}")
        object.__setattr__(self, "_layout", self._build_layout())

    def _build_layout(self) -> tuple:
        slots = []
        offset = 0
        length, chans, flat = self.input_window, self.in_channels, None
        for i, layer in enumerate(self.layers):
            if layer.type == "flatten":
                if flat is not None:
                    raise ShapeError(f"layer {i}: already flat")
                flat = length * chans
                continue
            if layer.type == "conv1d":
                if flat is not None:
                    raise ShapeError(f"layer {i}: conv1d after flatten")
                out_len = length - layer.kernel + 1
                if out_len < 1:
                    raise ShapeError(f"layer {i}: kernel {layer.kernel} longer than input length {length}")
                shapes = ((layer.kernel, chans, layer.channels), (layer.channels,))
                length, chans = out_len, layer.channels
            else:
                if flat is None:
                    raise ShapeError(f"layer {i}: dense layer needs a preceding flatten")
                shapes = ((flat, layer.width), (layer.width,))
                flat = layer.width
            for name, shape in zip(("W", "b"), shapes):
                slot = ParamSlot(i, name, offset, tuple(int(s) for s in shape))
                slots.append(slot)
                offset += slot.size
        return tuple(slots)

    @property
    def layout(self) -> tuple:
        return self._layout

    @property
    def n_params(self) -> int:
        last = self._layout[-1]
        return last.offset + last.size

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_window": self.input_window,
            "in_channels": self.in_channels,
            "out_dim": self.out_dim,
            "layers": [l.to_dict() for l in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(
            kind=doc["kind"],
            layers=tuple(LayerSpec(**l) for l in doc["layers"]),
            input_window=int(doc["input_window"]),
            in_channels=int(doc.get("in_channels", 2)),
            out_dim=int(doc.get("out_dim", 2)),
        )


def default_ann_spec(width: int = 32) -> ModelSpec:
    return ModelSpec("ann", (
        LayerSpec("flatten"),
        LayerSpec("dense", width=width, activation="relu"),
        LayerSpec("dense", width=width, activation="relu"),
        LayerSpec("dense", width=width, activation="relu"),
        LayerSpec("dense", width=2),
    ), input_window=1)


def default_cnn_spec(window: int = 16, channels: int = 16, kernel: int = 3, width: int = 32) -> ModelSpec:
    return ModelSpec("cnn", (
        LayerSpec("conv1d", channels=channels, kernel=kernel, activation="relu"),
        LayerSpec("conv1d", channels=channels, kernel=kernel, activation="relu"),
        LayerSpec("flatten"),
        LayerSpec("dense", width=width, activation="relu"),
        LayerSpec("dense", width=2),
    ), input_window=window)


def default_spec(kind: str, window: int = 16) -> ModelSpec:
    if kind == "ann":
        return default_ann_spec()
    if kind == "cnn":
        return default_cnn_spec(window)
    raise ValueError(f"unknown architecture {kind!r}")


def unpack(spec: ModelSpec, params: np.ndarray) -> dict:
    """Views of the flat vector keyed by ``(layer_index, "W" | "b")``."""
    if params.shape != (spec.n_params,):
        raise ShapeError(f"expected {spec.n_params} parameters, got {params.shape}")
    return {(s.layer, s.name): params[s.offset:s.offset + s.size].reshape(s.shape) for s in spec.layout}


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform He-style init scaled by fan-in; biases start at zero."""
    params = np.zeros(spec.n_params)
    for s in spec.layout:
        if s.name != "W":
            continue
        fan_in = int(np.prod(s.shape[:-1]))
        bound = np.sqrt(6.0 / fan_in)
        params[s.offset:s.offset + s.size] = rng.uniform(-bound, bound, size=s.size)
    return params


@dataclass(frozen=True, eq=False)
class Normalization:
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def __post_init__(self):
        for name in ("input_mean", "input_std", "target_mean", "target_std"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.input_std <= 0).any() or (self.target_std <= 0).any():
            raise ValueError("normalization stds must be positive")

    @classmethod
    def identity(cls, channels: int = 2, out_dim: int = 2) -> "Normalization":
        return cls(np.zeros(channels), np.ones(channels), np.zeros(out_dim), np.ones(out_dim))

    @classmethod
    def fit(cls, inputs: np.ndarray, targets: np.ndarray) -> "Normalization":
        in_std = inputs.reshape(-1, inputs.shape[-1]).std(axis=0)
        tg_std = targets.std(axis=0)
        # a constant channel carries no information; keep it finite
        in_std = np.where(in_std > 0, in_std, 1.0)
        tg_std = np.where(tg_std > 0, tg_std, 1.0)
        return cls(inputs.reshape(-1, inputs.shape[-1]).mean(axis=0), in_std, targets.mean(axis=0), tg_std)

    def normalize_inputs(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.input_mean) / self.input_std

    def normalize_targets(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.target_mean) / self.target_std

    def denormalize_targets(self, z: np.ndarray) -> np.ndarray:
        return z * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("input_mean", "input_std", "target_mean", "target_std")}

    def __eq__(self, other):
        if not isinstance(other, Normalization):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("input_mean", "input_std", "target_mean", "target_std"))


@dataclass(eq=False)
class ModelBundle:
    spec: ModelSpec
    params: np.ndarray
    norm: Normalization
    history: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.n_params,):
            raise ShapeError(f"params length {self.params.size} != layout total {self.spec.n_params}")

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (self.spec == other.spec and np.array_equal(self.params, other.params)
                and self.norm == other.norm and self.history == other.history and self.meta == other.meta)


def _check_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1:] != (spec.input_window, spec.in_channels):
        raise ShapeError(f"batch must be shaped (n, {spec.input_window}, {spec.in_channels}), got {batch.shape}")
    return batch


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0.0) if activation == "relu" else z


def forward(bundle: ModelBundle, batch) -> np.ndarray:
    """Normalized inputs ``(n, window, channels)`` to normalized outputs ``(n, out_dim)``.

    Every output element is accumulated term by term in a fixed order, so a
    row's value does not depend on the rest of the batch. Streaming and batch
    inference therefore agree bit for bit.
    """
    return forward_params(bundle.spec, bundle.params, batch)


def forward_params(spec: ModelSpec, params: np.ndarray, batch, stop_at_flatten: bool = False) -> np.ndarray:
    x = _check_batch(spec, batch)
    p = unpack(spec, params)
    for i, layer in enumerate(spec.layers):
        if layer.type == "flatten":
            if stop_at_flatten:
                return x
            x = x.reshape(len(x), -1)
            continue
        W, b = p[(i, "W")], p[(i, "b")]
        if layer.type == "dense":
            out = np.repeat(b[None, :], len(x), axis=0)
            for j in range(W.shape[0]):
                out += x[:, j:j + 1] * W[j]
        else:
            k, cin, cout = W.shape
            n_out = x.shape[1] - k + 1
            out = np.repeat(np.repeat(b[None, None, :], len(x), axis=0), n_out, axis=1)
            for kk in range(k):
                for c in range(cin):
                    out += x[:, kk:kk + n_out, c:c + 1] * W[kk, c]
        x = _activate(out, layer.activation)
    return x


def feature_maps(bundle: ModelBundle, batch) -> np.ndarray:
    """Activations ``(n, length, channels)`` entering the flatten layer."""
    return forward_params(bundle.spec, bundle.params, batch, stop_at_flatten=True)


def _forward_cached(spec: ModelSpec, p: dict, x: np.ndarray):
    cache = []
    for i, layer in enumerate(spec.layers):
        if layer.type == "flatten":
            cache.append(x.shape)
            x = x.reshape(len(x), -1)
            continue
        W, b = p[(i, "W")], p[(i, "b")]
        if layer.type == "dense":
            z = x @ W + b
            cache.append((x, z))
        else:
            # patches: (n, out_len, cin, k)
            patches = sliding_window_view(x, W.shape[0], axis=1)
            z = np.tensordot(patches, W.transpose(1, 0, 2), axes=([2, 3], [0, 1])) + b
            cache.append((patches, z))
        x = _activate(z, layer.activation)
    return x, cache


def rmse_loss_and_grad(spec: ModelSpec, params: np.ndarray, batch, targets):
    """RMSE over all ``n * out_dim`` entries and its exact gradient."""
    x = _check_batch(spec, batch)
    targets = np.asarray(targets, dtype=np.float64)
    if len(x) == 0:
        raise ShapeError("empty batch")
    if targets.shape != (len(x), spec.out_dim):
        raise ShapeError(f"targets must be shaped ({len(x)}, {spec.out_dim}), got {targets.shape}")
    p = unpack(spec, params)
    out, cache = _forward_cached(spec, p, x)
    err = out - targets
    loss = float(np.sqrt(np.mean(err * err)))
    grad = np.zeros_like(params)
    if loss == 0.0:
        return loss, grad
    g = {(s.layer, s.name): grad[s.offset:s.offset + s.size].reshape(s.shape) for s in spec.layout}
    delta = err / (loss * err.size)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        if layer.type == "flatten":
            delta = delta.reshape(cache[i])
            continue
        inp, z = cache[i]
        if layer.activation == "relu":
            delta = delta * (z > 0)
        W = p[(i, "W")]
        if layer.type == "dense":
            g[(i, "W")][...] = inp.T @ delta
            g[(i, "b")][...] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ W.T
        else:
            k = W.shape[0]
            g[(i, "W")][...] = np.tensordot(inp, delta, axes=([0, 1], [0, 1])).transpose(1, 0, 2)
            g[(i, "b")][...] = delta.sum(axis=(0, 1))
            if i > 0:
                n_out = delta.shape[1]
                dx = np.zeros((delta.shape[0], n_out + k - 1, W.shape[1]))
                for kk in range(k):
                    dx[:, kk:kk + n_out, :] += delta @ W[kk].T
                delta = dx
    return loss, grad


def loss_and_grad(bundle: ModelBundle, batch, targets):
    return rmse_loss_and_grad(bundle.spec, bundle.params, batch, targets)


def predict_denorm(bundle: ModelBundle, raw_windows) -> np.ndarray:
    """Raw windows ``(n, window, channels)`` in nT to predictions ``(n, out_dim)`` in nT."""
    raw = _check_batch(bundle.spec, raw_windows)
    z = forward(bundle, bundle.norm.normalize_inputs(raw))
    return bundle.norm.denormalize_targets(z)


def make_windows(x, y, window: int) -> np.ndarray:
    """Trailing windows ``(n - window + 1, window, 2)``; row ``i`` ends at sample ``i + window - 1``."""
    stacked = np.stack([np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)], axis=1)
    if len(stacked) < window:
        raise ShapeError(f"series of {len(stacked)} samples is shorter than window {window}")
    return sliding_window_view(stacked, window, axis=0).transpose(0, 2, 1)


def predict_series(bundle: ModelBundle, raw) -> tuple[np.ndarray, np.ndarray]:
    """Predict every sample of a raw series; warm-up samples are NaN."""
    W = bundle.spec.input_window
    n = len(raw)
    xhat = np.full(n, np.nan)
    yhat = np.full(n, np.nan)
    if n >= W:
        pred = predict_denorm(bundle, make_windows(raw.x, raw.y, W))
        xhat[W - 1:] = pred[:, 0]
        yhat[W - 1:] = pred[:, 1]
    return xhat, yhat
