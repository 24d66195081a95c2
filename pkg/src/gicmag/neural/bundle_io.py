"""JSON persistence for model bundles.

Document layout::

    {
      "format": "gicmag-model", "version": 1,
      "spec": {"kind", "input_window", "in_channels", "out_dim", "layers": [...]},
      "layout": [{"layer", "name", "offset", "shape"}, ...],
      "params": [...],
      "norm": {"input_mean", "input_std", "target_mean", "target_std"},
      "history": {...}, "meta": {...}
    }

Floats are written with ``repr`` precision, so a load reproduces every
parameter bit for bit.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .model import ModelBundle, ModelSpec, Normalization

FORMAT = "gicmag-model"
VERSION = 1


class BundleFormatError(ValueError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path


def bundle_to_dict(bundle: ModelBundle) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "spec": bundle.spec.to_dict(),
        "layout": [{"layer": s.layer, "name": s.name, "offset": s.offset, "shape": list(s.shape)}
                   for s in bundle.spec.layout],
        "params": bundle.params.tolist(),
        "norm": bundle.norm.to_dict(),
        "history": bundle.history,
        "meta": bundle.meta,
    }


def dumps_bundle(bundle: ModelBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=1) + "\n"


def save_bundle(bundle: ModelBundle, sink) -> None:
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            fh.write(dumps_bundle(bundle))
    else:
        sink.write(dumps_bundle(bundle))


def _require(doc: dict, key: str, path: str, kind):
    if not isinstance(doc, dict) or key not in doc:
        raise BundleFormatError(path, f"missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise BundleFormatError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _float_list(doc: dict, key: str, path: str, length=None) -> list:
    values = _require(doc, key, path, list)
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise BundleFormatError(f"{path}.{key}[{i}]", "expected a finite number")
    if length is not None and len(values) != length:
        raise BundleFormatError(f"{path}.{key}", f"expected {length} values, got {len(values)}")
    return values


def bundle_from_dict(doc: dict) -> ModelBundle:
    if not isinstance(doc, dict):
        raise BundleFormatError("$", "expected an object")
    if doc.get("format") != FORMAT:
        raise BundleFormatError("$.format", f"expected {FORMAT!r}")
    if doc.get("version") != VERSION:
        raise BundleFormatError("$.version", f"unsupported version {doc.get('version')!r}")
    spec_doc = _require(doc, "spec", "$", dict)
    try:
        spec = ModelSpec.from_dict(spec_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError("$.spec", str(exc)) from None

    layout = _require(doc, "layout", "$", list)
    if len(layout) != len(spec.layout):
        raise BundleFormatError("$.layout", f"expected {len(spec.layout)} entries, got {len(layout)}")
    for i, (entry, slot) in enumerate(zip(layout, spec.layout)):
        want = {"layer": slot.layer, "name": slot.name, "offset": slot.offset, "shape": list(slot.shape)}
        if entry != want:
            raise BundleFormatError(f"$.layout[{i}]", f"inconsistent with spec, expected {want}")

    params = _float_list(doc, "params", "$")
    if len(params) != spec.n_params:
        raise BundleFormatError("$.params", f"length {len(params)} != layout total {spec.n_params}")

    norm_doc = _require(doc, "norm", "$", dict)
    norm_vals = {
        "input_mean": _float_list(norm_doc, "input_mean", "$.norm", spec.in_channels),
        "input_std": _float_list(norm_doc, "input_std", "$.norm", spec.in_channels),
        "target_mean": _float_list(norm_doc, "target_mean", "$.norm", spec.out_dim),
        "target_std": _float_list(norm_doc, "target_std", "$.norm", spec.out_dim),
    }
    for key in ("input_std", "target_std"):
        if any(v <= 0 for v in norm_vals[key]):
            raise BundleFormatError(f"$.norm.{key}", "stds must be positive")

    return ModelBundle(
        spec=spec,
        params=np.array(params, dtype=np.float64),
        norm=Normalization(**norm_vals),
        history=doc.get("history", {}),
        meta=doc.get("meta", {}),
    )


def loads_bundle(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleFormatError("$", f"invalid JSON: {exc}") from None
    return bundle_from_dict(doc)


def load_bundle(source) -> ModelBundle:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            return loads_bundle(fh.read())
    return loads_bundle(source.read())
