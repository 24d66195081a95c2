from .bundle_io import BundleFormatError, dumps_bundle, load_bundle, loads_bundle, save_bundle
from .model import (
    LayerSpec,
    ModelBundle,
    ModelSpec,
    Normalization,
    ShapeError,
    default_ann_spec,
    default_cnn_spec,
    default_spec,
    feature_maps,
    forward,
    forward_params,
    init_params,
    loss_and_grad,
    make_windows,
    predict_denorm,
    predict_series,
    rmse_loss_and_grad,
)
from .optim import AdamState, TrainConfig, adam_step
from .training import Dataset, TrainingError, build_dataset, component_nrmse, train

__all__ = [
    "AdamState", "BundleFormatError", "Dataset", "LayerSpec", "ModelBundle", "ModelSpec",
    "Normalization", "ShapeError", "TrainConfig", "TrainingError", "adam_step", "build_dataset",
    "component_nrmse", "default_ann_spec", "default_cnn_spec", "default_spec", "dumps_bundle",
    "feature_maps", "forward", "forward_params", "init_params", "load_bundle", "loads_bundle",
    "loss_and_grad", "make_windows", "predict_denorm", "predict_series", "rmse_loss_and_grad",
    "save_bundle", "train",
]
