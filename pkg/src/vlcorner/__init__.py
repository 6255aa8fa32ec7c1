"""Vehicle-light corner regression: crops, noise, metrics, a numpy CNN and a CLI."""

__version__ = "0.1.0"

from .errors import ConfigError, InputError, NumericalError, StorageError, ValidationError
from .geometry import (
    CropMode, CropSample, CropSpec, LightAnnotation, LightType, Point, VehicleBox,
    denormalize_prediction, flip_horizontal, make_sample, normalize_targets,
    scene_context_crop, vehicle_only_crop,
)
from .metrics import (
    BatchEval, average_distance_error, corner_box, detection_rate, iou,
    masked_corner_loss, percent_error, weighted_aggregate,
)
from .noise import NoiseConfig, apply_noise, sample_noise

__all__ = [
    "ConfigError", "InputError", "NumericalError", "StorageError", "ValidationError",
    "CropMode", "CropSample", "CropSpec", "LightAnnotation", "LightType", "Point", "VehicleBox",
    "denormalize_prediction", "flip_horizontal", "make_sample", "normalize_targets",
    "scene_context_crop", "vehicle_only_crop",
    "BatchEval", "average_distance_error", "corner_box", "detection_rate", "iou",
    "masked_corner_loss", "percent_error", "weighted_aggregate",
    "NoiseConfig", "apply_noise", "sample_noise",
]
