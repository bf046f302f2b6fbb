"""Site-specific GPS error characterization and denoising from camera
detections and mmWave beam indices."""

from .geo import GeoPosition, LocalOffset, NoiseSpec, haversine_distance
from .dataset import (
    DatasetBundle,
    DatasetMeta,
    Detection,
    DetectionClass,
    Direction,
    Sample,
)
from .grid import GridTable, assign_grid, build_grid_table, fit_gaussian
from .nn import MlpModel, Normalizer, TrainConfig
from .simulate import BeamCodebook, SceneGeometry, TrajectoryConfig
from .txid import TxPrediction
from .denoise import LookupTable

__version__ = "0.1.0"

__all__ = [
    "BeamCodebook",
    "DatasetBundle",
    "DatasetMeta",
    "Detection",
    "DetectionClass",
    "Direction",
    "GeoPosition",
    "GridTable",
    "LocalOffset",
    "LookupTable",
    "MlpModel",
    "NoiseSpec",
    "Normalizer",
    "Sample",
    "SceneGeometry",
    "TrainConfig",
    "TrajectoryConfig",
    "TxPrediction",
    "assign_grid",
    "build_grid_table",
    "fit_gaussian",
    "haversine_distance",
]
