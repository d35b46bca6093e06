"""Simulated whisker-based tip localization and contour following."""

from .calibration import PolyModel, fit_poly, sample_grid
from .geometry import Circle, OpenPolyline, Pose2D, RoundedPolygon, RoundedRectangle
from .localization import CharacterizedModel, build_characterized_model, tip_from_measurement, trace_tip
from .whisker import ExactMeasurementSurface, WhiskerParams

__version__ = "0.1.0"

__all__ = [
    "Circle", "OpenPolyline", "Pose2D", "RoundedPolygon", "RoundedRectangle",
    "WhiskerParams", "ExactMeasurementSurface", "PolyModel", "fit_poly", "sample_grid",
    "CharacterizedModel", "build_characterized_model", "tip_from_measurement", "trace_tip",
]
