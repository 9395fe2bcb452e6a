"""Clutter-aware path profiles and median path-loss prediction."""

from .clutter import (ClutterCategory, ClutterScheme, HeightTable, Stat, build_height_raster,
                      class_stat, default_height, map_code)
from .evaluation import (EvalReport, MeasurementRecord, error_histogram, error_stats,
                         group_average, load_measurements, run_evaluation)
from .geodesy import GeoPoint, great_circle_distance, intermediate_point, sample_path
from .kernel import LinkSpec, PredictionResult, bullington_loss, fspl, knife_edge_J, predict
from .profile import ClutterSource, PathProfile, extract_profile, profile_surface
from .raster import Raster, RasterKind, hag, load_ascii_grid, resample, sample_bilinear, sample_nearest, write_ascii_grid

__version__ = "0.1.0"
