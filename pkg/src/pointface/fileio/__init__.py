"""File formats and configuration."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .cloudfile import load_cloud, save_cloud
from .ply import import_ply, nose_tip_heuristic, read_ply, statistical_outlier_filter
from .runconfig import RunConfig

__all__ = [
    "Checkpoint",
    "RunConfig",
    "import_ply",
    "load_checkpoint",
    "load_cloud",
    "nose_tip_heuristic",
    "read_ply",
    "save_checkpoint",
    "save_cloud",
    "statistical_outlier_filter",
]
