"""Cooperative LiDAR perception and max-pressure signal control."""

from ._core import (
    ConfigError,
    Pose,
    ap40,
    argmax_phase,
    dbscan,
    default_config,
    detect,
    iou,
    merge_clouds,
    remove_ground,
    run,
    simulate,
)

__all__ = [
    "ConfigError",
    "Pose",
    "ap40",
    "argmax_phase",
    "dbscan",
    "default_config",
    "detect",
    "iou",
    "merge_clouds",
    "remove_ground",
    "run",
    "simulate",
]
