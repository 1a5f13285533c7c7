"""Geometry-aware crowd density estimation toolkit.

Drone telemetry gives a homography between the image and the head plane
(the plane through people's heads). From it we build per-pixel scale maps,
metric ground-truth densities, conversions between image- and head-plane
densities, people-conservation losses over frame triplets, and evaluation
metrics. A random-waypoint simulator provides data with known answers.
"""

from .consistency import (
    BlockCounts,
    BlockGrid,
    block_counts,
    composite_loss,
    conservation_check,
    head_plane_loss,
    neighborhood_sum,
    temporal_loss,
)
from .density import (
    AnnotationSet,
    DensityMap,
    HeadPlaneGrid,
    head_plane_density,
    head_to_image_density,
    image_to_head_density,
    total_count,
)
from .geometry import (
    CameraIntrinsics,
    DronePose,
    Homography,
    ScaleMap,
    apply_homography,
    homography_image_to_head,
    local_scale,
    rotation_from_pitch,
    scale_map,
)
from .kernels import BACKEND
from .metrics import EvaluationBatch, FramePair, mae, mpae, mpae_per_cell, rmse

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "BACKEND",
    "BlockCounts",
    "BlockGrid",
    "CameraIntrinsics",
    "DensityMap",
    "DronePose",
    "EvaluationBatch",
    "FramePair",
    "HeadPlaneGrid",
    "Homography",
    "ScaleMap",
    "apply_homography",
    "block_counts",
    "composite_loss",
    "conservation_check",
    "head_plane_density",
    "head_plane_loss",
    "head_to_image_density",
    "homography_image_to_head",
    "image_to_head_density",
    "local_scale",
    "mae",
    "mpae",
    "mpae_per_cell",
    "neighborhood_sum",
    "rmse",
    "rotation_from_pitch",
    "scale_map",
    "temporal_loss",
    "total_count",
]
