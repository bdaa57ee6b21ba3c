"""Viewpoint-invariant LiDAR place recognition toolkit.

Pipeline: point-cloud submaps -> spherical range panoramas -> rotation-
equivariant spherical-correlation encoder -> contextual self-attention ->
VLAD aggregation -> unit-norm global descriptors, plus retrieval metrics,
assignment diagnostics and runtime benchmarks.
"""
from . import evaluation, harmonics, io, kernels, projection, splits, synthetic, training, tuples
from .frames import SubmapFrame, pose_distance
from .nn import (
    EncoderConfig,
    GlobalDescriptor,
    ModelConfig,
    SphereVladNet,
    describe,
    load_checkpoint,
    save_checkpoint,
)
from .projection import SphericalPanorama, project, rotate_panorama_yaw, to_spherical_coords
from .splits import SplitSpec, select_keyposes, split_query_database
from .synthetic import TrajectorySpec, WorldParams, make_synthetic_world
from .training import TrainConfig, grad_check, lazy_quadruplet_loss, train
from .tuples import TrainingTuple, mine_tuples

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig",
    "GlobalDescriptor",
    "ModelConfig",
    "SphereVladNet",
    "SphericalPanorama",
    "SplitSpec",
    "SubmapFrame",
    "TrainConfig",
    "TrainingTuple",
    "TrajectorySpec",
    "WorldParams",
    "describe",
    "evaluation",
    "grad_check",
    "harmonics",
    "io",
    "kernels",
    "lazy_quadruplet_loss",
    "load_checkpoint",
    "make_synthetic_world",
    "mine_tuples",
    "pose_distance",
    "project",
    "projection",
    "rotate_panorama_yaw",
    "save_checkpoint",
    "select_keyposes",
    "split_query_database",
    "splits",
    "synthetic",
    "to_spherical_coords",
    "train",
    "training",
    "tuples",
]
