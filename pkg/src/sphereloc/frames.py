"""Submap frames: accumulated point clouds anchored at a key pose."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SubmapFrame:
    """One accumulated LiDAR submap.

    `points` are in the sensor frame (meters); `rotation`/`translation` map
    sensor coordinates into the world frame.  An empty point list is legal
    (degenerate frame) and must not crash downstream consumers.
    """

    frame_id: int
    trajectory_id: int
    points: np.ndarray  # (N, 3)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    timestamp: float | None = None
    dropped_points: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points).reshape(-1, 3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def validate(self, tol: float = 1e-6) -> None:
        err = np.linalg.norm(self.rotation.T @ self.rotation - np.eye(3))
        if err > tol:
            raise ValueError(f"frame {self.frame_id}: rotation not orthonormal "
                             f"(||R^T R - I||_F = {err:.2e})")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError(f"frame {self.frame_id}: rotation is a reflection")

    @property
    def pose(self) -> np.ndarray:
        """3x4 [R | t] matrix, world <- sensor."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def points_world(self) -> np.ndarray:
        return self.points @ self.rotation.T + self.translation


def pose_distance(a: SubmapFrame, b: SubmapFrame, planar: bool = False) -> float:
    """Euclidean distance between pose translations (3D, or 2D with `planar`)."""
    d = a.translation - b.translation
    if planar:
        d = d[:2]
    return float(np.linalg.norm(d))


def translations(frames) -> np.ndarray:
    return np.array([f.translation for f in frames])
