"""Point clouds -> bandlimited spherical range panoramas.

A panorama at bandwidth B is a (2B, 2B) grid over [azimuth, polar] covering
[0, 2pi) x [0, pi); cell (i, j) spans [i, i+1) * 2pi/2B in azimuth and
[j, j+1) * pi/2B in polar angle, and holds min-range / max-range of the
points falling inside (0 = empty, nearest surface wins).  B=32 with a 50 m
cutoff gives the standard 64 x 64 range image.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .exceptions import OriginPoint


@dataclass
class SphericalPanorama:
    values: np.ndarray  # (2B, 2B), [azimuth, polar], in [0, 1]
    bandwidth: int
    max_range_m: float
    frame_id: int | None = None

    channel_count = 1

    def validate(self) -> None:
        n = 2 * self.bandwidth
        if self.values.shape != (n, n):
            raise ValueError(f"panorama grid must be {(n, n)}, got {self.values.shape}")
        lo, hi = float(self.values.min(initial=0.0)), float(self.values.max(initial=0.0))
        if lo < 0.0 or hi > 1.0 + 1e-6:
            raise ValueError(f"panorama values outside [0, 1]: [{lo}, {hi}]")


def to_spherical_coords(point) -> tuple[float, float, float]:
    """(x, y, z) -> (azimuth in [0, 2pi), polar from +z in [0, pi], range).

    Raises OriginPoint for the zero vector, whose direction is undefined.
    """
    x, y, z = (float(v) for v in point)
    r = np.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise OriginPoint("zero-length point has no direction")
    azimuth = np.arctan2(y, x)
    if azimuth < 0.0:
        azimuth += 2.0 * np.pi
    polar = np.arccos(np.clip(z / r, -1.0, 1.0))
    return float(azimuth), float(polar), float(r)


def remap_axes(points: np.ndarray, axes: tuple[int, int, int]) -> np.ndarray:
    """Reorder/flip coordinate axes: `axes` holds signed 1-based source axes,
    e.g. (1, 2, 3) is the identity and (2, -3, 1) maps (x,y,z) <- (y,-z,x).
    Use this to bring non-z-up sensor conventions into the assumed frame."""
    points = np.asarray(points).reshape(-1, 3)
    cols = [np.sign(a) * points[:, abs(a) - 1] for a in axes]
    return np.stack(cols, axis=1)


def project(frame_or_points, max_range_m: float = 50.0, bandwidth: int = 32,
            backend: str | None = None,
            axis_remap: tuple[int, int, int] | None = None) -> SphericalPanorama:
    """Project a submap (or raw (N, 3) array) into a range panorama.

    Points beyond `max_range_m` and the degenerate r=0 point are discarded;
    an empty input yields the all-zero panorama.  The sensor frame is
    assumed z-up; pass `axis_remap` for other conventions.
    """
    if bandwidth < 2:
        raise ValueError("bandwidth must be >= 2")
    if max_range_m <= 0:
        raise ValueError("max_range_m must be positive")
    frame_id = getattr(frame_or_points, "frame_id", None)
    points = getattr(frame_or_points, "points", frame_or_points)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if axis_remap is not None:
        points = remap_axes(points, axis_remap)
    grid = kernels.min_range_grid(points, 2 * bandwidth, max_range_m, backend=backend)
    values = np.where(np.isinf(grid), 0.0, grid / max_range_m)
    return SphericalPanorama(values, bandwidth, max_range_m, frame_id)


def rotate_panorama_yaw(pano: SphericalPanorama, steps: int) -> SphericalPanorama:
    """Circular shift along the azimuth axis by `steps` cells.

    Equals projecting the point cloud rotated by yaw = steps * 2pi/2B, up to
    cell-boundary ties.
    """
    return SphericalPanorama(np.roll(pano.values, steps, axis=0),
                             pano.bandwidth, pano.max_range_m, pano.frame_id)


def save_panorama(pano: SphericalPanorama, path) -> None:
    """Raw little-endian float32 grid next to a JSON sidecar."""
    path = Path(path)
    pano.values.astype("<f4").tofile(path)
    sidecar = {"bandwidth": pano.bandwidth, "max_range_m": pano.max_range_m,
               "frame_id": pano.frame_id}
    path.with_suffix(".json").write_text(json.dumps(sidecar))


def load_panorama(path) -> SphericalPanorama:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    n = 2 * int(meta["bandwidth"])
    values = np.fromfile(path, dtype="<f4").reshape(n, n).astype(np.float64)
    return SphericalPanorama(values, int(meta["bandwidth"]),
                             float(meta["max_range_m"]), meta.get("frame_id"))
