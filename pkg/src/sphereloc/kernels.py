"""Backend selection for the compiled hot kernels.

The Cython extension is preferred when built; a vectorized numpy fallback is
always available.  `SPHERELOC_FORCE_NUMPY=1` pins the fallback (used by the
backend benchmark and by tests that compare the two paths).
"""
from __future__ import annotations

import os

import numpy as np

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; pure-python install
    _compiled = None

HAVE_COMPILED = _compiled is not None


def _force_numpy() -> bool:
    return os.environ.get("SPHERELOC_FORCE_NUMPY", "") not in ("", "0")


def active_backend() -> str:
    return "cython" if HAVE_COMPILED and not _force_numpy() else "numpy"


def min_range_grid(points: np.ndarray, n_cells: int, max_range: float,
                   backend: str | None = None) -> np.ndarray:
    """Minimum range per [azimuth, polar] cell; +inf marks empty cells.

    Skips origin points, points beyond `max_range` and non-finite points.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {points.shape}")
    if backend is None:
        backend = active_backend()
    if backend == "cython":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.min_range_grid(points, n_cells, max_range)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    return _min_range_grid_numpy(points, n_cells, max_range)


def _min_range_grid_numpy(points: np.ndarray, n_cells: int, max_range: float) -> np.ndarray:
    grid = np.full((n_cells, n_cells), np.inf)
    if points.size == 0:
        return grid
    finite = np.isfinite(points).all(axis=1)
    pts = points[finite]
    r = np.linalg.norm(pts, axis=1)
    keep = (r > 0.0) & (r <= max_range)
    pts, r = pts[keep], r[keep]
    if r.size == 0:
        return grid
    az = np.arctan2(pts[:, 1], pts[:, 0])
    az = np.where(az < 0.0, az + 2.0 * np.pi, az)
    polar = np.arccos(pts[:, 2] / r)
    ia = np.minimum((az / (2.0 * np.pi / n_cells)).astype(np.intp), n_cells - 1)
    ib = np.minimum((polar / (np.pi / n_cells)).astype(np.intp), n_cells - 1)
    np.minimum.at(grid, (ia, ib), r)
    return grid
