# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels for panorama preprocessing.

The per-point bin-and-min loop dominates preprocessing time for raw LiDAR
submaps; `sphereloc.kernels` falls back to a vectorized numpy version when
this extension is not built.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, acos, atan2, isfinite, sqrt

cnp.import_array()


def min_range_grid(double[:, ::1] points, int n_cells, double max_range):
    """Bin points into an (n_cells, n_cells) [azimuth, polar] grid keeping the
    minimum range per cell; empty cells hold +inf.  Points at the origin,
    beyond max_range or non-finite are skipped."""
    cdef Py_ssize_t n = points.shape[0]
    cdef double cell_a = 2.0 * M_PI / n_cells
    cdef double cell_b = M_PI / n_cells
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.full(
        (n_cells, n_cells), np.inf, dtype=np.float64)
    cdef double[:, ::1] grid = out
    cdef Py_ssize_t i
    cdef int ia, ib
    cdef double x, y, z, r, az, polar
    for i in range(n):
        x = points[i, 0]
        y = points[i, 1]
        z = points[i, 2]
        if not (isfinite(x) and isfinite(y) and isfinite(z)):
            continue
        r = sqrt(x * x + y * y + z * z)
        if r == 0.0 or r > max_range:
            continue
        az = atan2(y, x)
        if az < 0.0:
            az += 2.0 * M_PI
        polar = acos(z / r)
        ia = <int>(az / cell_a)
        if ia >= n_cells:
            ia = n_cells - 1
        ib = <int>(polar / cell_b)
        if ib >= n_cells:
            ib = n_cells - 1
        if r < grid[ia, ib]:
            grid[ia, ib] = r
    return out
