"""Rotation utilities: ZYZ Euler angles <-> matrices, rigid transforms.

One convention is used everywhere: a rotation (alpha, beta, gamma) is the
matrix product Rz(alpha) @ Ry(beta) @ Rz(gamma), alpha/gamma in [0, 2*pi),
beta in [0, pi].
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * np.pi


def euler_zyz_to_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rz(alpha) @ Ry(beta) @ Rz(gamma) as a 3x3 float64 matrix."""
    return Rotation.from_euler("ZYZ", [alpha, beta, gamma]).as_matrix()


def matrix_to_euler_zyz(matrix: np.ndarray) -> tuple[float, float, float]:
    """Inverse of `euler_zyz_to_matrix` up to gimbal-lock equivalence.

    At beta = 0 or pi only alpha+gamma (resp. alpha-gamma) is determined;
    gamma is reported as 0 there.
    """
    a, b, g = Rotation.from_matrix(matrix).as_euler("ZYZ")
    return float(a % TWO_PI), float(b), float(g % TWO_PI)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation matrix."""
    return Rotation.random(random_state=int(rng.integers(2**31 - 1))).as_matrix()


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation about +z by `yaw` radians."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_points(points: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Apply a rotation matrix to an (N, 3) point array."""
    return np.asarray(points) @ np.asarray(matrix).T


def check_rotation(matrix: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ValueError unless `matrix` is orthonormal with det +1."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {matrix.shape}")
    err = np.linalg.norm(matrix.T @ matrix - np.eye(3))
    if err > tol:
        raise ValueError(f"rotation not orthonormal: ||R^T R - I|| = {err:.2e}")
    if np.linalg.det(matrix) < 0:
        raise ValueError("rotation has negative determinant")
