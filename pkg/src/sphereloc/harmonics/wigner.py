"""Wigner-d tables, Wigner-D matrices and quadrature weights.

Conventions (fixed globally, quantum normalization, Condon-Shortley phase):

  d^l_{mn}(beta)           = <l m| exp(-i beta Jy) |l n>, real.
  D^l_{mn}(alpha,beta,gamma) = exp(-i m alpha) d^l_{mn}(beta) exp(-i n gamma)
                             for the ZYZ rotation Rz(alpha) Ry(beta) Rz(gamma).
  Y_l^m(beta, alpha)        = sqrt((2l+1)/(4 pi)) d^l_{m0}(beta) exp(i m alpha)

Sampling grids at bandwidth B (2B points per angle):

  alpha_k = 2 pi k / (2B),  k = 0..2B-1        (same grid for gamma)
  beta_j  = pi (2j+1) / (4B), j = 0..2B-1      (offset, pole-free)

The beta quadrature weights make sums over the offset grid reproduce
integrals of polynomials in cos(beta) up to degree 2B-1 exactly, which is
what makes the bandlimited transforms in `transforms` exact.

Tables are computed once per bandwidth in float64 and cached read-only;
they are safe to share across threads.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import comb

from ..geometry import matrix_to_euler_zyz


def alpha_grid(bandwidth: int) -> np.ndarray:
    """Azimuth sample angles, 2B equally spaced points starting at 0."""
    k = np.arange(2 * bandwidth)
    return 2.0 * np.pi * k / (2 * bandwidth)


def beta_grid(bandwidth: int) -> np.ndarray:
    """Polar sample angles, 2B offset points (cell centers, no poles)."""
    j = np.arange(2 * bandwidth)
    return np.pi * (2 * j + 1) / (4 * bandwidth)


@lru_cache(maxsize=None)
def quadrature_weights(bandwidth: int) -> np.ndarray:
    """Polar weights w_j with sum_j w_j P(cos beta_j) = int_0^pi P(cos b) sin b db
    for every polynomial P of degree < 2B."""
    B = bandwidth
    theta = beta_grid(B)
    k = np.arange(B)
    s = np.sin(np.outer(theta, 2 * k + 1)) / (2 * k + 1)
    w = (2.0 / B) * np.sin(theta) * s.sum(axis=1)
    w.flags.writeable = False
    return w


def wigner_d_stack(bandwidth: int, beta: np.ndarray) -> np.ndarray:
    """Wigner little-d values d^l_{mn}(beta) for all l < bandwidth.

    Returns an array of shape (B, 2B-1, 2B-1, len(beta)) indexed
    [l, m + B-1, n + B-1, j]; entries with max(|m|,|n|) > l are zero.

    Uses the degree recursion seeded by the closed-form boundary row
    d^l_{l,n} = sqrt(C(2l, l-n)) cos^{l+n}(b/2) (-sin(b/2))^{l-n}
    and the symmetries d_{mn} = (-1)^{m-n} d_{nm} = d_{-n,-m}.
    """
    B = int(bandwidth)
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    J = beta.size
    M = 2 * B - 1
    c = B - 1
    d = np.zeros((B, M, M, J))
    x = np.cos(beta)
    cos_h = np.cos(beta / 2.0)
    sin_h = np.sin(beta / 2.0)
    d[0, c, c] = 1.0

    m = np.arange(-(B - 1), B)
    mg, ng = np.meshgrid(m, m, indexing="ij")  # (M, M)

    for l in range(1, B):
        if l == 1:
            d[1, c, c] = x
        else:
            p = l - 1
            interior = (np.abs(mg) < l) & (np.abs(ng) < l)
            a = (2 * p + 1) * (p * (p + 1) * x[None, None, :]
                               - (mg * ng)[:, :, None])
            b2 = (p * p - mg * mg) * (p * p - ng * ng)
            b = (p + 1) * np.sqrt(np.where(b2 > 0, b2, 0).astype(np.float64))
            d2 = (l * l - mg * mg) * (l * l - ng * ng)
            den = p * np.sqrt(np.where(interior, d2, 1).astype(np.float64))
            den = np.where(interior, den, 1.0)
            new = (a * d[l - 1] - b[:, :, None] * d[l - 2]) / den[:, :, None]
            d[l] = np.where(interior[:, :, None], new, 0.0)
        # boundary strips (max(|m|,|n|) == l) from the closed form
        n_arr = np.arange(-l, l + 1)
        t = (np.sqrt(comb(2 * l, l - n_arr))[:, None]
             * cos_h[None, :] ** (l + n_arr)[:, None]
             * (-sin_h[None, :]) ** (l - n_arr)[:, None])  # (2l+1, J)
        tm = t[::-1]  # row n of tm is the closed form at -n
        sign = ((-1.0) ** (n_arr - l))[:, None]
        d[l, c + l, c - l:c + l + 1] = t
        d[l, c - l:c + l + 1, c + l] = sign * t
        d[l, c - l, c - l:c + l + 1] = ((-1.0) ** (n_arr + l))[:, None] * tm
        d[l, c - l:c + l + 1, c - l] = tm
    return d


@lru_cache(maxsize=None)
def wigner_d_table(bandwidth: int) -> np.ndarray:
    """`wigner_d_stack` on the standard beta grid, cached read-only."""
    d = wigner_d_stack(bandwidth, beta_grid(bandwidth))
    d.flags.writeable = False
    return d


@lru_cache(maxsize=None)
def sph_basis_table(bandwidth: int) -> np.ndarray:
    """Y_l^m(beta_j, alpha=0), real, shape (B, 2B-1, 2B): the n=0 slice of
    the d stack scaled to orthonormal spherical harmonics.

    Computes the full stack transiently instead of going through the cached
    table, so large bandwidths used only on the sphere do not pin the
    (B, 2B-1, 2B-1, 2B) array in memory."""
    B = bandwidth
    d = wigner_d_stack(B, beta_grid(B))
    l = np.arange(B)
    scale = np.sqrt((2 * l + 1) / (4.0 * np.pi))
    tbl = np.ascontiguousarray(scale[:, None, None] * d[:, :, B - 1, :])
    tbl.flags.writeable = False
    return tbl


def wigner_d_matrix(degree: int, beta: float) -> np.ndarray:
    """Single (2l+1, 2l+1) little-d block at one angle."""
    B = degree + 1
    full = wigner_d_stack(B, np.array([beta]))[degree, :, :, 0]
    lo = (B - 1) - degree
    hi = (B - 1) + degree + 1
    return full[lo:hi, lo:hi]


def wigner_D_blocks(bandwidth: int, rotation) -> np.ndarray:
    """Padded D^l blocks for one rotation: (B, 2B-1, 2B-1) complex.

    `rotation` is a 3x3 matrix or an (alpha, beta, gamma) ZYZ triple.
    Entry [l, m+B-1, n+B-1] = D^l_{mn}; zero outside |m|,|n| <= l.
    """
    alpha, beta, gamma = as_euler_zyz(rotation)
    B = bandwidth
    d = wigner_d_stack(B, np.array([beta]))[:, :, :, 0]
    m = np.arange(-(B - 1), B)
    ph_m = np.exp(-1j * m * alpha)
    ph_n = np.exp(-1j * m * gamma)
    return ph_m[:, None] * d * ph_n[None, :]


def wigner_D_matrix(degree: int, alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Single (2l+1, 2l+1) Wigner-D block."""
    d = wigner_d_matrix(degree, beta)
    m = np.arange(-degree, degree + 1)
    return np.exp(-1j * m * alpha)[:, None] * d * np.exp(-1j * m * gamma)[None, :]


def as_euler_zyz(rotation) -> tuple[float, float, float]:
    """Accept a 3x3 matrix or an (alpha, beta, gamma) triple."""
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape == (3, 3):
        return matrix_to_euler_zyz(rotation)
    if rotation.shape == (3,):
        return float(rotation[0]), float(rotation[1]), float(rotation[2])
    raise ValueError(f"rotation must be 3x3 matrix or euler triple, got shape {rotation.shape}")
