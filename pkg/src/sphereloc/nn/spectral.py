"""Torch-side spectral helpers for the correlation layers.

Tables come from the float64 reference path in `sphereloc.harmonics`; layers
register them as buffers so dtype follows the module.  Centered coefficient
order m = -(B-1)..B-1 maps to FFT bins via two slice copies (negative
frequencies live in the upper bins; the Nyquist bin stays empty), which keeps
everything autograd-friendly.
"""
from __future__ import annotations

import numpy as np
import torch

from ..harmonics import quadrature_weights, sph_basis_table, wigner_d_table


def gather_centered(fft_values: torch.Tensor, half_modes: int, dim: int) -> torch.Tensor:
    """Pick FFT bins for m = -(half_modes-1)..(half_modes-1), centered order."""
    n = fft_values.shape[dim]
    neg = fft_values.narrow(dim, n - (half_modes - 1), half_modes - 1)
    pos = fft_values.narrow(dim, 0, half_modes)
    return torch.cat([neg, pos], dim=dim)


def scatter_centered(centered: torch.Tensor, n_bins: int, dim: int) -> torch.Tensor:
    """Inverse of `gather_centered`: place centered modes into FFT bins."""
    half = (centered.shape[dim] + 1) // 2
    shape = list(centered.shape)
    shape[dim] = n_bins
    out = centered.new_zeros(shape)
    out.narrow(dim, 0, half).copy_(centered.narrow(dim, half - 1, half))
    out.narrow(dim, n_bins - (half - 1), half - 1).copy_(centered.narrow(dim, 0, half - 1))
    return out


def s2_analysis_table(b_in: int, b_out: int) -> np.ndarray:
    """(b_out, 2 b_out - 1, 2 b_in): quadrature-weighted Y rows l < b_out."""
    tbl = sph_basis_table(b_in) * quadrature_weights(b_in)[None, None, :]
    tbl = tbl * (2.0 * np.pi / (2 * b_in))
    c = b_in - 1
    return np.ascontiguousarray(tbl[:b_out, c - (b_out - 1):c + b_out, :])


def so3_analysis_table(b_in: int, b_out: int) -> np.ndarray:
    """(b_out, M, M, 2 b_in): weighted little-d rows for the forward transform."""
    tbl = wigner_d_table(b_in) * quadrature_weights(b_in)[None, None, None, :]
    tbl = tbl / (2.0 * (2 * b_in) ** 2)
    c = b_in - 1
    sl = slice(c - (b_out - 1), c + b_out)
    return np.ascontiguousarray(tbl[:b_out, sl, sl, :])


def so3_synthesis_table(b_out: int, degree_weighted: bool) -> np.ndarray:
    """(b_out, M, M, 2 b_out) little-d synthesis table, optionally x(2l+1)."""
    tbl = np.array(wigner_d_table(b_out))
    if degree_weighted:
        l = np.arange(b_out)
        tbl = tbl * (2 * l + 1)[:, None, None, None]
    return np.ascontiguousarray(tbl)


def s2_filter_masks(bandwidth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(real mask, imag mask, mirror sign) for reality-symmetric S^2 filters.

    Free parameters occupy m >= 0 (the m=0 coefficient is real); negative
    orders are the mirrored conjugates with sign (-1)^m.
    """
    B = bandwidth
    m = np.arange(-(B - 1), B)
    l = np.arange(B)
    valid = np.abs(m)[None, :] <= l[:, None]
    upper = valid & (m[None, :] >= 0)
    re_mask = upper.astype(np.float64)
    im_mask = (upper & (m[None, :] > 0)).astype(np.float64)
    sign = (-1.0) ** np.abs(m)
    return re_mask, im_mask, np.broadcast_to(sign, valid.shape).copy()


def so3_filter_masks(bandwidth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(real mask, imag mask, mirror sign) for reality-symmetric SO(3) filters.

    Free parameters occupy m > 0, or m == 0 with n >= 0; the (0, 0) entry is
    real.  The mirror image (-m, -n) carries sign (-1)^(m-n)."""
    B = bandwidth
    m = np.arange(-(B - 1), B)
    l = np.arange(B)
    valid = (np.abs(m)[None, :, None] <= l[:, None, None]) \
        & (np.abs(m)[None, None, :] <= l[:, None, None])
    up = (m[:, None] > 0) | ((m[:, None] == 0) & (m[None, :] >= 0))
    upper = valid & up[None]
    re_mask = upper.astype(np.float64)
    im_mask = (upper & ~((m[:, None] == 0) & (m[None, :] == 0))[None]).astype(np.float64)
    sign = (-1.0) ** (m[:, None] - m[None, :])
    return re_mask, im_mask, np.broadcast_to(sign, valid.shape).copy()


def assemble_s2_filter(re: torch.Tensor, im: torch.Tensor, re_mask: torch.Tensor,
                       im_mask: torch.Tensor, sign: torch.Tensor) -> torch.Tensor:
    """Build complex reality-symmetric coefficients from free real parameters."""
    upper = torch.complex(re * re_mask, im * im_mask)
    mirror = sign * torch.conj(upper.flip(-1))
    lower = mirror * (1.0 - (re_mask > 0).to(re.dtype))
    return upper + lower


def assemble_so3_filter(re: torch.Tensor, im: torch.Tensor, re_mask: torch.Tensor,
                        im_mask: torch.Tensor, sign: torch.Tensor) -> torch.Tensor:
    upper = torch.complex(re * re_mask, im * im_mask)
    mirror = sign * torch.conj(upper.flip(-2, -1))
    lower = mirror * (1.0 - (re_mask > 0).to(re.dtype))
    return upper + lower
