"""Correlation of signals with rotated filters, computed in the harmonic domain.

Definitions realized here (verified against direct quadrature in the tests):

  sphere -> rotation group
      [psi * f](R) = int_{S^2} psi(R^{-1} w) f(w) dw
      blocks: Chat^l_{mn} = sum_c fhat^l_m[c] conj(psihat^l_n[c]) / (2l+1)

  rotation group -> rotation group
      [psi * g](R) = int_{SO(3)} psi(R^{-1} Q) g(Q) dQ
      blocks: Chat^l = sum_c ghat^l[c] @ psihat^l[c]^H

Rotating the input by G rotates the output by G (left action); in
coefficient space the action on both signal types is multiplication of the
degree-l block by the Wigner matrix D^l(G).  Filters live directly in
coefficient space at their own (possibly smaller) bandwidth; the output is
synthesized at the filter bandwidth, which truncates degrees alias-free.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import BandwidthMismatch, ChannelMismatch
from .transforms import (
    S2Coefficients,
    SO3Coefficients,
    SO3FeatureMap,
    real_part,
    sht_forward,
    sht_inverse,
    so3_ft_forward,
    so3_ft_inverse,
)
from .wigner import wigner_D_blocks


def _filter_bandwidth(filter_data: np.ndarray) -> int:
    B = filter_data.shape[-2] if filter_data.ndim >= 2 else 0
    if filter_data.ndim < 2 or filter_data.shape[-1] != 2 * B - 1:
        raise BandwidthMismatch(
            f"filter coefficient array has bad shape {filter_data.shape}")
    return B


def s2_correlate(signal: np.ndarray,
                 filters: np.ndarray,
                 check_real: bool = True) -> SO3FeatureMap:
    """Correlate a (C_in, 2B, 2B) sphere signal with a filter bank.

    `filters`: complex coefficients (C_out, C_in, B_f, 2B_f - 1), B_f <= B.
    Returns an SO(3) feature map with C_out channels at bandwidth B_f.
    """
    signal = np.asarray(signal)
    if signal.ndim == 2:
        signal = signal[None]
    filters = np.asarray(filters, dtype=complex)
    if filters.ndim != 4:
        raise ChannelMismatch(
            f"filter bank must be (C_out, C_in, B, 2B-1), got {filters.shape}")
    b_out = _filter_bandwidth(filters)
    if signal.shape[0] != filters.shape[1]:
        raise ChannelMismatch(
            f"signal has {signal.shape[0]} channels, filters expect {filters.shape[1]}")
    fhat = sht_forward(signal)
    if b_out > fhat.bandwidth:
        raise BandwidthMismatch(
            f"filter bandwidth {b_out} exceeds signal bandwidth {fhat.bandwidth}")
    fh = fhat.truncated(b_out).data  # (C_in, B_f, 2B_f-1)
    l = np.arange(b_out)
    blocks = np.einsum("ilm,oiln->olmn", fh, np.conj(filters))
    blocks /= (2 * l + 1)[:, None, None]
    out = so3_ft_inverse(SO3Coefficients(b_out, blocks))
    return SO3FeatureMap(real_part(out) if check_real else out.real)


def so3_correlate(signal: np.ndarray | SO3FeatureMap,
                  filters: np.ndarray,
                  check_real: bool = True) -> SO3FeatureMap:
    """Correlate a (C_in, 2B, 2B, 2B) rotation-group signal with a filter bank.

    `filters`: complex coefficients (C_out, C_in, B_f, 2B_f-1, 2B_f-1), B_f <= B.
    Returns an SO(3) feature map with C_out channels at bandwidth B_f.
    """
    if isinstance(signal, SO3FeatureMap):
        signal = signal.values
    signal = np.asarray(signal)
    if signal.ndim == 3:
        signal = signal[None]
    filters = np.asarray(filters, dtype=complex)
    if filters.ndim != 5:
        raise ChannelMismatch(
            f"filter bank must be (C_out, C_in, B, 2B-1, 2B-1), got {filters.shape}")
    b_out = filters.shape[-3]
    if filters.shape[-2:] != (2 * b_out - 1, 2 * b_out - 1):
        raise BandwidthMismatch(
            f"filter coefficient array has bad shape {filters.shape}")
    if signal.shape[0] != filters.shape[1]:
        raise ChannelMismatch(
            f"signal has {signal.shape[0]} channels, filters expect {filters.shape[1]}")
    ghat = so3_ft_forward(signal)
    if b_out > ghat.bandwidth:
        raise BandwidthMismatch(
            f"filter bandwidth {b_out} exceeds signal bandwidth {ghat.bandwidth}")
    gh = ghat.truncated(b_out).data  # (C_in, B_f, M, M)
    blocks = np.einsum("ilmk,oilnk->olmn", gh, np.conj(filters))
    out = so3_ft_inverse(SO3Coefficients(b_out, blocks))
    return SO3FeatureMap(real_part(out) if check_real else out.real)


def rotate_s2_coefficients(coeffs: S2Coefficients, rotation) -> S2Coefficients:
    D = wigner_D_blocks(coeffs.bandwidth, rotation)
    return S2Coefficients(coeffs.bandwidth,
                          np.einsum("lmk,...lk->...lm", D, coeffs.data))


def rotate_so3_coefficients(coeffs: SO3Coefficients, rotation) -> SO3Coefficients:
    D = wigner_D_blocks(coeffs.bandwidth, rotation)
    return SO3Coefficients(coeffs.bandwidth,
                           np.einsum("lmk,...lkn->...lmn", D, coeffs.data))


def rotate_s2_signal(values: np.ndarray, rotation, check_real: bool | None = None) -> np.ndarray:
    """Resample a grid signal f as f(R^{-1} w), exactly for bandlimited f."""
    values = np.asarray(values)
    rotated = rotate_s2_coefficients(sht_forward(values), rotation)
    out = sht_inverse(rotated)
    if check_real is None:
        check_real = not np.iscomplexobj(values)
    return real_part(out) if check_real else out


def rotate_so3_signal(values: np.ndarray, rotation, check_real: bool | None = None) -> np.ndarray:
    """Resample an Euler-grid signal g as g(R^{-1} Q), exactly for bandlimited g."""
    values = np.asarray(values)
    rotated = rotate_so3_coefficients(so3_ft_forward(values), rotation)
    out = so3_ft_inverse(rotated)
    if check_real is None:
        check_real = not np.iscomplexobj(values)
    return real_part(out) if check_real else out


def rotate_signal(signal, rotation):
    """Rotate a signal by a 3x3 matrix or ZYZ euler triple.

    Dispatch: SO3FeatureMap -> channelwise SO(3) rotation; 2-d array -> S^2
    signal; 3-d array -> SO(3) signal.  Channelled raw arrays should use the
    explicit functions.
    """
    if isinstance(signal, SO3FeatureMap):
        return SO3FeatureMap(rotate_so3_signal(signal.values, rotation))
    arr = np.asarray(signal)
    if arr.ndim == 2:
        return rotate_s2_signal(arr, rotation)
    if arr.ndim == 3:
        return rotate_so3_signal(arr, rotation)
    raise ValueError("cannot infer signal type from array rank; use the "
                     "rotate_s2_signal / rotate_so3_signal functions")
