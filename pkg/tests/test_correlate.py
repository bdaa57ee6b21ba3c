import numpy as np
import pytest
from oracles import eval_s2, eval_so3_lowdegree, zyz_matrix

from sphereloc.exceptions import BandwidthMismatch, ChannelMismatch
from sphereloc.geometry import random_rotation
from sphereloc.harmonics import (
    alpha_grid,
    beta_grid,
    quadrature_weights,
    random_s2_coefficients,
    random_so3_coefficients,
    rotate_s2_coefficients,
    rotate_s2_signal,
    rotate_signal,
    rotate_so3_coefficients,
    rotate_so3_signal,
    s2_correlate,
    sht_inverse,
    so3_correlate,
    so3_ft_forward,
    so3_ft_inverse,
)


def s2_grid_dirs(B):
    A, P = np.meshgrid(alpha_grid(B), beta_grid(B), indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], -1)
    return A, P, dirs


def test_constant_signal_gives_constant_output(rng):
    B = 4
    psi = random_s2_coefficients(B, rng, channels=(1, 1)).data
    out = s2_correlate(np.full((1, 2 * B, 2 * B), 2.5), psi)
    assert out.values.shape == (1, 2 * B, 2 * B, 2 * B)
    assert np.allclose(out.values, out.values.ravel()[0], atol=1e-12)


def test_s2_correlation_matches_direct_quadrature(rng):
    """Harmonic path == direct integration of int psi(R^-1 w) f(w) dw."""
    B = 3
    fhat = random_s2_coefficients(B, rng)
    psihat = random_s2_coefficients(B, rng)
    f_grid = sht_inverse(fhat).real
    out = s2_correlate(f_grid[None], psihat.data[None, None]).values[0]
    A, P, dirs = s2_grid_dirs(B)
    w = quadrature_weights(B)
    al = alpha_grid(B)
    be = beta_grid(B)
    worst = 0.0
    for ia in range(2 * B):
        for jb in range(2 * B):
            for kg in range(2 * B):
                R = zyz_matrix(al[ia], be[jb], al[kg])
                back = dirs @ R
                pol = np.arccos(np.clip(back[..., 2], -1, 1))
                az = np.arctan2(back[..., 1], back[..., 0]) % (2 * np.pi)
                psi_rot = eval_s2(psihat.data, az, pol).real
                val = (2 * np.pi / (2 * B)) * np.einsum("ab,ab,b->", psi_rot, f_grid, w)
                worst = max(worst, abs(val - out[ia, jb, kg]))
    assert worst / np.abs(out).max() < 1e-5


def test_so3_correlation_matches_direct_quadrature(rng):
    """Harmonic path == direct integration of int psi(R^-1 Q) g(Q) dQ,
    with the integrand evaluated from closed-form Wigner blocks only."""
    B = 2
    ghat = random_so3_coefficients(B, rng)
    psihat = random_so3_coefficients(B, rng)
    g_grid = so3_ft_inverse(ghat).real
    out = so3_correlate(g_grid[None], psihat.data[None, None]).values[0]
    al = alpha_grid(B)
    be = beta_grid(B)
    w = quadrature_weights(B)
    quad_R = [(ia, jb, kg, zyz_matrix(al[ia], be[jb], al[kg]))
              for ia in range(2 * B) for jb in range(2 * B) for kg in range(2 * B)]
    haar = (2 * np.pi / (2 * B)) ** 2 / (8 * np.pi**2)
    worst = 0.0
    for ia, jb, kg, R in quad_R:
        val = 0.0
        for ia2, jb2, kg2, Q in quad_R:
            psi_val = eval_so3_lowdegree(psihat.data, R.T @ Q).real
            val += psi_val * g_grid[ia2, jb2, kg2] * w[jb2]
        val *= haar
        worst = max(worst, abs(val - out[ia, jb, kg]))
    assert worst / np.abs(out).max() < 1e-5


def test_identity_filter_reproduces_input(rng):
    B = 3
    ghat = random_so3_coefficients(B, rng)
    g_grid = so3_ft_inverse(ghat).real
    psi = np.zeros((1, 1, B, 2 * B - 1, 2 * B - 1), dtype=complex)
    c = B - 1
    for l in range(B):
        psi[0, 0, l, c - l:c + l + 1, c - l:c + l + 1] = np.eye(2 * l + 1)
    out = so3_correlate(g_grid[None], psi).values[0]
    assert np.allclose(out, g_grid, atol=1e-10)


@pytest.mark.parametrize("space", ["s2", "so3"])
def test_equivariance(space, rng):
    B = 6
    R = random_rotation(rng)
    if space == "s2":
        fhat = random_s2_coefficients(B, rng)
        psihat = random_s2_coefficients(B, rng).data[None, None]
        out_of_rotated = s2_correlate(
            sht_inverse(rotate_s2_coefficients(fhat, R)).real[None], psihat).values[0]
        base = s2_correlate(sht_inverse(fhat).real[None], psihat).values[0]
    else:
        ghat = random_so3_coefficients(B, rng)
        psihat = random_so3_coefficients(B, rng).data[None, None]
        out_of_rotated = so3_correlate(
            so3_ft_inverse(rotate_so3_coefficients(ghat, R)).real[None], psihat).values[0]
        base = so3_correlate(so3_ft_inverse(ghat).real[None], psihat).values[0]
    rotated_out = so3_ft_inverse(
        rotate_so3_coefficients(so3_ft_forward(base), R)).real
    rel = np.abs(out_of_rotated - rotated_out).max() / np.abs(base).max()
    assert rel < 1e-6


def test_bandwidth_reduction_output_grid(rng):
    B, b_out = 6, 3
    f = sht_inverse(random_s2_coefficients(B, rng)).real
    psi = random_s2_coefficients(b_out, rng, channels=(2, 1)).data
    out = s2_correlate(f[None], psi)
    assert out.values.shape == (2, 2 * b_out, 2 * b_out, 2 * b_out)
    assert out.bandwidth == b_out


def test_channel_sum_linearity(rng):
    B = 3
    f = sht_inverse(random_s2_coefficients(B, rng, channels=(2,))).real
    psi = random_s2_coefficients(B, rng, channels=(1, 2)).data
    combined = s2_correlate(f, psi).values[0]
    separate = sum(
        s2_correlate(f[c][None], psi[:, c][:, None]).values[0] for c in range(2))
    assert np.allclose(combined, separate, atol=1e-10)


def test_yaw_shift_commutes_with_correlation(rng):
    """Grid-aligned azimuth roll of the input rolls the output's alpha axis."""
    B = 4
    f = sht_inverse(random_s2_coefficients(B, rng)).real
    psi = random_s2_coefficients(B, rng, channels=(1, 1)).data
    k = 3
    out_shifted = s2_correlate(np.roll(f, k, axis=0)[None], psi).values[0]
    base = s2_correlate(f[None], psi).values[0]
    assert np.allclose(out_shifted, np.roll(base, k, axis=0), atol=1e-10)


def test_rotate_signal_identity_and_composition(rng):
    B = 6
    f = sht_inverse(random_s2_coefficients(B, rng)).real
    assert np.allclose(rotate_s2_signal(f, np.eye(3)), f, atol=1e-10)
    R1, R2 = random_rotation(rng), random_rotation(rng)
    two_step = rotate_s2_signal(rotate_s2_signal(f, R1), R2)
    direct = rotate_s2_signal(f, R2 @ R1)
    assert np.allclose(two_step, direct, atol=1e-8)
    g = so3_ft_inverse(random_so3_coefficients(4, rng)).real
    assert np.allclose(rotate_so3_signal(g, np.eye(3)), g, atol=1e-10)
    R1, R2 = random_rotation(rng), random_rotation(rng)
    two = rotate_so3_signal(rotate_so3_signal(g, R1), R2)
    assert np.allclose(two, rotate_so3_signal(g, R2 @ R1), atol=1e-8)


def test_rotate_grid_aligned_yaw_is_index_shift(rng):
    B = 8
    f = sht_inverse(random_s2_coefficients(B, rng)).real
    k = 5
    yaw = 2 * np.pi * k / (2 * B)
    rotated = rotate_signal(f, (yaw, 0.0, 0.0))
    assert np.allclose(rotated, np.roll(f, k, axis=0), atol=1e-10)


def test_mismatch_errors(rng):
    B = 4
    f = np.zeros((2, 2 * B, 2 * B))
    psi_big = random_s2_coefficients(8, rng, channels=(1, 2)).data
    with pytest.raises(BandwidthMismatch):
        s2_correlate(f, psi_big)
    psi_wrongc = random_s2_coefficients(B, rng, channels=(1, 3)).data
    with pytest.raises(ChannelMismatch):
        s2_correlate(f, psi_wrongc)
    g = np.zeros((2, 2 * B, 2 * B, 2 * B))
    psi3 = random_so3_coefficients(B, rng, channels=(1, 3)).data
    with pytest.raises(ChannelMismatch):
        so3_correlate(g, psi3)
