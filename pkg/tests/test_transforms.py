import numpy as np
import pytest
from oracles import sph_harm_fn

from sphereloc.exceptions import BadGridShape
from sphereloc.harmonics import (
    S2Coefficients,
    SO3Coefficients,
    alpha_grid,
    beta_grid,
    coeff_inner_s2,
    coeff_inner_so3,
    grid_inner_s2,
    grid_inner_so3,
    random_s2_coefficients,
    random_so3_coefficients,
    sht_forward,
    sht_inverse,
    so3_ft_forward,
    so3_ft_inverse,
    wigner_D_matrix,
)


def grid_angles(B):
    return np.meshgrid(alpha_grid(B), beta_grid(B), indexing="ij")


def test_constant_signal_is_pure_degree_zero():
    B = 8
    ghat = sht_forward(np.full((2 * B, 2 * B), 3.7))
    assert ghat.data[0, B - 1] == pytest.approx(3.7 * np.sqrt(4 * np.pi), abs=1e-12)
    rest = ghat.data.copy()
    rest[0, B - 1] = 0
    assert np.abs(rest).max() < 1e-12


def test_sampled_harmonic_recovers_unit_coefficient():
    B = 6
    A, P = grid_angles(B)
    c = B - 1
    # complex Y_2^1 sampled on the grid -> unit coefficient at (2, 1)
    fhat = sht_forward(sph_harm_fn(1, 2, A, P))
    expected = np.zeros_like(fhat.data)
    expected[2, c + 1] = 1.0
    assert np.abs(fhat.data - expected).max() < 1e-10
    # its real part splits into +-0.5 at m = +-1
    rhat = sht_forward(sph_harm_fn(1, 2, A, P).real)
    assert rhat.data[2, c + 1] == pytest.approx(0.5, abs=1e-10)
    assert rhat.data[2, c - 1] == pytest.approx(-0.5, abs=1e-10)


def test_s2_roundtrips(rng):
    for B in (8, 16):
        fhat = random_s2_coefficients(B, rng, real_signal=False)
        grid = sht_inverse(fhat)
        back = sht_forward(grid)
        assert np.abs(back.data - fhat.data).max() < 1e-10
    # real-symmetric coefficients synthesize a real grid
    fhat = random_s2_coefficients(8, rng, real_signal=True)
    grid = sht_inverse(fhat)
    assert np.abs(grid.imag).max() < 1e-12


def test_zero_and_cosbeta_synthesis():
    B = 5
    zero = sht_inverse(S2Coefficients(B, np.zeros((B, 2 * B - 1), dtype=complex)))
    assert np.abs(zero).max() == 0.0
    data = np.zeros((B, 2 * B - 1), dtype=complex)
    data[1, B - 1] = 1.0  # (l=1, m=0); Y_1^0 = sqrt(3/4pi) cos(beta)
    grid = sht_inverse(S2Coefficients(B, data)).real
    expected = np.sqrt(3 / (4 * np.pi)) * np.cos(beta_grid(B))[None, :]
    assert np.allclose(grid, np.broadcast_to(expected, grid.shape), atol=1e-12)


def test_so3_zero_and_roundtrip(rng):
    B = 4
    zero = so3_ft_forward(np.zeros((2 * B, 2 * B, 2 * B)))
    assert np.abs(zero.data).max() == 0.0
    ghat = random_so3_coefficients(B, rng, real_signal=False)
    grid = so3_ft_inverse(ghat)
    back = so3_ft_forward(grid)
    assert np.abs(back.data - ghat.data).max() < 1e-11


def test_so3_roundtrip_is_real_for_symmetric_blocks(rng):
    ghat = random_so3_coefficients(3, rng, real_signal=True)
    grid = so3_ft_inverse(ghat)
    assert np.abs(grid.imag).max() < 1e-12


def test_sampled_wigner_D_gives_single_block_entry():
    """conj(D^l0_{ab}) sampled as a grid signal has exactly one nonzero
    coefficient, 1/(2 l0 + 1) at (l0, a, b)."""
    B, l0, a, b = 4, 2, 1, -2
    al = alpha_grid(B)
    be = beta_grid(B)
    c = B - 1
    grid = np.zeros((2 * B, 2 * B, 2 * B), dtype=complex)
    for j, beta in enumerate(be):
        D = wigner_D_matrix(l0, 0.0, beta, 0.0)
        val = D[l0 + a, l0 + b]
        grid[:, j, :] = (np.conj(val) * np.exp(1j * a * al)[:, None]
                         * np.exp(1j * b * al)[None, :])
    ghat = so3_ft_forward(grid)
    expected = np.zeros_like(ghat.data)
    expected[l0, c + a, c + b] = 1.0 / (2 * l0 + 1)
    assert np.abs(ghat.data - expected).max() < 1e-12


def test_plancherel(rng):
    B = 8
    f = random_s2_coefficients(B, rng, real_signal=False)
    g = random_s2_coefficients(B, rng, real_signal=False)
    lhs = grid_inner_s2(sht_inverse(f), sht_inverse(g))
    assert lhs == pytest.approx(coeff_inner_s2(f, g), abs=1e-9)
    B = 4
    fo = random_so3_coefficients(B, rng, real_signal=False)
    go = random_so3_coefficients(B, rng, real_signal=False)
    lhs = grid_inner_so3(so3_ft_inverse(fo), so3_ft_inverse(go))
    assert lhs == pytest.approx(coeff_inner_so3(fo, go), abs=1e-9)


def test_linearity(rng):
    B = 6
    f = sht_inverse(random_s2_coefficients(B, rng))
    g = sht_inverse(random_s2_coefficients(B, rng))
    a, b = 1.7, -0.3
    combo = sht_forward(a * f + b * g)
    expected = a * sht_forward(f).data + b * sht_forward(g).data
    assert np.abs(combo.data - expected).max() < 1e-10


def test_packed_counts_and_truncation(rng):
    B = 8
    fhat = random_s2_coefficients(B, rng)
    assert fhat.n_coefficients == B * B
    assert fhat.packed().shape == (B * B,)
    ghat = random_so3_coefficients(4, rng)
    assert ghat.n_coefficients == 4 * (4 * 16 - 1) // 3
    assert ghat.packed().shape == (ghat.n_coefficients,)
    t = fhat.truncated(3)
    assert t.bandwidth == 3 and t.data.shape == (3, 5)
    c = B - 1
    assert np.array_equal(t.data, fhat.data[:3, c - 2:c + 3])


def test_bad_grid_shapes():
    with pytest.raises(BadGridShape):
        sht_forward(np.zeros((7, 7)))
    with pytest.raises(BadGridShape):
        sht_forward(np.zeros((8, 6)))
    with pytest.raises(BadGridShape):
        so3_ft_forward(np.zeros((8, 8, 6)))


def test_channel_batches(rng):
    B = 4
    fhat = random_s2_coefficients(B, rng, channels=(3,))
    grid = sht_inverse(fhat)
    assert grid.shape == (3, 2 * B, 2 * B)
    back = sht_forward(grid)
    assert np.abs(back.data - fhat.data).max() < 1e-11


def test_coefficient_dump_roundtrip(tmp_path, rng):
    from sphereloc.harmonics import load_coefficients, save_coefficients
    fhat = random_s2_coefficients(5, rng, channels=(2,))
    save_coefficients(fhat, tmp_path / "f.c128")
    back = load_coefficients(tmp_path / "f.c128")
    assert isinstance(back, S2Coefficients)
    assert back.bandwidth == 5
    assert np.array_equal(back.data, fhat.data)
    ghat = random_so3_coefficients(3, rng)
    save_coefficients(ghat, tmp_path / "g.c128")
    back3 = load_coefficients(tmp_path / "g.c128")
    assert isinstance(back3, SO3Coefficients)
    assert np.array_equal(back3.data, ghat.data)
