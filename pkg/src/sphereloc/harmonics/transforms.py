"""Forward/inverse transforms between equiangular grids and harmonic coefficients.

Transform pair on the sphere (orthonormal Y, see `wigner`):

  analysis   fhat^l_m = int_{S^2} f(w) conj(Y_l^m(w)) dw
  synthesis  f(w)     = sum_{l<B} sum_{|m|<=l} fhat^l_m Y_l^m(w)

Transform pair on the rotation group (normalized Haar measure):

  analysis   ghat^l_{mn} = int g(R) D^l_{mn}(R) dR
  synthesis  g(R)        = sum_l (2l+1) sum_{mn} ghat^l_{mn} conj(D^l_{mn}(R))

Both are exact inverses of each other for signals bandlimited below B when
sampled on the 2B x 2B(x 2B) grids of `wigner`.  Coefficients are stored as
dense zero-padded arrays, degree axis first, order axes centered at B-1.

Grid array layout: S^2 signals are (..., alpha, beta); SO(3) signals are
(..., alpha, beta, gamma).  Synthesis returns complex arrays; real-signal
callers take the real part after checking the imaginary residue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import BadGridShape
from .wigner import quadrature_weights, sph_basis_table, wigner_d_table


@dataclass(frozen=True)
class S2Coefficients:
    """Spherical-harmonic coefficients, data shape (..., B, 2B-1)."""

    bandwidth: int
    data: np.ndarray

    @property
    def n_coefficients(self) -> int:
        """Valid entries per channel: sum of 2l+1 over l < B is B^2."""
        return self.bandwidth**2

    def packed(self) -> np.ndarray:
        """Flatten to (..., B^2), degree-major, m = -l..l within each degree."""
        c = self.bandwidth - 1
        parts = [self.data[..., l, c - l:c + l + 1] for l in range(self.bandwidth)]
        return np.concatenate(parts, axis=-1)

    def truncated(self, out_bandwidth: int) -> "S2Coefficients":
        """Drop degrees l >= out_bandwidth (alias-free downsampling)."""
        b = out_bandwidth
        c = self.bandwidth - 1
        return S2Coefficients(b, self.data[..., :b, c - (b - 1):c + b])


@dataclass(frozen=True)
class SO3Coefficients:
    """SO(3) Fourier blocks, data shape (..., B, 2B-1, 2B-1)."""

    bandwidth: int
    data: np.ndarray

    @property
    def n_coefficients(self) -> int:
        """Valid entries per channel: sum of (2l+1)^2 = B(4B^2-1)/3."""
        B = self.bandwidth
        return B * (4 * B * B - 1) // 3

    def block(self, degree: int) -> np.ndarray:
        c = self.bandwidth - 1
        lo, hi = c - degree, c + degree + 1
        return self.data[..., degree, lo:hi, lo:hi]

    def packed(self) -> np.ndarray:
        parts = [self.block(l).reshape(*self.data.shape[:-3], -1)
                 for l in range(self.bandwidth)]
        return np.concatenate(parts, axis=-1)

    def truncated(self, out_bandwidth: int) -> "SO3Coefficients":
        b = out_bandwidth
        c = self.bandwidth - 1
        sl = slice(c - (b - 1), c + b)
        return SO3Coefficients(b, self.data[..., :b, sl, sl])


@dataclass(frozen=True)
class SO3FeatureMap:
    """Multichannel real signal on the Euler-angle grid: values (C, 2B, 2B, 2B)."""

    values: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def bandwidth(self) -> int:
        return self.values.shape[-1] // 2

    def flattened(self) -> np.ndarray:
        """(C, L) view with L = (2B)^3, token order = C-contiguous grid order."""
        return self.values.reshape(self.channels, -1)

    def validate(self) -> None:
        n = 2 * self.bandwidth
        if self.values.ndim != 4 or self.values.shape[1:] != (n, n, n):
            raise BadGridShape(
                f"feature map must be (C, {n}, {n}, {n}), got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("feature map holds non-finite entries")


def _infer_bandwidth(shape: tuple[int, ...], n_grid_axes: int) -> int:
    tail = shape[-n_grid_axes:]
    if len(tail) < n_grid_axes or any(t != tail[0] for t in tail) or tail[0] % 2:
        raise BadGridShape(f"expected {n_grid_axes} equal even grid axes, got shape {shape}")
    return tail[0] // 2


def _centered_bins(bandwidth: int) -> np.ndarray:
    """FFT bin indices for m = -(B-1)..(B-1)."""
    m = np.arange(-(bandwidth - 1), bandwidth)
    return m % (2 * bandwidth)


def sht_forward(values: np.ndarray, bandwidth: int | None = None) -> S2Coefficients:
    """Quadrature-weighted analysis of an (..., 2B, 2B) grid signal.

    Exact (not approximate) for signals bandlimited below B.
    """
    values = np.asarray(values)
    B = _infer_bandwidth(values.shape, 2)
    if bandwidth is not None and bandwidth != B:
        raise BadGridShape(f"grid has bandwidth {B}, expected {bandwidth}")
    F = np.fft.fft(values, axis=-2)
    Fc = np.take(F, _centered_bins(B), axis=-2)
    yw = sph_basis_table(B) * quadrature_weights(B)[None, None, :]
    fhat = (2.0 * np.pi / (2 * B)) * np.einsum("lmj,...mj->...lm", yw, Fc)
    return S2Coefficients(B, fhat)


def sht_inverse(coeffs: S2Coefficients) -> np.ndarray:
    """Synthesize the (..., 2B, 2B) grid signal; complex output."""
    B = coeffs.bandwidth
    G = np.einsum("lmj,...lm->...mj", sph_basis_table(B), coeffs.data)
    out = np.zeros((*G.shape[:-2], 2 * B, 2 * B), dtype=complex)
    out[..., _centered_bins(B), :] = G
    return np.fft.ifft(out, axis=-2) * (2 * B)


def so3_ft_forward(values: np.ndarray, bandwidth: int | None = None) -> SO3Coefficients:
    """Analysis of an (..., 2B, 2B, 2B) Euler-grid signal."""
    values = np.asarray(values)
    B = _infer_bandwidth(values.shape, 3)
    if bandwidth is not None and bandwidth != B:
        raise BadGridShape(f"grid has bandwidth {B}, expected {bandwidth}")
    F = np.fft.fft(np.fft.fft(values, axis=-3), axis=-1)
    bins = _centered_bins(B)
    Fc = np.take(np.take(F, bins, axis=-3), bins, axis=-1)
    dw = wigner_d_table(B) * quadrature_weights(B)[None, None, None, :]
    ghat = np.einsum("lmnj,...mjn->...lmn", dw, Fc) / (2.0 * (2 * B) ** 2)
    return SO3Coefficients(B, ghat)


def so3_ft_inverse(coeffs: SO3Coefficients) -> np.ndarray:
    """Synthesize the (..., 2B, 2B, 2B) Euler-grid signal; complex output."""
    B = coeffs.bandwidth
    l = np.arange(B)
    H = np.einsum("lmnj,...lmn->...mjn", wigner_d_table(B),
                  coeffs.data * (2 * l + 1)[:, None, None])
    bins = _centered_bins(B)
    out = np.zeros((*H.shape[:-3], 2 * B, 2 * B, 2 * B), dtype=complex)
    out[..., bins[:, None, None], np.arange(2 * B)[None, :, None],
        bins[None, None, :]] = H
    return np.fft.ifft(np.fft.ifft(out, axis=-3), axis=-1) * (2 * B) ** 2


def real_part(values: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Real part of a synthesis output, failing loudly on a genuine imaginary
    component (a symmetry bug upstream) instead of silently projecting."""
    scale = max(np.abs(values.real).max(), 1.0)
    resid = np.abs(values.imag).max()
    if resid > tol * scale:
        raise ArithmeticError(
            f"synthesis output has imaginary residue {resid:.3e} (scale {scale:.3e})")
    return np.ascontiguousarray(values.real)


def grid_inner_s2(f: np.ndarray, g: np.ndarray) -> complex:
    """Quadrature inner product int f conj(g) on the S^2 grid."""
    B = _infer_bandwidth(np.shape(f), 2)
    w = quadrature_weights(B)
    return complex((2.0 * np.pi / (2 * B)) * np.einsum("ab,ab,b->", f, np.conj(g), w))


def grid_inner_so3(f: np.ndarray, g: np.ndarray) -> complex:
    """Quadrature inner product int f conj(g) dR (normalized Haar) on SO(3)."""
    B = _infer_bandwidth(np.shape(f), 3)
    w = quadrature_weights(B)
    s = np.einsum("abc,abc,b->", f, np.conj(g), w)
    return complex(s * (2.0 * np.pi / (2 * B)) ** 2 / (8.0 * np.pi**2))


def coeff_inner_s2(a: S2Coefficients, b: S2Coefficients) -> complex:
    return complex(np.sum(a.data * np.conj(b.data)))


def coeff_inner_so3(a: SO3Coefficients, b: SO3Coefficients) -> complex:
    l = np.arange(a.bandwidth)
    weighted = a.data * (2 * l + 1)[:, None, None]
    return complex(np.sum(weighted * np.conj(b.data)))


def random_s2_coefficients(bandwidth: int, rng: np.random.Generator,
                           channels: tuple[int, ...] = (),
                           real_signal: bool = True) -> S2Coefficients:
    """Random coefficients; with `real_signal` the grid synthesis is real."""
    B = bandwidth
    c = B - 1
    data = np.zeros((*channels, B, 2 * B - 1), dtype=complex)
    for l in range(B):
        lo, hi = c - l, c + l + 1
        blk = rng.normal(size=(*channels, 2 * l + 1)) + 1j * rng.normal(size=(*channels, 2 * l + 1))
        data[..., l, lo:hi] = blk
        if real_signal:
            data[..., l, c] = data[..., l, c].real
            for m in range(1, l + 1):
                data[..., l, c - m] = (-1.0) ** m * np.conj(data[..., l, c + m])
    return S2Coefficients(B, data)


def random_so3_coefficients(bandwidth: int, rng: np.random.Generator,
                            channels: tuple[int, ...] = (),
                            real_signal: bool = True) -> SO3Coefficients:
    B = bandwidth
    c = B - 1
    data = np.zeros((*channels, B, 2 * B - 1, 2 * B - 1), dtype=complex)
    for l in range(B):
        lo, hi = c - l, c + l + 1
        blk = (rng.normal(size=(*channels, 2 * l + 1, 2 * l + 1))
               + 1j * rng.normal(size=(*channels, 2 * l + 1, 2 * l + 1)))
        data[..., l, lo:hi, lo:hi] = blk
    if real_signal:
        sym = _so3_reality_projection(SO3Coefficients(B, data))
        return sym
    return SO3Coefficients(B, data)


def _so3_reality_projection(coeffs: SO3Coefficients) -> SO3Coefficients:
    """Project blocks onto the real-signal symmetry
    ghat^l_{mn} = (-1)^{m-n} conj(ghat^l_{-m,-n})."""
    B = coeffs.bandwidth
    m = np.arange(-(B - 1), B)
    sign = ((-1.0) ** (m[:, None] - m[None, :]))
    flipped = coeffs.data[..., ::-1, ::-1]
    data = 0.5 * (coeffs.data + sign * np.conj(flipped))
    return SO3Coefficients(B, data)


def save_coefficients(coeffs: S2Coefficients | SO3Coefficients, path) -> None:
    """Debug dump: raw complex128 blocks next to a JSON manifest."""
    import json
    from pathlib import Path

    path = Path(path)
    kind = "so3" if isinstance(coeffs, SO3Coefficients) else "s2"
    np.ascontiguousarray(coeffs.data, dtype=np.complex128).tofile(path)
    manifest = {"kind": kind, "bandwidth": coeffs.bandwidth,
                "shape": list(coeffs.data.shape)}
    path.with_suffix(".json").write_text(json.dumps(manifest))


def load_coefficients(path) -> S2Coefficients | SO3Coefficients:
    import json
    from pathlib import Path

    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    data = np.fromfile(path, dtype=np.complex128).reshape(manifest["shape"])
    cls = SO3Coefficients if manifest["kind"] == "so3" else S2Coefficients
    return cls(int(manifest["bandwidth"]), data)
