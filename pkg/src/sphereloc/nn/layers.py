"""Network building blocks: spherical correlation layers, self-attention, VLAD."""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..exceptions import ShapeMismatch
from . import spectral


def _buffer(module: nn.Module, name: str, array: np.ndarray) -> None:
    module.register_buffer(name, torch.from_numpy(np.ascontiguousarray(array)))


class S2Correlation(nn.Module):
    """Sphere signal (N, C_in, 2B_in, 2B_in) -> rotation-group feature map
    (N, C_out, 2B_out, 2B_out, 2B_out).

    Trainable filters live directly in coefficient space at bandwidth B_out;
    degrees l >= B_out of the input are truncated (alias-free reduction).
    """

    def __init__(self, in_channels: int, out_channels: int, b_in: int, b_out: int,
                 rng: np.random.Generator):
        super().__init__()
        if b_out > b_in:
            raise ValueError("output bandwidth cannot exceed input bandwidth")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.b_in, self.b_out = b_in, b_out
        M = 2 * b_out - 1
        # mild spectral decay keeps random kernels smooth, which preserves the
        # approximate invariance under off-grid rotations at initialization
        sigma = (1.0 + np.arange(b_out)) ** -0.5 / np.sqrt(4.0 * np.pi * in_channels)
        shape = (out_channels, in_channels, b_out, M)
        re = rng.normal(0, 1.0, shape) * sigma[:, None]
        im = rng.normal(0, 1.0, shape) * sigma[:, None]
        self.weight_re = nn.Parameter(torch.from_numpy(re))
        self.weight_im = nn.Parameter(torch.from_numpy(im))
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=torch.float64))
        _buffer(self, "analysis", spectral.s2_analysis_table(b_in, b_out))
        _buffer(self, "synthesis", spectral.so3_synthesis_table(b_out, degree_weighted=False))
        re_mask, im_mask, sign = spectral.s2_filter_masks(b_out)
        _buffer(self, "re_mask", re_mask)
        _buffer(self, "im_mask", im_mask)
        _buffer(self, "sign", sign)

    def filter_coefficients(self) -> torch.Tensor:
        return spectral.assemble_s2_filter(self.weight_re, self.weight_im,
                                           self.re_mask, self.im_mask, self.sign)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n = 2 * self.b_in
        if x.shape[-2:] != (n, n) or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"expected (N, {self.in_channels}, {n}, {n}), got {tuple(x.shape)}")
        F = torch.fft.fft(x, dim=-2)
        Fc = spectral.gather_centered(F, self.b_out, dim=-2)
        fhat = torch.einsum("lmb,zcmb->zclm", self.analysis.to(Fc.dtype), Fc)
        psi = self.filter_coefficients()
        blocks = torch.einsum("zclm,ocln->zolmn", fhat, torch.conj(psi))
        H = torch.einsum("lmnb,zolmn->zombn", self.synthesis.to(blocks.dtype), blocks)
        out = spectral.scatter_centered(H, 2 * self.b_out, dim=-3)
        out = spectral.scatter_centered(out, 2 * self.b_out, dim=-1)
        grid = torch.fft.ifftn(out, dim=(-3, -1)).real * (2 * self.b_out) ** 2
        return grid + self.bias[None, :, None, None, None]


class SO3Correlation(nn.Module):
    """Rotation-group feature map -> rotation-group feature map, with optional
    bandwidth reduction by Fourier truncation."""

    def __init__(self, in_channels: int, out_channels: int, b_in: int, b_out: int,
                 rng: np.random.Generator):
        super().__init__()
        if b_out > b_in:
            raise ValueError("output bandwidth cannot exceed input bandwidth")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.b_in, self.b_out = b_in, b_out
        M = 2 * b_out - 1
        l = np.arange(b_out)
        sigma = (1.0 + l) ** -0.5 / np.sqrt((2 * l + 1) * in_channels)
        shape = (out_channels, in_channels, b_out, M, M)
        re = rng.normal(0, 1.0, shape) * sigma[:, None, None]
        im = rng.normal(0, 1.0, shape) * sigma[:, None, None]
        self.weight_re = nn.Parameter(torch.from_numpy(re))
        self.weight_im = nn.Parameter(torch.from_numpy(im))
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=torch.float64))
        _buffer(self, "analysis", spectral.so3_analysis_table(b_in, b_out))
        _buffer(self, "synthesis", spectral.so3_synthesis_table(b_out, degree_weighted=True))
        re_mask, im_mask, sign = spectral.so3_filter_masks(b_out)
        _buffer(self, "re_mask", re_mask)
        _buffer(self, "im_mask", im_mask)
        _buffer(self, "sign", sign)

    def filter_coefficients(self) -> torch.Tensor:
        return spectral.assemble_so3_filter(self.weight_re, self.weight_im,
                                            self.re_mask, self.im_mask, self.sign)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n = 2 * self.b_in
        if x.shape[-3:] != (n, n, n) or x.shape[1] != self.in_channels:
            raise ShapeMismatch(
                f"expected (N, {self.in_channels}, {n}, {n}, {n}), got {tuple(x.shape)}")
        F = torch.fft.fftn(x, dim=(-3, -1))
        Fc = spectral.gather_centered(F, self.b_out, dim=-3)
        Fc = spectral.gather_centered(Fc, self.b_out, dim=-1)
        ghat = torch.einsum("lmnb,zcmbn->zclmn", self.analysis.to(Fc.dtype), Fc)
        psi = self.filter_coefficients()
        blocks = torch.einsum("zclmk,oclnk->zolmn", ghat, torch.conj(psi))
        H = torch.einsum("lmnb,zolmn->zombn", self.synthesis.to(blocks.dtype), blocks)
        out = spectral.scatter_centered(H, 2 * self.b_out, dim=-3)
        out = spectral.scatter_centered(out, 2 * self.b_out, dim=-1)
        grid = torch.fft.ifftn(out, dim=(-3, -1)).real * (2 * self.b_out) ** 2
        return grid + self.bias[None, :, None, None, None]


class SelfAttention(nn.Module):
    """Contextual self-attention over flattened local descriptors.

    Query/key spaces are reduced to C' = max(1, C // 2); values keep full
    width so the gated residual needs no output projection.  The residual
    gain starts at zero, making the module an exact identity at init.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        reduced = max(1, channels // 2)
        sigma = 1.0 / np.sqrt(channels)
        self.w_query = nn.Parameter(torch.from_numpy(rng.normal(0, sigma, (reduced, channels))))
        self.w_key = nn.Parameter(torch.from_numpy(rng.normal(0, sigma, (reduced, channels))))
        self.w_value = nn.Parameter(torch.from_numpy(rng.normal(0, sigma, (channels, channels))))
        self.gain = nn.Parameter(torch.zeros((), dtype=torch.float64))

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        """(N, L, L) row-stochastic map; row i weighs the keys for query i."""
        q = torch.einsum("rc,ncl->nrl", self.w_query, x)
        k = torch.einsum("rc,ncl->nrl", self.w_key, x)
        scores = torch.einsum("nri,nrj->nij", q, k)
        return torch.softmax(scores, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[1] != self.w_value.shape[1]:
            raise ShapeMismatch(
                f"expected (N, {self.w_value.shape[1]}, L), got {tuple(x.shape)}")
        attn = self.attention_map(x)
        v = torch.einsum("dc,ncl->ndl", self.w_value, x)
        context = torch.einsum("ncj,nij->nci", v, attn)
        return x + self.gain * context


class NetVlad(nn.Module):
    """Soft-assignment VLAD aggregation of (N, C, L) local descriptors into a
    unit-norm (N, K*C) global descriptor."""

    def __init__(self, channels: int, clusters: int, rng: np.random.Generator):
        super().__init__()
        if clusters < 2:
            raise ValueError("need at least 2 clusters")
        self.channels, self.clusters = channels, clusters
        self.centroids = nn.Parameter(torch.from_numpy(rng.normal(0, 0.1, (clusters, channels))))
        self.assign_weight = nn.Parameter(
            torch.from_numpy(rng.normal(0, 1.0 / np.sqrt(channels), (clusters, channels))))
        self.assign_bias = nn.Parameter(torch.from_numpy(rng.normal(0, 0.1, clusters)))

    @property
    def descriptor_dim(self) -> int:
        return self.clusters * self.channels

    def soft_assign(self, x: torch.Tensor) -> torch.Tensor:
        """(N, L, K) responsibilities; every row sums to 1."""
        logits = torch.einsum("kc,ncl->nlk", self.assign_weight, x) + self.assign_bias
        return torch.softmax(logits, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[1] != self.channels:
            raise ShapeMismatch(f"expected (N, {self.channels}, L), got {tuple(x.shape)}")
        assign = self.soft_assign(x)
        vlad = torch.einsum("nlk,ncl->nkc", assign, x) \
            - assign.sum(dim=1)[:, :, None] * self.centroids[None]
        norms = torch.linalg.vector_norm(vlad, dim=-1, keepdim=True)
        vlad = torch.where(norms > 1e-12, vlad / norms.clamp_min(1e-12),
                           torch.zeros_like(vlad))
        flat = vlad.reshape(x.shape[0], -1)
        total = torch.linalg.vector_norm(flat, dim=-1, keepdim=True)
        return torch.where(total > 1e-12, flat / total.clamp_min(1e-12),
                           torch.zeros_like(flat))
