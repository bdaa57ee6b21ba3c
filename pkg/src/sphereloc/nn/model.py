"""The full descriptor network and its checkpoint format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..exceptions import ShapeMismatch, UninitializedWeights
from .layers import NetVlad, S2Correlation, SelfAttention, SO3Correlation

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    """Four correlation layers: the first maps the sphere onto the rotation
    group, the rest stay on the rotation group.  `layers` lists
    (channels, output bandwidth) per layer."""

    input_bandwidth: int = 32
    layers: tuple[tuple[int, int], ...] = ((16, 16), (32, 8), (64, 4), (16, 4))
    batchnorm: bool = True

    @property
    def final_bandwidth(self) -> int:
        return self.layers[-1][1]

    @property
    def final_channels(self) -> int:
        return self.layers[-1][0]

    @property
    def n_local(self) -> int:
        """L: number of local descriptors, the flattened final grid."""
        return (2 * self.final_bandwidth) ** 3


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    attention: bool = True
    clusters: int = 32

    @property
    def variant(self) -> str:
        return "attention" if self.attention else "plain"

    @property
    def descriptor_dim(self) -> int:
        return self.clusters * self.encoder.final_channels


@dataclass
class GlobalDescriptor:
    """Unit-norm place descriptor with provenance."""

    vector: np.ndarray
    variant: str
    frame_id: int | None = None

    def validate(self, tol: float = 1e-6) -> None:
        n = float(np.linalg.norm(self.vector))
        if abs(n - 1.0) > tol:
            raise ValueError(f"descriptor norm {n} is not 1")


class SphereVladNet(nn.Module):
    """Spherical-correlation encoder + optional self-attention + VLAD head.

    Input: (N, 2B0, 2B0) range panoramas in [0, 1].
    Output: (N, K*C) unit-norm global descriptors.
    """

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config or ModelConfig()
        enc = self.config.encoder
        rng = np.random.default_rng(seed)
        convs = []
        bns = []
        b_prev, c_prev = enc.input_bandwidth, 1
        for i, (channels, b_out) in enumerate(enc.layers):
            if i == 0:
                convs.append(S2Correlation(c_prev, channels, b_prev, b_out, rng))
            else:
                convs.append(SO3Correlation(c_prev, channels, b_prev, b_out, rng))
            bns.append(nn.BatchNorm3d(channels).double())
            b_prev, c_prev = b_out, channels
        self.convs = nn.ModuleList(convs)
        self.bns = nn.ModuleList(bns) if enc.batchnorm else None
        self.attention = SelfAttention(c_prev, rng) if self.config.attention else None
        self.vlad = NetVlad(c_prev, self.config.clusters, rng)
        self.float()

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def invariant_yaw_steps(self) -> int:
        """Smallest input-grid yaw step that shifts every layer grid by an
        integer number of cells; such yaws leave the descriptor exactly
        invariant (finer yaws are only approximately invariant because the
        pointwise nonlinearities act between band limits)."""
        b0 = self.config.encoder.input_bandwidth
        step = 1
        for _, b_out in self.config.encoder.layers:
            step = math.lcm(step, b0 // math.gcd(b0, b_out))
        return step

    def _panorama_batch(self, panoramas: torch.Tensor) -> torch.Tensor:
        n = 2 * self.config.encoder.input_bandwidth
        if panoramas.dim() == 2:
            panoramas = panoramas[None]
        if panoramas.shape[-2:] != (n, n):
            raise ShapeMismatch(
                f"panorama grid must be ({n}, {n}), got {tuple(panoramas.shape[-2:])}")
        return panoramas[:, None]  # single input channel

    def encode(self, panoramas: torch.Tensor) -> torch.Tensor:
        """(N, C, 2Bf, 2Bf, 2Bf) feature map before flattening."""
        x = self._panorama_batch(panoramas)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if self.bns is not None:
                x = self.bns[i](x)
            x = torch.relu(x)
        return x

    def local_features(self, panoramas: torch.Tensor) -> torch.Tensor:
        """(N, C, L) attention-enhanced local descriptors (raw when the
        attention stage is disabled)."""
        x = self.encode(panoramas)
        x = x.reshape(x.shape[0], x.shape[1], -1)
        if self.attention is not None:
            x = self.attention(x)
        return x

    def soft_assignment(self, panoramas: torch.Tensor) -> torch.Tensor:
        return self.vlad.soft_assign(self.local_features(panoramas))

    def forward(self, panoramas: torch.Tensor) -> torch.Tensor:
        return self.vlad(self.local_features(panoramas))


def describe(model: SphereVladNet, panorama, frame_id: int | None = None) -> GlobalDescriptor:
    """Compute one GlobalDescriptor in inference mode."""
    values = getattr(panorama, "values", panorama)
    if frame_id is None:
        frame_id = getattr(panorama, "frame_id", None)
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.asarray(values), dtype=dtype)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        vec = model(x)[0].cpu().numpy()
    model.train(was_training)
    return GlobalDescriptor(vec, model.variant, frame_id)


def _config_to_dict(config: ModelConfig) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "variant": config.variant,
        "input_bandwidth": config.encoder.input_bandwidth,
        "layers": [list(layer) for layer in config.encoder.layers],
        "batchnorm": config.encoder.batchnorm,
        "attention": config.attention,
        "clusters": config.clusters,
    }


def _config_from_dict(data: dict) -> ModelConfig:
    encoder = EncoderConfig(
        input_bandwidth=int(data["input_bandwidth"]),
        layers=tuple(tuple(layer) for layer in data["layers"]),
        batchnorm=bool(data["batchnorm"]))
    return ModelConfig(encoder=encoder, attention=bool(data["attention"]),
                       clusters=int(data["clusters"]))


def save_checkpoint(model: SphereVladNet, path) -> None:
    """Single archive: every parameter/buffer tensor plus a JSON config header."""
    arrays = {key: value.detach().cpu().numpy()
              for key, value in model.state_dict().items()}
    np.savez(path, __config__=json.dumps(_config_to_dict(model.config)), **arrays)


def load_checkpoint(path, dtype: torch.dtype = torch.float32) -> SphereVladNet:
    """Rebuild the model from an archive, validating tensor shapes."""
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["__config__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ShapeMismatch(f"unsupported checkpoint version {header.get('version')}")
        config = _config_from_dict(header)
        model = SphereVladNet(config)
        state = model.state_dict()
        loaded = {}
        for key, value in state.items():
            if key not in archive:
                raise UninitializedWeights(f"checkpoint missing tensor {key}")
            arr = archive[key]
            if tuple(arr.shape) != tuple(value.shape):
                raise ShapeMismatch(
                    f"{key}: checkpoint shape {arr.shape} != expected {tuple(value.shape)}")
            loaded[key] = torch.from_numpy(arr).to(value.dtype)
    model.load_state_dict(loaded)
    return model.to(dtype)
