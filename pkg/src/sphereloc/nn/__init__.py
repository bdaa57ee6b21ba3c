from .layers import NetVlad, S2Correlation, SelfAttention, SO3Correlation
from .model import (
    CHECKPOINT_VERSION,
    EncoderConfig,
    GlobalDescriptor,
    ModelConfig,
    SphereVladNet,
    describe,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "CHECKPOINT_VERSION",
    "EncoderConfig",
    "GlobalDescriptor",
    "ModelConfig",
    "NetVlad",
    "S2Correlation",
    "SO3Correlation",
    "SelfAttention",
    "SphereVladNet",
    "describe",
    "load_checkpoint",
    "save_checkpoint",
]
