"""Context-conditioned recurrent world models.

A latent dynamics model for video that splits what it sees into a
time-invariant context (one frame, consumed only by the image decoder
through cross-attention) and time-dependent dynamics (a stacked
recurrent state-space model with discrete latents).  Supports action-free
pre-training on videos and action-conditioned fine-tuning with an
actor-critic learned purely in imagination.
"""

__version__ = "0.1.0"

from cwm.config import (
    BehaviorConfig,
    ConfigError,
    CutoutParams,
    IntrinsicConfig,
    LossWeights,
    ModelConfig,
    RunConfig,
    VisionConfig,
)

__all__ = [
    "BehaviorConfig",
    "ConfigError",
    "CutoutParams",
    "IntrinsicConfig",
    "LossWeights",
    "ModelConfig",
    "RunConfig",
    "VisionConfig",
    "__version__",
]
