"""Dataclass configuration for models, losses, behavior and runs.

Two model presets are shipped: ``paper`` (full-size, 1024-wide trunk,
32x32 discrete latent, full-width conv stacks) and ``desk`` (200-wide
trunk, 8x8 latent, quarter-width conv stacks) which is small enough to
train on a single commodity machine.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised when a configuration value is outside its documented range."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class CutoutParams:
    """Random rectangular occlusion applied to the context frame."""

    enabled: bool = False
    min_frac: float = 0.2
    max_frac: float = 0.5
    fill: float = 0.0

    def validate(self) -> None:
        _require(0.0 < self.min_frac <= self.max_frac < 1.0,
                 f"cutout fractions must satisfy 0 < min <= max < 1, got "
                 f"({self.min_frac}, {self.max_frac})")


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of the latent dynamics trunk.

    The stochastic latent per level is ``stoch_vars`` independent
    categorical variables with ``stoch_classes`` classes each;
    ``det_size`` is the width of the recurrent deterministic state and
    ``hidden`` the width of the dense layers feeding it.
    """

    det_size: int
    stoch_vars: int
    stoch_classes: int
    hidden: int
    action_dim: int
    embed_dim: int
    head_width: int = 400
    head_layers: int = 4

    @property
    def stoch_flat(self) -> int:
        return self.stoch_vars * self.stoch_classes

    @property
    def feat_dim(self) -> int:
        """Width of a model-state feature vector (deterministic + stochastic)."""
        return self.det_size + self.stoch_flat

    def validate(self) -> None:
        for name in ("det_size", "stoch_vars", "stoch_classes", "hidden",
                     "action_dim", "embed_dim", "head_width", "head_layers"):
            _require(getattr(self, name) >= 1, f"model.{name} must be >= 1")


@dataclass(frozen=True)
class VisionConfig:
    """Convolutional encoder/decoder geometry and context conditioning mode."""

    image_side: int = 64
    stage_channels: tuple[int, ...] = (48, 96, 192)
    attn_heads: int = 4
    conditioning: str = "cross"  # cross | concat | none
    cutout: CutoutParams = field(default_factory=CutoutParams)

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def final_side(self) -> int:
        # conv-in halves once, each stage pools by 2
        return self.image_side // (2 ** (self.n_stages + 1))

    @property
    def embed_dim(self) -> int:
        return self.stage_channels[-1] * self.final_side ** 2

    def context_scales(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """(side, channels) of the two pre-pool feature maps handed to the decoder."""
        n = self.n_stages
        return (
            (self.image_side // 2 ** (n - 1), self.stage_channels[-2]),
            (self.image_side // 2 ** n, self.stage_channels[-1]),
        )

    def validate(self) -> None:
        _require(self.n_stages >= 2, "vision needs at least two stages")
        _require(self.conditioning in ("cross", "concat", "none"),
                 f"unknown conditioning mode {self.conditioning!r}")
        _require(self.image_side % (2 ** (self.n_stages + 1)) == 0
                 and self.final_side >= 1,
                 f"image side {self.image_side} incompatible with "
                 f"{self.n_stages} stages")
        for (side, ch) in self.context_scales():
            _require(side * side >= 4,
                     "context feature maps must have at least 4 tokens")
            if self.conditioning == "cross":
                _require(ch % self.attn_heads == 0,
                         f"channels {ch} not divisible by {self.attn_heads} heads")
        self.cutout.validate()


@dataclass(frozen=True)
class LossWeights:
    """Weights of the training objective terms.

    ``beta_z`` scales the action-free KL, ``beta_s`` the action-conditional
    KL, ``beta_r`` the representative reward term and ``lambda_int`` the
    intrinsic bonus folded into the behavioral reward target.
    """

    beta_z: float = 1.0
    beta_s: float = 0.0
    beta_r: float = 0.0
    lambda_int: float = 0.0
    kl_balance: float | None = None  # e.g. 0.8 weights the prior-side KL
    free_bits: float = 0.0

    def validate(self) -> None:
        for name in ("beta_z", "beta_s", "beta_r", "lambda_int", "free_bits"):
            _require(getattr(self, name) >= 0.0, f"weights.{name} must be >= 0")
        if self.kl_balance is not None:
            _require(0.0 <= self.kl_balance <= 1.0,
                     "kl_balance must be in [0, 1]")


def pretrain_weights() -> LossWeights:
    return LossWeights(beta_z=1.0)


def finetune_weights(lambda_int: float = 1.0) -> LossWeights:
    return LossWeights(beta_z=0.0, beta_s=1.0, beta_r=1.0, lambda_int=lambda_int)


@dataclass(frozen=True)
class BehaviorConfig:
    """Actor-critic learning in imagination."""

    horizon: int = 15
    gamma: float = 0.99
    lambda_ret: float = 0.95
    entropy_eta: float = 1e-4
    actor_lr: float = 8e-5
    critic_lr: float = 8e-5
    target_update_interval: int = 100
    head_width: int = 400
    head_layers: int = 4
    min_std: float = 0.1

    def validate(self) -> None:
        _require(self.horizon >= 1, "behavior.horizon must be >= 1")
        _require(0.0 <= self.gamma <= 1.0, "behavior.gamma must be in [0, 1]")
        _require(0.0 <= self.lambda_ret <= 1.0,
                 "behavior.lambda_ret must be in [0, 1]")
        _require(self.entropy_eta >= 0.0, "behavior.entropy_eta must be >= 0")
        _require(self.actor_lr > 0 and self.critic_lr > 0,
                 "behavior learning rates must be positive")
        _require(self.target_update_interval >= 1,
                 "behavior.target_update_interval must be >= 1")


@dataclass(frozen=True)
class IntrinsicConfig:
    """Novelty bonus from random projection + k-nearest-neighbor distances."""

    proj_dim: int = 32
    k: int = 12
    capacity: int = 100_000

    def validate(self) -> None:
        _require(self.proj_dim >= 1 and self.k >= 1 and self.capacity >= 1,
                 "intrinsic config fields must be >= 1")


def desk_model(action_dim: int = 2) -> ModelConfig:
    return ModelConfig(det_size=200, stoch_vars=8, stoch_classes=8,
                       hidden=200, action_dim=action_dim, embed_dim=768)


def paper_model(action_dim: int = 4) -> ModelConfig:
    return ModelConfig(det_size=1024, stoch_vars=32, stoch_classes=32,
                       hidden=1024, action_dim=action_dim, embed_dim=3072)


def desk_vision(conditioning: str = "cross",
                cutout: CutoutParams | None = None) -> VisionConfig:
    return VisionConfig(image_side=64, stage_channels=(12, 24, 48),
                        conditioning=conditioning,
                        cutout=cutout or CutoutParams())


def paper_vision(conditioning: str = "cross",
                 cutout: CutoutParams | None = None) -> VisionConfig:
    return VisionConfig(image_side=64, stage_channels=(48, 96, 192),
                        conditioning=conditioning,
                        cutout=cutout or CutoutParams())


MODEL_PRESETS = {"desk": desk_model, "paper": paper_model}
VISION_PRESETS = {"desk": desk_vision, "paper": paper_vision}


@dataclass(frozen=True)
class RunConfig:
    """Everything a pretrain/finetune/eval run needs, validated at load.

    Documented ranges: positive iteration counts and batch sizes, positive
    learning rates, 0 <= val_fraction < 1, train_every >= 1, and segment
    lengths >= 2.
    """

    preset: str = "desk"
    seed: int = 0
    out: str = "runs/run0"
    dataset: str = "synthetic"

    # model / vision customization
    conditioning: str = "cross"        # cross | concat; "none" == vanilla
    dual_reward: bool = True
    action_dim: int = 2
    cutout_enabled: bool = False

    # pre-training
    pretrain_iters: int = 20_000
    batch_pretrain: int = 16
    t_pretrain: int = 25
    beta_z_pretrain: float = 1.0
    wm_lr: float = 3e-4
    grad_clip: float = 100.0
    val_fraction: float = 0.1
    val_every: int = 500
    checkpoint_every: int = 1000
    log_every: int = 50

    # synthetic dataset sizes (pretraining / probing)
    n_train_videos: int = 400
    n_val_videos: int = 64
    video_frames: int = 25

    # fine-tuning
    env_steps: int = 30_000
    batch_finetune: int = 16
    t_finetune: int = 50
    prefill: int = 1000
    train_every: int = 5
    eval_every: int = 5000
    eval_episodes: int = 10
    episode_len: int = 100
    replay_capacity: int = 1_000_000
    lambda_int: float = 1.0
    beta_z_finetune: float = 0.0
    beta_s: float = 1.0
    beta_r: float = 1.0

    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    intrinsic: IntrinsicConfig = field(default_factory=IntrinsicConfig)

    def validate(self) -> None:
        _require(self.preset in MODEL_PRESETS,
                 f"unknown preset {self.preset!r}")
        _require(self.conditioning in ("cross", "concat", "none"),
                 f"unknown conditioning {self.conditioning!r}")
        for name in ("pretrain_iters", "batch_pretrain", "env_steps",
                     "batch_finetune", "prefill", "train_every", "eval_every",
                     "eval_episodes", "episode_len", "replay_capacity",
                     "n_train_videos", "n_val_videos", "video_frames",
                     "val_every", "checkpoint_every", "log_every",
                     "action_dim"):
            _require(getattr(self, name) >= 1, f"run.{name} must be >= 1")
        _require(self.t_pretrain >= 2 and self.t_finetune >= 2,
                 "segment lengths must be >= 2")
        _require(self.wm_lr > 0, "run.wm_lr must be positive")
        _require(self.grad_clip > 0, "run.grad_clip must be positive")
        _require(0.0 <= self.val_fraction < 1.0,
                 "run.val_fraction must be in [0, 1)")
        for name in ("lambda_int", "beta_z_pretrain", "beta_z_finetune",
                     "beta_s", "beta_r"):
            _require(getattr(self, name) >= 0.0, f"run.{name} must be >= 0")
        _require(self.seed >= 0, "run.seed must be >= 0")
        self.behavior.validate()
        self.intrinsic.validate()
        self.model_config().validate()
        vis = self.vision_config()
        vis.validate()
        _require(vis.embed_dim == self.model_config().embed_dim,
                 "vision embed width does not match model embed_dim")

    def model_config(self) -> ModelConfig:
        return MODEL_PRESETS[self.preset](action_dim=self.action_dim)

    def vision_config(self) -> VisionConfig:
        cut = CutoutParams(enabled=self.cutout_enabled)
        return VISION_PRESETS[self.preset](conditioning=self.conditioning,
                                           cutout=cut)

    def pretrain_weights(self) -> LossWeights:
        return LossWeights(beta_z=self.beta_z_pretrain)

    def finetune_weights(self) -> LossWeights:
        return LossWeights(beta_z=self.beta_z_finetune, beta_s=self.beta_s,
                           beta_r=self.beta_r if self.dual_reward else 0.0,
                           lambda_int=self.lambda_int)

    def replaced(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)
