"""Image preprocessing, residual encoder/decoder and context conditioning.

The encoder is a 13-layer residual network (at the default 3-stage
geometry): a stride-2 input conv, then per stage two basic residual
blocks followed by 2x2 average pooling, with BatchNorm + ReLU
throughout.  The context encoder shares the architecture (separate
weights) and exposes the pre-pool feature maps of the last two stages;
the decoder mirrors the encoder with nearest-neighbor upsampling and
attends to those maps at matching resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from cwm.config import ConfigError, CutoutParams, VisionConfig


def preprocess(frames: Tensor | "np.ndarray") -> Tensor:
    """Map uint8 pixels to floats in [-0.5, 0.5]: out = in/255 - 0.5.

    Accepts any leading batch dims; the trailing dims must be (3, S, S).
    """
    import numpy as np

    if isinstance(frames, np.ndarray):
        frames = torch.from_numpy(frames)
    if frames.dtype != torch.uint8:
        raise ValueError(f"expected uint8 input, got {frames.dtype}")
    if frames.dim() < 3 or frames.shape[-3] != 3 or frames.shape[-1] != frames.shape[-2]:
        raise ValueError(f"expected trailing dims (3, S, S), got {tuple(frames.shape)}")
    return frames.to(torch.float32) / 255.0 - 0.5


def sample_context_index(t_len: int, rng: torch.Generator) -> int:
    """Uniform index in {1..T} selecting the context frame of a segment."""
    if t_len < 1:
        raise ValueError("segment length must be >= 1")
    return int(torch.randint(1, t_len + 1, (), generator=rng))


def cutout(frame: Tensor, params: CutoutParams, rng: torch.Generator) -> Tensor:
    """Overwrite one axis-aligned rectangle per batch element with a constant.

    Side lengths are floor(frac * S) with frac drawn uniformly per axis in
    [min_frac, max_frac]; the rectangle always lies fully inside the frame.
    Disabled params return the input unchanged.
    """
    if not params.enabled:
        return frame
    params.validate()
    if frame.dim() != 4:
        raise ValueError(f"expected (B, 3, S, S), got {tuple(frame.shape)}")
    side = frame.shape[-1]
    out = frame.clone()
    for b in range(frame.shape[0]):
        fr = torch.rand(2, generator=rng, dtype=torch.float64)
        fh = params.min_frac + (params.max_frac - params.min_frac) * float(fr[0])
        fw = params.min_frac + (params.max_frac - params.min_frac) * float(fr[1])
        h = max(1, int(fh * side))
        w = max(1, int(fw * side))
        y0 = int(torch.randint(0, side - h + 1, (), generator=rng))
        x0 = int(torch.randint(0, side - w + 1, (), generator=rng))
        out[b, :, y0:y0 + h, x0:x0 + w] = params.fill
    return out


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)
        if in_ch != out_ch:
            self.skip = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1),
                                      nn.BatchNorm2d(out_ch))
        else:
            self.skip = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.relu(y + self.skip(x))


@dataclass
class ContextFeatures:
    """Pre-pool feature maps of the two deepest context-encoder stages.

    At the default 64x64 / 3-stage geometry these are 16x16 (mid) and
    8x8 (deep).
    """

    mid: Tensor
    deep: Tensor


class ResidualEncoder(nn.Module):
    """Table-style residual encoder; also serves as the context encoder."""

    def __init__(self, cfg: VisionConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        chans = cfg.stage_channels
        self.conv_in = nn.Conv2d(3, chans[0], 3, stride=2, padding=1)
        self.bn_in = nn.BatchNorm2d(chans[0])
        stages = []
        prev = chans[0]
        for ch in chans:
            stages.append(nn.Sequential(ResidualBlock(prev, ch),
                                        ResidualBlock(ch, ch)))
            prev = ch
        self.stages = nn.ModuleList(stages)
        self.pool = nn.AvgPool2d(2, stride=2)

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim

    def _run(self, img: Tensor) -> tuple[Tensor, list[Tensor]]:
        if img.dim() != 4 or img.shape[1] != 3 or img.shape[-1] != self.cfg.image_side:
            raise ValueError(
                f"expected (B, 3, {self.cfg.image_side}, {self.cfg.image_side}), "
                f"got {tuple(img.shape)}")
        x = F.relu(self.bn_in(self.conv_in(img)))
        pre_pool = []
        for stage in self.stages:
            x = stage(x)
            pre_pool.append(x)
            x = self.pool(x)
        return x, pre_pool

    def forward(self, img: Tensor) -> Tensor:
        """Flattened embedding of the final post-pool feature map."""
        x, _ = self._run(img)
        return x.flatten(1)

    def context_features(self, img: Tensor) -> ContextFeatures:
        _, pre_pool = self._run(img)
        return ContextFeatures(mid=pre_pool[-2], deep=pre_pool[-1])

    def stage_output_shapes(self, img: Tensor) -> list[tuple[int, int, int]]:
        """(side, side, channels) of each stage's post-pool output."""
        x = F.relu(self.bn_in(self.conv_in(img)))
        shapes = []
        for stage in self.stages:
            x = self.pool(stage(x))
            shapes.append((x.shape[-2], x.shape[-1], x.shape[1]))
        return shapes


class CrossAttentionFuse(nn.Module):
    """Augment a decoder feature map with context tokens (one scale).

    Queries are the decoder tokens, keys/values a random quarter of the
    context tokens (exactly floor(hw/4) kept).  Learned position tables
    (zero-initialized, one for queries and one for keys/values) are added
    before attention.  The attention output projection is zero-initialized,
    so at initialization the module computes ReLU(X) exactly and the
    context pathway fades in during training:

        X <- ReLU(X + BatchNorm(Reshape(Attention(QW_q, KW_k, VW_v) W_o)))
    """

    def __init__(self, channels: int, side: int, heads: int):
        super().__init__()
        if channels % heads != 0:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.side = side
        self.heads = heads
        self.hw = side * side
        self.w_q = nn.Linear(channels, channels)
        self.w_k = nn.Linear(channels, channels)
        self.w_v = nn.Linear(channels, channels)
        self.w_o = nn.Linear(channels, channels)
        nn.init.zeros_(self.w_o.weight)
        nn.init.zeros_(self.w_o.bias)
        self.pos_q = nn.Parameter(torch.zeros(self.hw, channels))
        self.pos_kv = nn.Parameter(torch.zeros(self.hw, channels))
        self.bn = nn.BatchNorm2d(channels)

    def kept_tokens(self) -> int:
        return self.hw // 4

    def forward(self, x: Tensor, z: Tensor, rng: torch.Generator | None,
                keep_idx: Tensor | None = None) -> Tensor:
        if x.shape != z.shape:
            raise ValueError(f"feature shapes differ: {tuple(x.shape)} vs {tuple(z.shape)}")
        b, c, h, w = x.shape
        if c != self.channels or h * w != self.hw:
            raise ValueError(f"expected ({self.channels}, {self.side}, {self.side}) "
                             f"maps, got {tuple(x.shape[1:])}")
        if keep_idx is None:
            keep_idx = torch.randperm(self.hw, generator=rng)[:self.kept_tokens()]
        q_tokens = x.flatten(2).transpose(1, 2) + self.pos_q
        kv_tokens = z.flatten(2).transpose(1, 2)[:, keep_idx] + self.pos_kv[keep_idx]

        def split(t: Tensor) -> Tensor:
            return t.view(b, -1, self.heads, c // self.heads).transpose(1, 2)

        q = split(self.w_q(q_tokens))
        k = split(self.w_k(kv_tokens))
        v = split(self.w_v(kv_tokens))
        att = torch.softmax(q @ k.transpose(-1, -2) / (c // self.heads) ** 0.5, dim=-1)
        r = (att @ v).transpose(1, 2).reshape(b, self.hw, c)
        r = self.w_o(r).transpose(1, 2).reshape(b, c, h, w)
        return F.relu(x + self.bn(r))


class ConcatFuse(nn.Module):
    """Naive concatenation conditioning (ablation arm): a 3x3 conv fuses
    the channel-stacked decoder and context features back to C channels."""

    def __init__(self, channels: int, side: int, heads: int = 0):
        super().__init__()
        self.channels = channels
        self.side = side
        self.conv = nn.Conv2d(2 * channels, channels, 3, padding=1)
        self.bn = nn.BatchNorm2d(channels)

    def forward(self, x: Tensor, z: Tensor, rng=None, keep_idx=None) -> Tensor:
        if x.shape != z.shape:
            raise ValueError(f"feature shapes differ: {tuple(x.shape)} vs {tuple(z.shape)}")
        return F.relu(x + self.bn(self.conv(torch.cat([x, z], dim=1))))


class ContextDecoder(nn.Module):
    """Mirror of the encoder with optional context conditioning.

    A dense layer reshapes the model-state feature to the deepest spatial
    map; each mirrored stage upsamples (nearest neighbor), fuses context
    at the two deepest scales, and runs two residual blocks.  The latent
    pathway is context-free: the context enters through the fuse modules
    only, so with conditioning "none" (or zero-initialized attention) the
    output is independent of the context frame.
    """

    def __init__(self, feat_dim: int, cfg: VisionConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        chans = cfg.stage_channels
        n = len(chans)
        self.dense = nn.Linear(feat_dim, chans[-1] * cfg.final_side ** 2)
        (mid_side, mid_ch), (deep_side, deep_ch) = cfg.context_scales()
        fuse_cls = {"cross": CrossAttentionFuse, "concat": ConcatFuse,
                    "none": None}[cfg.conditioning]
        if fuse_cls is not None:
            self.fuse_deep = fuse_cls(deep_ch, deep_side, cfg.attn_heads)
            self.fuse_mid = fuse_cls(mid_ch, mid_side, cfg.attn_heads)
        else:
            self.fuse_deep = None
            self.fuse_mid = None
        stages = []
        for i in reversed(range(n)):
            out_ch = chans[i - 1] if i > 0 else chans[0]
            stages.append(nn.Sequential(ResidualBlock(chans[i], chans[i]),
                                        ResidualBlock(chans[i], out_ch)))
        self.stages = nn.ModuleList(stages)
        self.conv_out = nn.Conv2d(chans[0], 3, 3, padding=1)

    def forward(self, feat: Tensor, ctx: ContextFeatures | None,
                rng: torch.Generator | None) -> Tensor:
        cfg = self.cfg
        if (self.fuse_deep is not None) and ctx is None:
            raise ValueError("decoder configured for context conditioning "
                             "but no context features given")
        x = self.dense(feat).view(-1, cfg.stage_channels[-1],
                                  cfg.final_side, cfg.final_side)
        n = len(self.stages)
        for i, stage in enumerate(self.stages):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            if self.fuse_deep is not None:
                if i == 0:
                    x = self.fuse_deep(x, ctx.deep, rng)
                elif i == 1:
                    x = self.fuse_mid(x, ctx.mid, rng)
            x = stage(x)
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return self.conv_out(x)
