"""Procedural sprite videos with an explicit context/dynamics split.

Each video is a single sprite moving over a static textured background.
Everything visual (background family, palette, sprite shape and color)
derives from ``context_seed``; the trajectory derives from
``motion_seed`` and ``dynamics_label`` only.  Two videos sharing a
motion seed and label therefore have pixel-identical sprite trajectories
under completely different appearances, which is the property the probe
and the pre-training experiments rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DYNAMICS_LABELS = ("left", "right", "up", "down", "circular")

_SPRITE_SIZE = 10
_MARGIN = 2

# saturated palette for sprites; backgrounds use dimmer colors so the
# sprite stays visible under any context
_SPRITE_COLORS = np.array([
    [250, 60, 60], [60, 250, 60], [80, 120, 255], [250, 220, 50],
    [240, 80, 240], [70, 240, 240], [255, 150, 40], [245, 245, 245],
], dtype=np.uint8)


@dataclass(frozen=True)
class SpriteWorldSpec:
    context_seed: int
    motion_seed: int
    dynamics_label: str
    frames: int = 25
    side: int = 64

    def validate(self) -> None:
        if self.dynamics_label not in DYNAMICS_LABELS:
            raise ValueError(f"unknown dynamics label {self.dynamics_label!r}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.side < 32:
            raise ValueError("side must be >= 32")


def _make_background(rng: np.random.Generator, side: int) -> np.ndarray:
    """Static (3, side, side) uint8 texture: checker, noise or gradient."""
    family = rng.integers(0, 3)
    c0 = rng.integers(10, 170, size=3)
    c1 = rng.integers(10, 170, size=3)
    if family == 0:  # checker
        tile = int(rng.choice([4, 8, 16]))
        yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        mask = ((yy // tile + xx // tile) % 2).astype(np.float64)
    elif family == 1:  # smooth noise
        low = rng.random((8, 8))
        mask = np.kron(low, np.ones((side // 8, side // 8)))
    else:  # linear gradient, random orientation
        yy, xx = np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side),
                             indexing="ij")
        a = rng.random() * 2 * np.pi
        mask = (np.cos(a) * xx + np.sin(a) * yy)
        mask = (mask - mask.min()) / max(np.ptp(mask), 1e-9)
    img = c0[:, None, None] * (1 - mask) + c1[:, None, None] * mask
    return np.clip(img, 0, 255).astype(np.uint8)


def _sprite_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    shape = rng.integers(0, 3)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    c = (size - 1) / 2.0
    if shape == 0:  # square
        return np.ones((size, size), dtype=bool)
    if shape == 1:  # circle
        return (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0) ** 2
    return np.abs(yy - c) + np.abs(xx - c) <= c  # diamond


def _trajectory(rng: np.random.Generator, label: str, frames: int,
                side: int) -> np.ndarray:
    """(frames, 2) float top-left sprite positions (row, col).

    Directional labels move at >= 1 px/frame so the drawn centroid is
    strictly monotone; this bounds usable frame counts to about
    side - sprite - margins (>= 50 at side 64)."""
    lo = _MARGIN
    hi = side - _MARGIN - _SPRITE_SIZE
    span = hi - lo
    if label == "circular":
        radius = rng.uniform(0.45, 0.75) * span / 2.0
        cy = side / 2.0 - _SPRITE_SIZE / 2.0 + rng.uniform(-2, 2)
        cx = side / 2.0 - _SPRITE_SIZE / 2.0 + rng.uniform(-2, 2)
        phase = rng.uniform(0, 2 * np.pi)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        tt = np.arange(frames)
        ang = phase + sign * 2 * np.pi * tt / max(frames, 2)
        pos = np.stack([cy + radius * np.sin(ang),
                        cx + radius * np.cos(ang)], axis=1)
        return np.clip(pos, lo, hi)
    speed = rng.uniform(1.0, 1.5)
    travel = speed * (frames - 1)
    if travel > span:
        speed = span / max(frames - 1, 1)
        travel = span
    start_main = lo + rng.uniform(0, span - travel)
    fixed = lo + rng.uniform(0, span)
    tt = np.arange(frames)
    main = start_main + speed * tt
    if label == "right":
        return np.stack([np.full(frames, fixed), main], axis=1)
    if label == "left":
        return np.stack([np.full(frames, fixed), hi + lo - main], axis=1)
    if label == "down":
        return np.stack([main, np.full(frames, fixed)], axis=1)
    return np.stack([hi + lo - main, np.full(frames, fixed)], axis=1)  # up


def generate_video(spec: SpriteWorldSpec) -> tuple[np.ndarray, str]:
    """Render (frames, 3, side, side) uint8 plus the dynamics label."""
    spec.validate()
    ctx_rng = np.random.default_rng(spec.context_seed)
    motion_rng = np.random.default_rng(spec.motion_seed)
    background = _make_background(ctx_rng, spec.side)
    color = _SPRITE_COLORS[int(ctx_rng.integers(0, len(_SPRITE_COLORS)))]
    mask = _sprite_mask(ctx_rng, _SPRITE_SIZE)
    positions = _trajectory(motion_rng, spec.dynamics_label, spec.frames,
                            spec.side)
    frames = np.empty((spec.frames, 3, spec.side, spec.side), dtype=np.uint8)
    for t in range(spec.frames):
        frame = background.copy()
        y, x = int(round(positions[t, 0])), int(round(positions[t, 1]))
        region = frame[:, y:y + _SPRITE_SIZE, x:x + _SPRITE_SIZE]
        region[:, mask] = color[:, None]
        frames[t] = frame
    return frames, spec.dynamics_label


def make_video_dataset(n_videos: int, rng: np.random.Generator,
                       labels: tuple[str, ...] = DYNAMICS_LABELS,
                       frames: int = 25, side: int = 64,
                       context_seed_offset: int = 0):
    """Generate a labeled in-memory dataset.

    ``context_seed_offset`` shifts the context-seed pool, so disjoint
    offsets produce datasets with disjoint (novel) visual contexts while
    motion statistics stay identical.
    """
    from cwm.data.frames import VideoDataset

    videos, out_labels = [], []
    for i in range(n_videos):
        spec = SpriteWorldSpec(
            context_seed=context_seed_offset + int(rng.integers(0, 2 ** 31)),
            motion_seed=int(rng.integers(0, 2 ** 31)),
            dynamics_label=labels[i % len(labels)],
            frames=frames, side=side)
        vid, label = generate_video(spec)
        videos.append(vid)
        out_labels.append(label)
    return VideoDataset(videos, labels=out_labels, name="synthetic")
