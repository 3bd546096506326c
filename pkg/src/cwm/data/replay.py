"""Episode records, the bounded replay buffer and segment sampling.

Segments never span episode boundaries.  Sampling is uniform over all
eligible (sequence, start offset) pairs, independently per batch element,
except for assembled video datasets where a sub-dataset is drawn
uniformly first.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from cwm.data.frames import DataError, VideoDataset
from cwm.vision import preprocess

EPISODE_FORMAT_VERSION = 1


@dataclass
class EpisodeRecord:
    """L transitions: L+1 observations, and per-transition action/rewards.

    ``actions[i]`` led from observations[i] to observations[i+1];
    ``rewards[i]``/``intrinsic[i]`` were received on that transition.
    """

    observations: np.ndarray   # (L+1, 3, S, S) uint8
    actions: np.ndarray        # (L, A) float32
    rewards: np.ndarray        # (L,) float32
    intrinsic: np.ndarray      # (L,) float32

    def __post_init__(self) -> None:
        ln = self.actions.shape[0]
        if self.observations.shape[0] != ln + 1:
            raise ValueError("need exactly L+1 observations for L actions")
        if self.rewards.shape != (ln,) or self.intrinsic.shape != (ln,):
            raise ValueError("rewards/intrinsic must have shape (L,)")
        if self.observations.dtype != np.uint8:
            raise ValueError("observations must be uint8")
        if not (np.isfinite(self.rewards).all()
                and np.isfinite(self.intrinsic).all()):
            raise ValueError("rewards must be finite")

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    @property
    def n_frames(self) -> int:
        return self.observations.shape[0]


def save_episode(path: str | Path, ep: EpisodeRecord) -> None:
    """One file per episode: a version byte followed by an npz payload."""
    buf = io.BytesIO()
    np.savez(buf, observations=ep.observations, actions=ep.actions,
             rewards=ep.rewards, intrinsic=ep.intrinsic)
    with open(path, "wb") as f:
        f.write(bytes([EPISODE_FORMAT_VERSION]))
        f.write(buf.getvalue())


def load_episode(path: str | Path) -> EpisodeRecord:
    with open(path, "rb") as f:
        version = f.read(1)[0]
        if version != EPISODE_FORMAT_VERSION:
            raise DataError(f"unsupported episode format version {version}")
        data = np.load(io.BytesIO(f.read()))
    return EpisodeRecord(observations=data["observations"],
                         actions=data["actions"], rewards=data["rewards"],
                         intrinsic=data["intrinsic"])


class ReplayBuffer:
    """Bounded episode store; oldest-first eviction by transition count."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.episodes: list[EpisodeRecord] = []
        self.total_transitions = 0

    def add(self, ep: EpisodeRecord) -> None:
        self.episodes.append(ep)
        self.total_transitions += ep.length
        while self.total_transitions > self.capacity and len(self.episodes) > 1:
            dropped = self.episodes.pop(0)
            self.total_transitions -= dropped.length

    def __len__(self) -> int:
        return len(self.episodes)


@dataclass
class SegmentBatch:
    """A batched length-T slice of trajectories, already preprocessed.

    ``actions[:, t]`` is the action that led into frame t (zeros at an
    episode start); ``rewards[:, t]`` was received on arrival at frame t.
    Video sources carry no actions/rewards (fields are None).
    """

    obs: Tensor                      # (B, T, 3, S, S) float32
    actions: Tensor | None = None    # (B, T, A)
    rewards: Tensor | None = None    # (B, T)
    intrinsic: Tensor | None = None  # (B, T)
    context: Tensor | None = None    # (B, 3, S, S)
    labels: list[str] | None = None

    @property
    def batch(self) -> int:
        return self.obs.shape[0]

    @property
    def length(self) -> int:
        return self.obs.shape[1]


def _eligible_positions(n_frames_per_seq: list[int], t_len: int) -> np.ndarray:
    return np.array([max(0, n - t_len + 1) for n in n_frames_per_seq],
                    dtype=np.int64)


def _draw_position(counts: np.ndarray, rng: np.random.Generator,
                   ) -> tuple[int, int]:
    """Uniform draw over all eligible (sequence, offset) pairs."""
    total = int(counts.sum())
    flat = int(rng.integers(0, total))
    cum = np.cumsum(counts)
    seq = int(np.searchsorted(cum, flat, side="right"))
    offset = flat - (int(cum[seq - 1]) if seq > 0 else 0)
    return seq, offset


def _slice_episode(ep: EpisodeRecord, off: int, t_len: int,
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    obs = ep.observations[off:off + t_len]
    a_dim = ep.actions.shape[1]
    prev_actions = np.concatenate(
        [np.zeros((1, a_dim), dtype=np.float32), ep.actions])
    arriving_rewards = np.concatenate([[0.0], ep.rewards]).astype(np.float32)
    arriving_intrinsic = np.concatenate([[0.0], ep.intrinsic]).astype(np.float32)
    return (obs, prev_actions[off:off + t_len],
            arriving_rewards[off:off + t_len],
            arriving_intrinsic[off:off + t_len])


def sample_segments(source: ReplayBuffer | VideoDataset, batch: int,
                    t_len: int, rng: np.random.Generator) -> SegmentBatch:
    """Draw B independent contiguous length-T segments and preprocess them."""
    if batch < 1 or t_len < 1:
        raise ValueError("batch and segment length must be >= 1")

    if isinstance(source, ReplayBuffer):
        counts = _eligible_positions([e.n_frames for e in source.episodes], t_len)
        if counts.sum() == 0:
            raise DataError("replay buffer holds no segment of the requested length")
        obs_l, act_l, rew_l, int_l = [], [], [], []
        for _ in range(batch):
            seq, off = _draw_position(counts, rng)
            o, a, r, ri = _slice_episode(source.episodes[seq], off, t_len)
            obs_l.append(o)
            act_l.append(a)
            rew_l.append(r)
            int_l.append(ri)
        return SegmentBatch(
            obs=preprocess(np.stack(obs_l)),
            actions=torch.from_numpy(np.stack(act_l)),
            rewards=torch.from_numpy(np.stack(rew_l)),
            intrinsic=torch.from_numpy(np.stack(int_l)))

    obs_l, lab_l = [], []
    parts = source.parts
    for _ in range(batch):
        ds = source if parts is None else parts[int(rng.integers(0, len(parts)))]
        counts = _eligible_positions([v.shape[0] for v in ds.videos], t_len)
        if counts.sum() == 0:
            raise DataError(f"no video of length >= {t_len} in {ds.name!r}")
        if parts is None:
            vid, off = _draw_position(counts, rng)
        else:
            # assembled mode: dataset uniform, then video uniform within it
            eligible = np.flatnonzero(counts)
            vid = int(eligible[int(rng.integers(0, len(eligible)))])
            off = int(rng.integers(0, counts[vid]))
        obs_l.append(ds.videos[vid][off:off + t_len])
        if ds.labels is not None:
            lab_l.append(ds.labels[vid])
    return SegmentBatch(obs=preprocess(np.stack(obs_l)),
                        labels=lab_l or None)
