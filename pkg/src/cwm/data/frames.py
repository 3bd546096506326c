"""Frame-folder ingestion and the in-memory video dataset.

On-disk layout: ``<dataset>/<video_id>/<frame>.png`` with zero-padded
frame names so lexicographic order is index order.  An optional
``manifest.txt`` in the dataset root restricts ingestion to the listed
relative video paths (one per line).
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np


class DataError(RuntimeError):
    """Raised when a dataset is missing, empty or malformed."""


class VideoDataset:
    """A list of uint8 videos (T_i, 3, S, S), optionally labeled.

    ``datasets`` mode: pass sub-datasets to :func:`merge` to build an
    assembled dataset; sampling then draws a sub-dataset uniformly first.
    """

    def __init__(self, videos: list[np.ndarray],
                 labels: list[str] | None = None, name: str = "dataset"):
        if not videos:
            raise DataError(f"dataset {name!r} contains no videos")
        for v in videos:
            if v.ndim != 4 or v.shape[1] != 3 or v.dtype != np.uint8:
                raise DataError("videos must be uint8 arrays (T, 3, S, S)")
        if labels is not None and len(labels) != len(videos):
            raise DataError("labels length does not match videos")
        self.videos = videos
        self.labels = labels
        self.name = name
        self.parts: list[VideoDataset] | None = None

    def __len__(self) -> int:
        return len(self.videos)

    @staticmethod
    def merge(parts: list["VideoDataset"], name: str = "assembled",
              ) -> "VideoDataset":
        videos = [v for p in parts for v in p.videos]
        merged = VideoDataset(videos, name=name)
        merged.parts = list(parts)
        return merged

    def split(self, val_fraction: float, rng: np.random.Generator,
              ) -> tuple["VideoDataset", "VideoDataset"]:
        """Disjoint train/validation split by whole videos."""
        n = len(self.videos)
        n_val = max(1, int(round(n * val_fraction)))
        if n_val >= n:
            raise DataError("validation split would consume every video")
        order = rng.permutation(n)
        pick = lambda idx: [self.videos[i] for i in idx]
        lab = lambda idx: ([self.labels[i] for i in idx]
                           if self.labels is not None else None)
        val_idx, train_idx = order[:n_val], order[n_val:]
        return (VideoDataset(pick(train_idx), lab(train_idx), self.name),
                VideoDataset(pick(val_idx), lab(val_idx), self.name + "-val"))


def _load_one_video(video_dir: Path, side: int) -> np.ndarray | None:
    from PIL import Image

    frames = []
    for png in sorted(video_dir.glob("*.png")):
        try:
            with Image.open(png) as im:
                im = im.convert("RGB").resize((side, side), Image.BILINEAR)
                frames.append(np.asarray(im, dtype=np.uint8).transpose(2, 0, 1))
        except Exception as exc:  # unreadable frame: drop the whole video
            print(f"warning: skipping video {video_dir.name}: "
                  f"unreadable frame {png.name} ({exc})", file=sys.stderr)
            return None
    if not frames:
        return None
    return np.stack(frames)


def ingest_frame_dir(path: str | Path, min_frames: int = 25,
                     side: int = 64) -> VideoDataset:
    """Load a frame-folder dataset, dropping videos shorter than
    ``min_frames``.  Deterministic: video directories are visited in
    lexicographic order."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} does not exist")
    manifest = root / "manifest.txt"
    if manifest.is_file():
        rel = [line.strip() for line in manifest.read_text().splitlines()
               if line.strip()]
        video_dirs = [root / r for r in rel]
    else:
        video_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    videos = []
    for vd in video_dirs:
        if not vd.is_dir():
            print(f"warning: missing video directory {vd}", file=sys.stderr)
            continue
        video = _load_one_video(vd, side)
        if video is None:
            continue
        if video.shape[0] < min_frames:
            continue
        videos.append(video)
    if not videos:
        raise DataError(f"no usable videos (>= {min_frames} frames) in {root}")
    return VideoDataset(videos, name=root.name)
