from cwm.data.env import ReachEnvConfig, SpriteReachEnv
from cwm.data.frames import DataError, VideoDataset, ingest_frame_dir
from cwm.data.replay import (
    EpisodeRecord,
    ReplayBuffer,
    SegmentBatch,
    load_episode,
    sample_segments,
    save_episode,
)
from cwm.data.sprites import (
    DYNAMICS_LABELS,
    SpriteWorldSpec,
    generate_video,
    make_video_dataset,
)

__all__ = [
    "DYNAMICS_LABELS",
    "DataError",
    "EpisodeRecord",
    "ReachEnvConfig",
    "ReplayBuffer",
    "SegmentBatch",
    "SpriteReachEnv",
    "SpriteWorldSpec",
    "VideoDataset",
    "generate_video",
    "ingest_frame_dir",
    "load_episode",
    "make_video_dataset",
    "sample_segments",
    "save_episode",
]
