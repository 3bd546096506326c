"""Action-free pre-training loop on video datasets."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from cwm.config import RunConfig
from cwm.data.frames import DataError, VideoDataset, ingest_frame_dir
from cwm.data.replay import sample_segments
from cwm.data.sprites import make_video_dataset
from cwm.harness.agent import Agent
from cwm.harness.checkpoint import load_checkpoint
from cwm.harness.config_io import write_manifest
from cwm.harness.metrics import MetricsWriter
from cwm.objectives import pretrain_loss

VAL_CONTEXT_OFFSET = 1 << 32  # synthetic validation uses novel contexts


def build_pretrain_datasets(cfg: RunConfig,
                            ) -> tuple[VideoDataset, VideoDataset]:
    side = cfg.vision_config().image_side
    if cfg.dataset == "synthetic":
        train_rng = np.random.default_rng(cfg.seed * 7919 + 11)
        val_rng = np.random.default_rng(cfg.seed * 7919 + 13)
        train = make_video_dataset(cfg.n_train_videos, train_rng,
                                   frames=cfg.video_frames, side=side)
        val = make_video_dataset(cfg.n_val_videos, val_rng,
                                 frames=cfg.video_frames, side=side,
                                 context_seed_offset=VAL_CONTEXT_OFFSET)
        return train, val
    root = Path(cfg.dataset)
    if root.is_dir() and any(p.is_dir() and not any(q.suffix == ".png" for q in p.iterdir())
                             for p in root.iterdir() if p.is_dir()):
        # directory of datasets -> assembled mode
        parts = [ingest_frame_dir(p, min_frames=cfg.t_pretrain, side=side)
                 for p in sorted(root.iterdir()) if p.is_dir()]
        dataset = VideoDataset.merge(parts)
    else:
        dataset = ingest_frame_dir(root, min_frames=cfg.t_pretrain, side=side)
    split_rng = np.random.default_rng(cfg.seed * 7919 + 17)
    return dataset.split(cfg.val_fraction, split_rng)


@torch.no_grad()
def validation_image_nll(agent: Agent, val: VideoDataset, cfg: RunConfig,
                         max_batches: int = 4) -> float:
    """Mean image NLL on fixed held-out segments with a fixed context draw."""
    agent.model.eval()
    rng = torch.Generator().manual_seed(cfg.seed + 9091)
    weights = cfg.pretrain_weights()
    t_len = min(cfg.t_pretrain, min(v.shape[0] for v in val.videos))
    totals = []
    b = cfg.batch_pretrain
    for start in range(0, min(len(val.videos), max_batches * b), b):
        chunk = val.videos[start:start + b]
        obs = np.stack([v[:t_len] for v in chunk])
        from cwm.vision import preprocess

        report, _ = pretrain_loss(agent.model, preprocess(obs), weights, rng)
        totals.append(float(report.image_nll))
    agent.model.train()
    return float(np.mean(totals))


def run_pretrain(cfg: RunConfig, resume: str | None = None) -> Path:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out / "manifest.cfg")

    train, val = build_pretrain_datasets(cfg)
    if not train.videos:
        raise DataError("empty training dataset")
    agent = Agent(cfg)
    data_rng = np.random.default_rng(cfg.seed * 104729 + 1)

    start_iter = 0
    append = False
    if resume is not None:
        meta = agent.load(resume)
        start_iter = meta["counters"]["pretrain_iters"]
        data_rng.bit_generator.state = meta["data_rng_state"]
        append = True

    metrics = MetricsWriter(out / "metrics.jsonl", append=append)
    ckpt_path = out / "checkpoint.ckpt"
    with metrics:
        for it in range(start_iter, cfg.pretrain_iters):
            batch = sample_segments(train, cfg.batch_pretrain,
                                    min(cfg.t_pretrain, cfg.video_frames),
                                    data_rng)
            report = agent.pretrain_update(batch.obs)
            step = it + 1
            if step % cfg.log_every == 0 or step == 1:
                metrics.log_many(step, {f"pretrain/{k}": v for k, v in
                                        report.to_floats().items()})
            if step % cfg.val_every == 0 or step == cfg.pretrain_iters:
                nll = validation_image_nll(agent, val, cfg)
                metrics.log(step, "pretrain/val_image_nll", nll)
            if step % cfg.checkpoint_every == 0 or step == cfg.pretrain_iters:
                agent.save(ckpt_path, extra_meta={
                    "data_rng_state": data_rng.bit_generator.state})
    final = out / "checkpoint_final.ckpt"
    agent.save(final, extra_meta={
        "data_rng_state": data_rng.bit_generator.state})
    return final
