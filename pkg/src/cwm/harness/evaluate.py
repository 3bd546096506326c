"""Offline evaluation and the linear motion-direction probe."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from cwm.config import RunConfig
from cwm.core.rssm import rollout_action_free
from cwm.data.frames import DataError
from cwm.data.sprites import make_video_dataset
from cwm.harness.agent import Agent
from cwm.harness.finetune import evaluate_policy
from cwm.harness.metrics import iqm_ci
from cwm.model import WorldModel
from cwm.vision import preprocess

PROBE_CONTEXT_OFFSET = 1 << 33


def run_eval(cfg: RunConfig, checkpoint: str) -> dict:
    """Run the evaluation episodes and write a canonical JSON report."""
    cfg.validate()
    agent = Agent(cfg)
    agent.load(checkpoint)
    results = evaluate_policy(agent, cfg, cfg.eval_episodes,
                              seed=cfg.seed * 1009 + 777)
    returns = [r["return"] for r in results]
    point, lo, hi = iqm_ci(returns, rng=np.random.default_rng(cfg.seed))
    report = {
        "episodes": [{"return": round(r["return"], 6),
                      "success": r["success"]} for r in results],
        "return_iqm": round(point, 6),
        "return_ci": [round(lo, 6), round(hi, 6)],
        "success_rate": float(np.mean([r["success"] for r in results])),
        "seed": cfg.seed,
    }
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


@torch.no_grad()
def average_model_states(model: WorldModel, videos: list[np.ndarray],
                         seed: int = 0) -> np.ndarray:
    """Per-video feature: time-average of action-free posterior states."""
    model.eval()
    rng = torch.Generator().manual_seed(seed)
    feats = []
    for vid in videos:
        obs = preprocess(vid).unsqueeze(0)
        embeds = model.encode(obs)
        roll = rollout_action_free(model.af, embeds, rng)
        feats.append(roll.af_features().mean(dim=1)[0].numpy())
    model.train()
    return np.stack(feats)


def fit_linear_probe(features: np.ndarray, labels: np.ndarray,
                     train_frac: float = 0.7, seed: int = 0,
                     ) -> tuple[float, np.ndarray]:
    """Closed-form least squares on +/-1 targets; returns held-out accuracy.

    ``labels`` are 0/1 per row.  Requires both classes present.
    """
    if len(np.unique(labels)) < 2:
        raise DataError("probe needs at least two classes")
    n = features.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(2, int(round(n * train_frac)))
    if n_train >= n:
        raise DataError("not enough videos for a held-out probe split")
    tr, te = order[:n_train], order[n_train:]
    x = np.concatenate([features, np.ones((n, 1))], axis=1)
    y = labels.astype(np.float64) * 2.0 - 1.0
    w, *_ = np.linalg.lstsq(x[tr], y[tr], rcond=None)
    pred = (x[te] @ w) > 0.0
    return float((pred == (labels[te] > 0)).mean()), w


def run_probe(cfg: RunConfig, checkpoint: str, n_videos: int = 120) -> dict:
    """Linear left/right probe on averaged model states of novel-context
    videos; writes a JSON report."""
    cfg.validate()
    agent = Agent(cfg)
    agent.load(checkpoint)
    rng = np.random.default_rng(cfg.seed * 13 + 3)
    dataset = make_video_dataset(n_videos, rng, labels=("left", "right"),
                                 frames=cfg.video_frames,
                                 side=cfg.vision_config().image_side,
                                 context_seed_offset=PROBE_CONTEXT_OFFSET)
    feats = average_model_states(agent.model, dataset.videos,
                                 seed=cfg.seed + 211)
    labels = np.array([1 if l == "right" else 0 for l in dataset.labels])
    acc, _ = fit_linear_probe(feats, labels, seed=cfg.seed)
    report = {"accuracy": acc, "n_videos": n_videos,
              "conditioning": cfg.conditioning, "seed": cfg.seed}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report
