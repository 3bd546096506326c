"""Experiment drivers: pre-training benefit, control, and probe comparisons.

Each driver is a plain function over a RunConfig so the same code backs
the ``scripts/`` entry points and the acceptance suite.  Default budgets
(20K pre-training iterations, 30K environment steps, desk preset) are
hour-scale on a GPU and multi-hour on CPU; pass smaller numbers to smoke
them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cwm.config import RunConfig
from cwm.harness.evaluate import average_model_states, fit_linear_probe
from cwm.harness.finetune import random_policy_returns, run_finetune
from cwm.harness.metrics import iqm, read_metrics
from cwm.harness.pretrain import run_pretrain


def desk_run(out: str, seed: int, conditioning: str = "cross",
             **overrides) -> RunConfig:
    return RunConfig(preset="desk", out=out, seed=seed,
                     conditioning=conditioning, **overrides)


def pretrain_benefit(out_dir: str | Path, seed: int,
                     pretrain_iters: int = 20_000,
                     n_train_videos: int = 400, n_val_videos: int = 64,
                     base: RunConfig | None = None) -> dict:
    """Pre-train the context-conditioned and vanilla models on the same
    synthetic videos and compare validation NLL on novel contexts."""
    out_dir = Path(out_dir)
    results = {"seed": seed}
    for mode, conditioning in (("context", "cross"), ("vanilla", "none")):
        if base is None:
            cfg = desk_run(str(out_dir / f"{mode}_s{seed}"), seed,
                           conditioning=conditioning,
                           pretrain_iters=pretrain_iters,
                           n_train_videos=n_train_videos,
                           n_val_videos=n_val_videos)
        else:
            cfg = base.replaced(out=str(out_dir / f"{mode}_s{seed}"),
                                seed=seed, conditioning=conditioning,
                                pretrain_iters=pretrain_iters)
        ckpt = run_pretrain(cfg)
        records = read_metrics(Path(cfg.out) / "metrics.jsonl")
        nll = [r["value"] for r in records
               if r["name"] == "pretrain/val_image_nll"]
        results[mode] = {"val_image_nll": nll[-1], "checkpoint": str(ckpt),
                         "out": cfg.out}
    results["nll_ratio"] = (results["context"]["val_image_nll"]
                            / results["vanilla"]["val_image_nll"])
    (out_dir / f"pretrain_benefit_s{seed}.json").write_text(
        json.dumps(results, indent=2, sort_keys=True))
    return results


def eval_curve(metrics_path: str | Path) -> list[tuple[int, float]]:
    records = read_metrics(metrics_path)
    return [(r["step"], r["value"]) for r in records
            if r["name"] == "eval/return_iqm"]


def first_step_reaching(curve: list[tuple[int, float]],
                        threshold: float) -> int | None:
    for step, value in curve:
        if value >= threshold:
            return step
    return None


def control_experiment(out_dir: str | Path, seed: int,
                       pretrained_ckpt: str | None,
                       env_steps: int = 30_000,
                       base: RunConfig | None = None) -> dict:
    """Fine-tune on the reach task from scratch and (optionally) from a
    pre-trained checkpoint; compare against the random-policy baseline."""
    out_dir = Path(out_dir)

    def make_cfg(name: str) -> RunConfig:
        if base is None:
            return desk_run(str(out_dir / f"{name}_s{seed}"), seed,
                            env_steps=env_steps)
        return base.replaced(out=str(out_dir / f"{name}_s{seed}"), seed=seed,
                             env_steps=env_steps)

    cfg = make_cfg("scratch")
    baseline = iqm(random_policy_returns(cfg, episodes=cfg.eval_episodes,
                                         seed=seed * 53 + 1))
    results = {"seed": seed, "random_iqm": baseline}
    arms = [("scratch", None)]
    if pretrained_ckpt is not None:
        arms.append(("pretrained", pretrained_ckpt))
    for name, ckpt in arms:
        cfg = make_cfg(name)
        run_finetune(cfg, pretrained=ckpt, load_theta_only=True)
        curve = eval_curve(Path(cfg.out) / "metrics.jsonl")
        results[name] = {
            "curve": curve,
            "final_iqm": curve[-1][1] if curve else None,
            "first_step_3x": first_step_reaching(curve, 3.0 * baseline),
            "out": cfg.out,
        }
    (out_dir / f"control_s{seed}.json").write_text(
        json.dumps(results, indent=2, sort_keys=True))
    return results


def probe_comparison(context_ckpt: str, vanilla_ckpt: str, seed: int,
                     base: RunConfig | None = None, n_videos: int = 120,
                     frames: int = 25) -> dict:
    """Left/right linear probe accuracy for both trained models on
    novel-context videos."""
    from cwm.data.sprites import make_video_dataset
    from cwm.harness.agent import Agent
    from cwm.harness.evaluate import PROBE_CONTEXT_OFFSET

    results = {"seed": seed}
    rng = np.random.default_rng(seed * 17 + 5)
    side = None
    for mode, ckpt, conditioning in (("context", context_ckpt, "cross"),
                                     ("vanilla", vanilla_ckpt, "none")):
        if base is None:
            cfg = desk_run(f"/tmp/probe_{mode}_{seed}", seed,
                           conditioning=conditioning)
        else:
            cfg = base.replaced(seed=seed, conditioning=conditioning)
        agent = Agent(cfg)
        agent.load(ckpt, theta_only=True)
        if side is None:
            side = cfg.vision_config().image_side
            dataset = make_video_dataset(
                n_videos, rng, labels=("left", "right"), frames=frames,
                side=side, context_seed_offset=PROBE_CONTEXT_OFFSET)
            labels = np.array([1 if l == "right" else 0
                               for l in dataset.labels])
        feats = average_model_states(agent.model, dataset.videos,
                                     seed=seed + 211)
        acc, _ = fit_linear_probe(feats, labels, seed=seed)
        results[mode] = {"accuracy": acc}
    return results
