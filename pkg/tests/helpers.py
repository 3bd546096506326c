"""Shared test fixtures: tiny configs and independent oracles.

The oracles here are deliberately separate from the library code paths
they check: finite differences for gradients, exhaustive path enumeration
for sequence KLs, and a recursive definition for lambda-returns.
"""

from __future__ import annotations

import numpy as np
import torch

from cwm.config import (
    BehaviorConfig,
    CutoutParams,
    IntrinsicConfig,
    ModelConfig,
    RunConfig,
    VisionConfig,
)

# ---------------------------------------------------------------------- #
# tiny/mini configs


def tiny_model(action_dim: int = 2, stoch_vars: int = 4,
               stoch_classes: int = 4) -> ModelConfig:
    return ModelConfig(det_size=12, stoch_vars=stoch_vars,
                       stoch_classes=stoch_classes, hidden=12,
                       action_dim=action_dim, embed_dim=6,
                       head_width=12, head_layers=2)


def tiny_vision(conditioning: str = "cross",
                cutout: CutoutParams | None = None) -> VisionConfig:
    # 8x8 images, two stages -> final map 1x1, embed 6
    return VisionConfig(image_side=8, stage_channels=(3, 6), attn_heads=1,
                        conditioning=conditioning,
                        cutout=cutout or CutoutParams())


def tiny_behavior(horizon: int = 3) -> BehaviorConfig:
    return BehaviorConfig(horizon=horizon, head_width=12, head_layers=2,
                          target_update_interval=5)


def mini_model(action_dim: int = 2) -> ModelConfig:
    return ModelConfig(det_size=32, stoch_vars=4, stoch_classes=4, hidden=32,
                       action_dim=action_dim, embed_dim=192,
                       head_width=32, head_layers=2)


def mini_vision(conditioning: str = "cross",
                cutout: CutoutParams | None = None) -> VisionConfig:
    return VisionConfig(image_side=32, stage_channels=(6, 12), attn_heads=2,
                        conditioning=conditioning,
                        cutout=cutout or CutoutParams())


def register_mini_preset() -> None:
    """Make RunConfig(preset='mini') available for harness-level tests."""
    import cwm.config as C

    C.MODEL_PRESETS.setdefault("mini", mini_model)
    C.VISION_PRESETS.setdefault("mini", mini_vision)


def mini_run_config(tmpdir, **kwargs) -> RunConfig:
    register_mini_preset()
    defaults = dict(
        preset="mini", out=str(tmpdir), seed=0,
        pretrain_iters=30, batch_pretrain=4, t_pretrain=8,
        n_train_videos=12, n_val_videos=4, video_frames=10,
        val_every=15, checkpoint_every=15, log_every=5,
        env_steps=60, prefill=20, batch_finetune=4, t_finetune=8,
        eval_every=50, eval_episodes=2, episode_len=25,
        behavior=BehaviorConfig(horizon=4, head_width=32, head_layers=2,
                                target_update_interval=10),
        intrinsic=IntrinsicConfig(capacity=500),
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


# ---------------------------------------------------------------------- #
# oracles


def finite_diff_gradient_error(params: list[torch.Tensor], loss_fn,
                               h: float = 1e-6, max_coords: int = 16,
                               seed: int = 0) -> float:
    """Relative error between analytic gradients and central finite
    differences over a seeded coordinate sample (all tensors covered).

    ``loss_fn`` must be a deterministic function of the parameters and is
    re-evaluated from scratch for every probe.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    fd_vals, an_vals = [], []
    with torch.no_grad():
        for p in params:
            grad = p.grad if p.grad is not None else torch.zeros_like(p)
            flat = p.view(-1)
            n = flat.numel()
            coords = rng.choice(n, size=min(max_coords, n), replace=False)
            for i in coords:
                orig = float(flat[i])
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                fd_vals.append((up - down) / (2.0 * h))
                an_vals.append(float(grad.view(-1)[i]))
    fd = np.asarray(fd_vals)
    an = np.asarray(an_vals)
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(fd), 1e-12))


def brute_force_lambda_returns(rewards, values, gamma: float,
                               lam: float) -> np.ndarray:
    """Direct recursive definition of the lambda-target."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    h = rewards.shape[0]

    def v(i: int) -> float:
        if i == h - 1:
            return rewards[i] + gamma * values[i + 1]
        return rewards[i] + gamma * ((1 - lam) * values[i + 1] + lam * v(i + 1))

    return np.array([v(i) for i in range(h)])


def enumeration_sequence_kl(af, embeds: torch.Tensor) -> tuple[float, float]:
    """For V=1, K=2, T=2: (sequence KL by full path enumeration,
    sum of per-step expected KLs via the module's kl_categorical)."""
    from cwm.core.dists import kl_categorical
    from cwm.core.rssm import LatentState

    assert embeds.shape[:2] == (1, 2)
    k = af.cfg.stoch_classes
    state0 = af.initial(1)
    prior1, post1, st1 = af.step(state0, embeds[:, 0], None, latent_mode="mean")
    h1 = st1.h
    q1 = post1.probs()[0, 0]
    p1 = prior1.probs()[0, 0]

    step2 = []
    for kk in range(k):
        z1 = torch.zeros(1, 1, k, dtype=h1.dtype)
        z1[0, 0, kk] = 1.0
        prior2, post2, _ = af.step(LatentState(h1, z1), embeds[:, 1], None,
                                   latent_mode="mean")
        step2.append((prior2, post2))

    seq_kl = 0.0
    for a in range(k):
        q2 = step2[a][1].probs()[0, 0]
        p2 = step2[a][0].probs()[0, 0]
        for b in range(k):
            joint_q = float(q1[a] * q2[b])
            joint_p = float(p1[a] * p2[b])
            if joint_q > 0:
                seq_kl += joint_q * (np.log(joint_q) - np.log(joint_p))

    per_step = float(kl_categorical(post1, prior1))
    for a in range(k):
        per_step += float(q1[a]) * float(kl_categorical(step2[a][1],
                                                        step2[a][0]))
    return float(seq_kl), per_step


def multinomial_3sigma_bound(n_draws: int, p: float) -> float:
    """3-sigma half-width for an empirical frequency estimate."""
    return 3.0 * np.sqrt(p * (1.0 - p) / n_draws)
