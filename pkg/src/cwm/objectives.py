"""Training objectives: likelihoods, KL terms and the two composite losses.

All likelihood heads are unit-variance Gaussians, so negative log
likelihood is squared error plus a constant.  Composite losses report
per-step means of each term; the total is the weighted sum of the
reported components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor

from cwm.config import LossWeights
from cwm.core.dists import kl_categorical
from cwm.core.rssm import Rollout, rollout_action_free, rollout_posterior
from cwm.model import WorldModel
from cwm.vision import cutout, sample_context_index

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_nll(pred_mean: Tensor, target: Tensor) -> Tensor:
    """Unit-variance Gaussian NLL summed over all elements.

    0.5 * sum((pred - target)^2) + 0.5 * N * log(2*pi).
    """
    if pred_mean.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_mean.shape)} vs "
                         f"{tuple(target.shape)}")
    n = pred_mean.numel()
    return 0.5 * ((pred_mean - target) ** 2).sum() + 0.5 * n * LOG_2PI


def _nll_per_row(pred: Tensor, target: Tensor) -> Tensor:
    """Per-row Gaussian NLL: reduces all dims except the first."""
    err = (pred - target).flatten(1)
    return 0.5 * (err ** 2).sum(-1) + 0.5 * err.shape[-1] * LOG_2PI


@dataclass
class LossReport:
    """Scalar loss components (per-step means) and their weighted total."""

    total: Tensor
    image_nll: Tensor
    behavioral_reward_nll: Tensor
    representative_reward_nll: Tensor
    kl_af: Tensor
    kl_ac: Tensor

    def to_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach())
                for k in ("total", "image_nll", "behavioral_reward_nll",
                          "representative_reward_nll", "kl_af", "kl_ac")}


@dataclass
class LossAux:
    """Side products of a loss evaluation, for behavior learning and tests."""

    rollout: Rollout
    context_index: int | None
    context_frame: Tensor | None
    post_logits_af: Tensor  # (B, T, V, K)
    prior_logits_af: Tensor


def _kl_sequence(posts, priors, weights: LossWeights) -> Tensor:
    """Stack per-step KLs into (B, T)."""
    terms = [kl_categorical(po, pr, balance=weights.kl_balance,
                            free_bits=weights.free_bits)
             for po, pr in zip(posts, priors)]
    return torch.stack(terms, dim=1)


def _pick_context(model: WorldModel, obs: Tensor, rng: torch.Generator,
                  context: Tensor | None,
                  apply_cutout: bool) -> tuple[Tensor | None, int | None]:
    if model.is_vanilla:
        return None, None
    if context is not None:
        return context, None
    idx = sample_context_index(obs.shape[1], rng)
    frame = obs[:, idx - 1]
    if apply_cutout and model.vis.cutout.enabled:
        frame = cutout(frame, model.vis.cutout, rng)
    return frame, idx


def pretrain_loss(model: WorldModel, obs: Tensor, weights: LossWeights,
                  rng: torch.Generator, context: Tensor | None = None,
                  latent_mode: str = "sample") -> tuple[LossReport, LossAux]:
    """Action-free objective over a video segment (B, T, 3, S, S):
    contextualized image NLL plus the weighted action-free KL."""
    if obs.dim() != 5:
        raise ValueError(f"expected (B, T, 3, S, S), got {tuple(obs.shape)}")
    b, t_len = obs.shape[:2]
    if t_len < 2:
        raise ValueError("pre-training segments need T >= 2")
    ctx_frame, ctx_idx = _pick_context(model, obs, rng, context,
                                       apply_cutout=True)
    ctx = model.context_features(ctx_frame) if ctx_frame is not None else None
    embeds = model.encode(obs)
    roll = rollout_action_free(model.af, embeds, rng, latent_mode=latent_mode)
    feats = roll.af_features()
    recon = model.decode(feats.flatten(0, 1), _tile_ctx(ctx, t_len), rng)
    image_nll = _nll_per_row(recon, obs.flatten(0, 1)).mean()
    kl_af = _kl_sequence(roll.posts_af, roll.priors_af, weights).mean()
    zero = torch.zeros((), dtype=image_nll.dtype, device=image_nll.device)
    total = image_nll + weights.beta_z * kl_af
    report = LossReport(total=total, image_nll=image_nll,
                        behavioral_reward_nll=zero,
                        representative_reward_nll=zero,
                        kl_af=kl_af, kl_ac=zero)
    aux = LossAux(rollout=roll, context_index=ctx_idx, context_frame=ctx_frame,
                  post_logits_af=torch.stack([d.logits for d in roll.posts_af], 1),
                  prior_logits_af=torch.stack([d.logits for d in roll.priors_af], 1))
    return report, aux


def finetune_loss(model: WorldModel, batch, weights: LossWeights,
                  rng: torch.Generator, context: Tensor | None = None,
                  latent_mode: str = "sample") -> tuple[LossReport, LossAux]:
    """Full objective over a trajectory segment: contextualized image NLL,
    behavioral reward NLL on r + lambda * r_int, representative reward NLL
    on r, and both KL terms.

    ``batch`` needs obs (B, T, 3, S, S), actions (B, T, A) aligned as the
    action leading into each frame, rewards and intrinsic (B, T).
    """
    obs, actions = batch.obs, batch.actions
    rewards, intrinsic = batch.rewards, batch.intrinsic
    if actions is None or rewards is None:
        raise ValueError("fine-tuning needs actions and rewards in the batch")
    b, t_len = obs.shape[:2]
    ctx_frame, ctx_idx = _pick_context(
        model, obs, rng, context if context is not None else batch.context,
        apply_cutout=True)
    ctx = model.context_features(ctx_frame) if ctx_frame is not None else None
    embeds = model.encode(obs)
    roll = rollout_posterior(model.af, model.ac, embeds, actions, rng,
                             latent_mode=latent_mode)
    feats = roll.ac_features()
    recon = model.decode(feats.flatten(0, 1), _tile_ctx(ctx, t_len), rng)
    image_nll = _nll_per_row(recon, obs.flatten(0, 1)).mean()

    flat_feats = feats.flatten(0, 1)
    behavioral_target = (rewards + weights.lambda_int * intrinsic).flatten()
    pred_b = model.reward_behavioral(flat_feats)
    behavioral_nll = _nll_per_row(pred_b.unsqueeze(-1),
                                  behavioral_target.unsqueeze(-1)).mean()
    zero = torch.zeros((), dtype=image_nll.dtype, device=image_nll.device)
    if model.dual_reward:
        pred_r = model.reward_representative(flat_feats)
        representative_nll = _nll_per_row(pred_r.unsqueeze(-1),
                                          rewards.flatten().unsqueeze(-1)).mean()
    else:
        representative_nll = zero

    kl_af = _kl_sequence(roll.posts_af, roll.priors_af, weights).mean()
    kl_ac = _kl_sequence(roll.posts_ac, roll.priors_ac, weights).mean()
    total = (image_nll + behavioral_nll
             + weights.beta_r * representative_nll
             + weights.beta_z * kl_af + weights.beta_s * kl_ac)
    report = LossReport(total=total, image_nll=image_nll,
                        behavioral_reward_nll=behavioral_nll,
                        representative_reward_nll=representative_nll,
                        kl_af=kl_af, kl_ac=kl_ac)
    aux = LossAux(rollout=roll, context_index=ctx_idx, context_frame=ctx_frame,
                  post_logits_af=torch.stack([d.logits for d in roll.posts_af], 1),
                  prior_logits_af=torch.stack([d.logits for d in roll.priors_af], 1))
    return report, aux


def _tile_ctx(ctx, t_len: int):
    """Repeat per-video context features to match (B*T) decoded frames."""
    if ctx is None:
        return None
    from cwm.vision import ContextFeatures

    def tile(z: Tensor) -> Tensor:
        return z.unsqueeze(1).expand(-1, t_len, *z.shape[1:]).flatten(0, 1)

    return ContextFeatures(mid=tile(ctx.mid), deep=tile(ctx.deep))
