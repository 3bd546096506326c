"""Stacked recurrent state-space model with discrete latents.

Two levels share one mechanical skeleton:

* action-free level: posterior z_t from (z_{t-1}, o_t), prior from z_{t-1};
* action-conditioned level: posterior s_t from (s_{t-1}, a_{t-1}, z_t),
  prior from (s_{t-1}, a_{t-1}).

Observations reach the action-conditioned level only through the sampled
z_t, and neither level ever sees the context frame, so latent inference is
context-unaware by construction.

The recurrent cell is a plain GRU cell of width ``det_size`` (the gating
scheme is our choice; nothing here depends on it).  Distribution output
layers are zero-initialized so that untrained priors and posteriors are
exactly uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from cwm.config import ModelConfig
from cwm.core.dists import CategoricalDist, sample_onehot_st


def zero_linear(in_dim: int, out_dim: int) -> nn.Linear:
    layer = nn.Linear(in_dim, out_dim)
    nn.init.zeros_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


@dataclass
class LatentState:
    """Recurrent state of one level: deterministic h plus stochastic sample.

    ``stoch`` is (batch, V, K), one-hot per variable after sampling (or a
    probability vector in mean mode).  At the action-free level it is the
    z sample, at the action-conditioned level the s sample.
    """

    h: Tensor
    stoch: Tensor

    @property
    def batch(self) -> int:
        return self.h.shape[0]

    def feature(self) -> Tensor:
        """Model-state feature: h concatenated with the flattened sample."""
        return torch.cat([self.h, self.stoch.flatten(1)], dim=-1)

    def detached(self) -> "LatentState":
        return LatentState(self.h.detach(), self.stoch.detach())


class _RSSMLevel(nn.Module):
    """Shared machinery for one level of the stack."""

    def __init__(self, cfg: ModelConfig, recur_extra: int, post_extra: int):
        super().__init__()
        self.cfg = cfg
        vk = cfg.stoch_flat
        self.img_in = nn.Linear(vk + recur_extra, cfg.hidden)
        self.cell = nn.GRUCell(cfg.hidden, cfg.det_size)
        self.prior_hidden = nn.Linear(cfg.det_size, cfg.hidden)
        self.prior_logits = zero_linear(cfg.hidden, vk)
        self.post_hidden = nn.Linear(cfg.det_size + post_extra, cfg.hidden)
        self.post_logits = zero_linear(cfg.hidden, vk)

    def initial(self, batch: int) -> LatentState:
        if batch < 1:
            raise ValueError("batch must be >= 1")
        p = next(self.parameters())
        h = torch.zeros(batch, self.cfg.det_size, device=p.device, dtype=p.dtype)
        stoch = torch.zeros(batch, self.cfg.stoch_vars, self.cfg.stoch_classes,
                            device=p.device, dtype=p.dtype)
        stoch[..., 0] = 1.0
        return LatentState(h, stoch)

    def _advance(self, prev: LatentState, extras: list[Tensor]) -> Tensor:
        x = torch.cat([prev.stoch.flatten(1), *extras], dim=-1)
        x = F.elu(self.img_in(x))
        return self.cell(x, prev.h)

    def _prior(self, h: Tensor) -> CategoricalDist:
        x = F.elu(self.prior_hidden(h))
        logits = self.prior_logits(x)
        return CategoricalDist(
            logits.view(-1, self.cfg.stoch_vars, self.cfg.stoch_classes))

    def _posterior(self, h: Tensor, extra: Tensor) -> CategoricalDist:
        x = F.elu(self.post_hidden(torch.cat([h, extra], dim=-1)))
        logits = self.post_logits(x)
        return CategoricalDist(
            logits.view(-1, self.cfg.stoch_vars, self.cfg.stoch_classes))


class ActionFreeRSSM(_RSSMLevel):
    """Video-level dynamics over z; never sees actions or the context."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg, recur_extra=0, post_extra=cfg.embed_dim)

    def step(self, prev: LatentState, embed: Tensor | None,
             rng: torch.Generator | None,
             latent_mode: str = "sample",
             ) -> tuple[CategoricalDist, CategoricalDist | None, LatentState]:
        """One transition.  With ``embed`` present the next sample is drawn
        from the posterior, otherwise from the prior."""
        h = self._advance(prev, [])
        prior = self._prior(h)
        post = self._posterior(h, embed) if embed is not None else None
        source = post if post is not None else prior
        z = sample_onehot_st(source, rng, mode=latent_mode)
        return prior, post, LatentState(h, z)


class ActionConditionedRSSM(_RSSMLevel):
    """Control-level dynamics over s, driven by the previous action and
    (for the posterior) the action-free sample z_t."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg, recur_extra=cfg.action_dim,
                         post_extra=cfg.stoch_flat)

    def step(self, prev: LatentState, action: Tensor,
             z_sample: Tensor | None, rng: torch.Generator | None,
             prior_only: bool = False, latent_mode: str = "sample",
             ) -> tuple[CategoricalDist, CategoricalDist | None, LatentState]:
        if z_sample is None and not prior_only:
            raise ValueError("z_sample is required unless prior_only=True")
        h = self._advance(prev, [action])
        prior = self._prior(h)
        if prior_only:
            post = None
            source = prior
        else:
            post = self._posterior(h, z_sample.flatten(1))
            source = post
        s = sample_onehot_st(source, rng, mode=latent_mode)
        return prior, post, LatentState(h, s)


def init_state(batch: int, af: ActionFreeRSSM, ac: ActionConditionedRSSM,
               ) -> tuple[LatentState, LatentState]:
    """Deterministic reset for both levels: zero h, one-hot class 0."""
    return af.initial(batch), ac.initial(batch)


@dataclass
class Rollout:
    """Posterior rollout over a segment, time-major lists of length T."""

    priors_af: list[CategoricalDist]
    posts_af: list[CategoricalDist]
    states_af: list[LatentState]
    priors_ac: list[CategoricalDist] | None = None
    posts_ac: list[CategoricalDist] | None = None
    states_ac: list[LatentState] | None = None

    @property
    def length(self) -> int:
        return len(self.states_af)

    def af_features(self) -> Tensor:
        """(B, T, feat) features of the action-free states."""
        return torch.stack([s.feature() for s in self.states_af], dim=1)

    def ac_features(self) -> Tensor:
        return torch.stack([s.feature() for s in self.states_ac], dim=1)


def rollout_action_free(af: ActionFreeRSSM, embeds: Tensor,
                        rng: torch.Generator | None,
                        latent_mode: str = "sample") -> Rollout:
    """Chain posterior steps of the action-free level over (B, T, embed)."""
    if embeds.dim() != 3:
        raise ValueError(f"embeds must be (B, T, E), got {tuple(embeds.shape)}")
    t_len = embeds.shape[1]
    if t_len < 1:
        raise ValueError("segment length must be >= 1")
    state = af.initial(embeds.shape[0])
    priors, posts, states = [], [], []
    for t in range(t_len):
        prior, post, state = af.step(state, embeds[:, t], rng,
                                     latent_mode=latent_mode)
        priors.append(prior)
        posts.append(post)
        states.append(state)
    return Rollout(priors, posts, states)


def rollout_posterior(af: ActionFreeRSSM, ac: ActionConditionedRSSM,
                      embeds: Tensor, prev_actions: Tensor,
                      rng: torch.Generator | None,
                      latent_mode: str = "sample") -> Rollout:
    """Stacked posterior rollout.

    ``prev_actions[:, t]`` is the action that led into frame t (zeros at an
    episode start).  The action-free posterior at step t depends only on
    (z_{t-1}, o_t); the context frame is not an input anywhere here.
    """
    if embeds.dim() != 3:
        raise ValueError(f"embeds must be (B, T, E), got {tuple(embeds.shape)}")
    if prev_actions.shape[:2] != embeds.shape[:2]:
        raise ValueError("prev_actions and embeds disagree on (B, T)")
    t_len = embeds.shape[1]
    if t_len < 1:
        raise ValueError("segment length must be >= 1")
    z_state = af.initial(embeds.shape[0])
    s_state = ac.initial(embeds.shape[0])
    pr_af, po_af, st_af = [], [], []
    pr_ac, po_ac, st_ac = [], [], []
    for t in range(t_len):
        prior_z, post_z, z_state = af.step(z_state, embeds[:, t], rng,
                                           latent_mode=latent_mode)
        prior_s, post_s, s_state = ac.step(s_state, prev_actions[:, t],
                                           z_state.stoch, rng,
                                           latent_mode=latent_mode)
        pr_af.append(prior_z)
        po_af.append(post_z)
        st_af.append(z_state)
        pr_ac.append(prior_s)
        po_ac.append(post_s)
        st_ac.append(s_state)
    return Rollout(pr_af, po_af, st_af, pr_ac, po_ac, st_ac)
