"""Batched categorical latent distributions and their KL divergence."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor


class CategoricalDist:
    """A batch of independent categorical variables.

    ``logits`` has shape (batch, V, K): V independent variables with K
    classes each.  Probabilities are the softmax over the last axis.
    """

    __slots__ = ("logits",)

    def __init__(self, logits: Tensor):
        if logits.dim() != 3:
            raise ValueError(f"logits must be (batch, V, K), got {tuple(logits.shape)}")
        if not torch.isfinite(logits).all():
            raise ValueError("categorical logits contain non-finite entries")
        self.logits = logits

    @property
    def batch(self) -> int:
        return self.logits.shape[0]

    def probs(self) -> Tensor:
        return F.softmax(self.logits, dim=-1)

    def log_probs(self) -> Tensor:
        return F.log_softmax(self.logits, dim=-1)

    def entropy(self) -> Tensor:
        """Per-variable entropy, shape (batch, V)."""
        logp = self.log_probs()
        return -(logp.exp() * logp).sum(-1)

    def detach(self) -> "CategoricalDist":
        return CategoricalDist(self.logits.detach())


def sample_onehot_st(dist: CategoricalDist, rng: torch.Generator,
                     mode: str = "sample") -> Tensor:
    """Draw a one-hot sample with straight-through gradients.

    The forward value is exactly one-hot per variable; the backward pass
    routes gradients as if the sample were the softmax probabilities.
    ``mode="mean"`` skips sampling and passes the probabilities through
    unchanged, which makes the surrounding graph an ordinary smooth
    function (used by gradient oracles and mean-rollout evaluation).
    """
    probs = dist.probs()
    if mode == "mean":
        return probs
    if mode != "sample":
        raise ValueError(f"unknown latent mode {mode!r}")
    b, v, k = probs.shape
    flat = probs.reshape(b * v, k)
    idx = torch.multinomial(flat, 1, generator=rng).squeeze(-1)
    onehot = F.one_hot(idx, k).to(probs.dtype).reshape(b, v, k)
    # (probs - probs.detach()) is exactly zero in the forward pass, so the
    # returned value is bit-for-bit one-hot while gradients flow to probs.
    return onehot + (probs - probs.detach())


def kl_categorical(post: CategoricalDist, prior: CategoricalDist,
                   balance: float | None = None,
                   free_bits: float = 0.0) -> Tensor:
    """KL[post || prior] summed over variables, shape (batch,).

    By default gradients flow into both arguments.  ``balance`` splits the
    term DreamerV2-style: ``balance`` weights KL(sg(post)||prior) and the
    remainder weights KL(post||sg(prior)).  ``free_bits`` clamps the total
    from below (no gradient once under the threshold).
    """
    if post.logits.shape != prior.logits.shape:
        raise ValueError(
            f"posterior shape {tuple(post.logits.shape)} does not match "
            f"prior shape {tuple(prior.logits.shape)}")

    def _kl(p: CategoricalDist, q: CategoricalDist) -> Tensor:
        return (p.probs() * (p.log_probs() - q.log_probs())).sum((-1, -2))

    if balance is None:
        kl = _kl(post, prior)
    else:
        kl = balance * _kl(post.detach(), prior) \
            + (1.0 - balance) * _kl(post, prior.detach())
    if free_bits > 0.0:
        kl = torch.clamp(kl, min=free_bits)
    return kl
