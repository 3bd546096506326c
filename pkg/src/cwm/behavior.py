"""Actor-critic learning purely in imagination, plus the novelty bonus.

The actor is a tanh-squashed diagonal Gaussian over continuous actions;
the critic regresses lambda-returns computed from a slow target copy.
Both consume only action-conditioned (s-level) state features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from cwm.config import BehaviorConfig, IntrinsicConfig
from cwm.core.rssm import LatentState
from cwm.model import WorldModel


class Actor(nn.Module):
    """Tanh-squashed diagonal Gaussian policy."""

    def __init__(self, feat_dim: int, action_dim: int, cfg: BehaviorConfig):
        super().__init__()
        self.cfg = cfg
        self.action_dim = action_dim
        dims = [feat_dim] + [cfg.head_width] * cfg.head_layers
        self.hidden = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(cfg.head_layers))
        self.out = nn.Linear(cfg.head_width, 2 * action_dim)

    def _params(self, feat: Tensor) -> tuple[Tensor, Tensor]:
        x = feat
        for layer in self.hidden:
            x = F.elu(layer(x))
        mu, pre_std = self.out(x).chunk(2, dim=-1)
        std = F.softplus(pre_std) + self.cfg.min_std
        return mu, std

    def sample(self, feat: Tensor, rng: torch.Generator | None,
               deterministic: bool = False) -> tuple[Tensor, Tensor]:
        """Return (action, entropy_estimate); both keep the reparameterized
        graph alive.  The entropy estimate is -log pi(a|s) at the sample."""
        mu, std = self._params(feat)
        if deterministic:
            action = torch.tanh(mu)
            ent = self._log_prob_from_u(mu, mu, std).neg()
            return action, ent
        eps = torch.empty_like(mu).normal_(generator=rng)
        u = mu + std * eps
        action = torch.tanh(u)
        ent = self._log_prob_from_u(u, mu, std).neg()
        return action, ent

    @staticmethod
    def _log_prob_from_u(u: Tensor, mu: Tensor, std: Tensor) -> Tensor:
        base = -0.5 * (((u - mu) / std) ** 2 + 2 * std.log()
                       + math.log(2 * math.pi))
        # log|d tanh(u)/du| = log(1 - tanh(u)^2), in the numerically stable
        # form 2*(log 2 - u - softplus(-2u))
        squash = 2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))
        return (base - squash).sum(-1)


class Critic(nn.Module):
    def __init__(self, feat_dim: int, cfg: BehaviorConfig):
        super().__init__()
        dims = [feat_dim] + [cfg.head_width] * cfg.head_layers
        self.hidden = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(cfg.head_layers))
        self.out = nn.Linear(cfg.head_width, 1)

    def forward(self, feat: Tensor) -> Tensor:
        x = feat
        for layer in self.hidden:
            x = F.elu(layer(x))
        return self.out(x).squeeze(-1)


@dataclass
class ImaginedTrajectory:
    """H-step latent rollout.  ``rewards[i]`` is predicted at states[i+1];
    ``values`` come from the slow target critic; ``returns`` are filled by
    :func:`lambda_returns` once rewards and values exist."""

    states: list[LatentState]      # length H+1
    features: Tensor               # (H+1, B, feat)
    actions: Tensor                # (H, B, A)
    rewards: Tensor                # (H, B)
    values: Tensor                 # (H+1, B)
    entropies: Tensor              # (H, B)
    returns: Tensor | None = None

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]


def imagine(model: WorldModel, actor: Actor, value_fn: Critic,
            start: LatentState, cfg: BehaviorConfig,
            rng: torch.Generator | None, horizon: int | None = None,
            deterministic: bool = False,
            latent_mode: str = "sample") -> ImaginedTrajectory:
    """Roll the action-conditioned prior forward under the actor.

    ``start`` is detached from the representation-learning graph; gradients
    flow through the imagined dynamics for the actor's pathwise objective.
    """
    h = cfg.horizon if horizon is None else horizon
    if h < 1:
        raise ValueError("imagination horizon must be >= 1")
    state = start.detached()
    states = [state]
    feats = [state.feature()]
    actions, entropies = [], []
    for _ in range(h):
        action, ent = actor.sample(feats[-1], rng, deterministic=deterministic)
        _, _, state = model.ac.step(state, action, None, rng, prior_only=True,
                                    latent_mode=latent_mode)
        states.append(state)
        feats.append(state.feature())
        actions.append(action)
        entropies.append(ent)
    features = torch.stack(feats)                       # (H+1, B, F)
    rewards = model.reward_behavioral(features[1:].flatten(0, 1))
    rewards = rewards.view(h, -1)
    values = value_fn(features.flatten(0, 1)).view(h + 1, -1)
    traj = ImaginedTrajectory(states=states, features=features,
                              actions=torch.stack(actions),
                              rewards=rewards, values=values,
                              entropies=torch.stack(entropies))
    traj.returns = lambda_returns(traj.rewards, traj.values,
                                  cfg.gamma, cfg.lambda_ret)
    return traj


def lambda_returns(rewards: Tensor, values: Tensor, gamma: float,
                   lambda_ret: float) -> Tensor:
    """Backward recursion for the lambda-target.

    For the last step V = r + gamma * v_next; earlier steps mix the
    one-step bootstrap and the recursive target:
    V_i = r_i + gamma * ((1 - lambda) * v_{i+1} + lambda * V_{i+1}).
    Shapes: rewards (H, ...), values (H+1, ...) -> returns (H, ...).
    """
    h = rewards.shape[0]
    if values.shape[0] != h + 1:
        raise ValueError(f"values must have H+1={h + 1} rows, got {values.shape[0]}")
    out = [None] * h
    nxt = rewards[h - 1] + gamma * values[h]
    out[h - 1] = nxt
    for i in range(h - 2, -1, -1):
        nxt = rewards[i] + gamma * ((1.0 - lambda_ret) * values[i + 1]
                                    + lambda_ret * nxt)
        out[i] = nxt
    return torch.stack(out)


def critic_loss(traj: ImaginedTrajectory, critic: Critic) -> Tensor:
    """0.5 * (v(s) - sg(V_lambda))^2 summed over the horizon, batch-mean.

    The online critic is evaluated on detached features so no gradient
    reaches the world model or actor; targets are stop-gradients of the
    returns built from the slow target critic."""
    if traj.returns is None:
        raise ValueError("trajectory returns not populated")
    pred = critic(traj.features[:-1].detach().flatten(0, 1))
    pred = pred.view(traj.horizon, -1)
    target = traj.returns.detach()
    return (0.5 * (pred - target) ** 2).sum(0).mean()


def actor_loss(traj: ImaginedTrajectory, cfg: BehaviorConfig) -> Tensor:
    """-(V_lambda + eta * entropy) summed over the horizon, batch-mean;
    gradients reach the actor through the imagined dynamics (pathwise)."""
    if traj.returns is None:
        raise ValueError("trajectory returns not populated")
    term = -traj.returns - cfg.entropy_eta * traj.entropies
    return term.sum(0).mean()


class IntrinsicMemory:
    """Novelty bonus: project a latent with a frozen random matrix and score
    it by the mean distance to its k nearest stored neighbors.

    The projection is drawn once from the seeded stream and never updated;
    the bank is a ring buffer.  This concrete recipe (k=12, 32-d projection,
    insert-after-query) is one reasonable reading of "random projection and
    nearest neighbors" and is isolated here so it can be swapped.
    """

    def __init__(self, feat_dim: int, cfg: IntrinsicConfig, seed: int):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(
            0.0, 1.0 / math.sqrt(cfg.proj_dim),
            size=(feat_dim, cfg.proj_dim)).astype(np.float64)
        self.bank = np.zeros((cfg.capacity, cfg.proj_dim), dtype=np.float64)
        self.size = 0
        self.ptr = 0

    def bonus(self, latent: np.ndarray) -> float:
        """Score the latent against the bank, then insert it."""
        p = np.asarray(latent, dtype=np.float64) @ self.projection
        if self.size == 0:
            r = 0.0
        else:
            d = np.linalg.norm(self.bank[:self.size] - p, axis=1)
            k = min(self.cfg.k, self.size)
            r = float(np.sort(d)[:k].mean())
        self.bank[self.ptr] = p
        self.ptr = (self.ptr + 1) % self.cfg.capacity
        self.size = min(self.size + 1, self.cfg.capacity)
        return r

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"bank": self.bank[:self.size].copy(),
                "ptr": np.array([self.ptr], dtype=np.int64),
                "projection": self.projection.copy()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        bank = arrays["bank"]
        self.size = bank.shape[0]
        self.bank[:self.size] = bank
        self.ptr = int(arrays["ptr"][0])
        self.projection = arrays["projection"].copy()
