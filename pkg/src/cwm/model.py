"""The assembled world model and its parameter-group partition.

Groups mirror the training setup:

* theta: action-free dynamics + image encoder + context encoder + decoder
  (everything transferred from video pre-training),
* phi: action-conditioned dynamics + behavioral reward head,
* varphi: representative reward head,

with the actor (psi) and critic (xi) living in :mod:`cwm.behavior`.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from cwm.config import ModelConfig, VisionConfig
from cwm.core.rssm import ActionConditionedRSSM, ActionFreeRSSM
from cwm.vision import ContextDecoder, ContextFeatures, ResidualEncoder


class DenseHead(nn.Module):
    """ELU MLP regression head (reward predictors use width 400, 4 layers)."""

    def __init__(self, in_dim: int, width: int, layers: int, out_dim: int = 1):
        super().__init__()
        dims = [in_dim] + [width] * layers
        self.hidden = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(layers))
        self.out = nn.Linear(width, out_dim)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.hidden:
            x = F.elu(layer(x))
        y = self.out(x)
        return y.squeeze(-1) if y.shape[-1] == 1 else y


class WorldModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vis: VisionConfig,
                 dual_reward: bool = True):
        super().__init__()
        cfg.validate()
        vis.validate()
        if vis.embed_dim != cfg.embed_dim:
            raise ValueError(f"encoder produces {vis.embed_dim}-wide embeddings "
                             f"but model expects {cfg.embed_dim}")
        self.cfg = cfg
        self.vis = vis
        self.encoder = ResidualEncoder(vis)
        self.context_encoder = (ResidualEncoder(vis)
                                if vis.conditioning != "none" else None)
        self.decoder = ContextDecoder(cfg.feat_dim, vis)
        self.af = ActionFreeRSSM(cfg)
        self.ac = ActionConditionedRSSM(cfg)
        self.reward_behavioral = DenseHead(cfg.feat_dim, cfg.head_width,
                                           cfg.head_layers)
        self.reward_representative = (DenseHead(cfg.feat_dim, cfg.head_width,
                                                cfg.head_layers)
                                      if dual_reward else None)

    @property
    def dual_reward(self) -> bool:
        return self.reward_representative is not None

    @property
    def is_vanilla(self) -> bool:
        return self.context_encoder is None

    def encode(self, obs: Tensor) -> Tensor:
        """Embed (B, T, 3, S, S) or (B, 3, S, S) observations."""
        if obs.dim() == 5:
            b, t = obs.shape[:2]
            return self.encoder(obs.flatten(0, 1)).view(b, t, -1)
        return self.encoder(obs)

    def context_features(self, frame: Tensor) -> ContextFeatures | None:
        if self.context_encoder is None:
            return None
        return self.context_encoder.context_features(frame)

    def decode(self, feat: Tensor, ctx: ContextFeatures | None,
               rng: torch.Generator | None) -> Tensor:
        return self.decoder(feat, ctx, rng)

    def param_groups(self) -> dict[str, dict[str, nn.Parameter]]:
        """Disjoint named parameter groups covering every model parameter."""
        groups: dict[str, dict[str, nn.Parameter]] = {
            "theta": {}, "phi": {}, "varphi": {}}
        for name, p in self.named_parameters():
            if name.startswith(("encoder.", "context_encoder.", "decoder.", "af.")):
                groups["theta"][name] = p
            elif name.startswith(("ac.", "reward_behavioral.")):
                groups["phi"][name] = p
            elif name.startswith("reward_representative."):
                groups["varphi"][name] = p
            else:  # pragma: no cover - new submodules must be assigned a group
                raise AssertionError(f"parameter {name} not assigned to a group")
        return groups

    def group_parameters(self, *names: str) -> list[nn.Parameter]:
        groups = self.param_groups()
        out: list[nn.Parameter] = []
        for n in names:
            out.extend(groups[n].values())
        return out
