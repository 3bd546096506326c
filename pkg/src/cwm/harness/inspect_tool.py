"""Parameter-count and architecture introspection (no training involved)."""

from __future__ import annotations

import torch

from cwm.behavior import Actor, Critic
from cwm.config import (
    BehaviorConfig,
    MODEL_PRESETS,
    VISION_PRESETS,
)
from cwm.model import WorldModel


def count_parameters(module: torch.nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def inspect_preset(preset: str, action_dim: int | None = None) -> dict:
    """Report per-group parameter counts and encoder stage shapes for both
    the context-conditioned and vanilla variants of a preset."""
    kwargs = {} if action_dim is None else {"action_dim": action_dim}
    mcfg = MODEL_PRESETS[preset](**kwargs)
    report: dict = {"preset": preset, "model": {
        "det_size": mcfg.det_size, "stoch_vars": mcfg.stoch_vars,
        "stoch_classes": mcfg.stoch_classes, "hidden": mcfg.hidden,
        "embed_dim": mcfg.embed_dim, "feat_dim": mcfg.feat_dim}}
    bcfg = BehaviorConfig()
    for mode, conditioning in (("contextual", "cross"), ("vanilla", "none")):
        torch.manual_seed(0)
        vcfg = VISION_PRESETS[preset](conditioning=conditioning)
        model = WorldModel(mcfg, vcfg, dual_reward=True)
        actor = Actor(mcfg.feat_dim, mcfg.action_dim, bcfg)
        critic = Critic(mcfg.feat_dim, bcfg)
        groups = {name: sum(p.numel() for p in params.values())
                  for name, params in model.param_groups().items()}
        groups["psi"] = count_parameters(actor)
        groups["xi"] = count_parameters(critic)
        with torch.no_grad():
            dummy = torch.zeros(1, 3, vcfg.image_side, vcfg.image_side)
            shapes = model.encoder.stage_output_shapes(dummy)
        report[mode] = {
            "total_parameters": int(sum(groups.values())),
            "group_parameters": {k: int(v) for k, v in groups.items()},
            "component_parameters": {
                "encoder": count_parameters(model.encoder),
                "context_encoder": (count_parameters(model.context_encoder)
                                    if model.context_encoder else 0),
                "decoder": count_parameters(model.decoder),
                "dynamics_action_free": count_parameters(model.af),
                "dynamics_action_conditioned": count_parameters(model.ac),
                "reward_behavioral": count_parameters(model.reward_behavioral),
                "reward_representative": count_parameters(
                    model.reward_representative),
                "actor": count_parameters(actor),
                "critic": count_parameters(critic),
            },
            "encoder_stage_shapes": [list(s) for s in shapes],
        }
    return report
