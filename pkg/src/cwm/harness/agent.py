"""The trainable agent: world model, actor, critics, optimizers, rng streams.

Optimizers are Adam with the configured learning rates and global-norm
gradient clipping.  The slow target critic is a hard copy refreshed every
``target_update_interval`` behavior updates.  Checkpoints are assembled
from named parameter groups so that a pre-training checkpoint can restore
theta alone into a fresh fine-tuning agent.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from cwm.behavior import (
    Actor,
    Critic,
    IntrinsicMemory,
    actor_loss,
    critic_loss,
    imagine,
)
from cwm.config import RunConfig
from cwm.core.rssm import LatentState
from cwm.harness.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from cwm.model import WorldModel
from cwm.objectives import LossAux, LossReport, finetune_loss, pretrain_loss
from cwm.vision import preprocess


class Agent:
    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.model = WorldModel(cfg.model_config(), cfg.vision_config(),
                                dual_reward=cfg.dual_reward)
        feat = cfg.model_config().feat_dim
        self.actor = Actor(feat, cfg.action_dim, cfg.behavior)
        self.critic = Critic(feat, cfg.behavior)
        self.critic_target = copy.deepcopy(self.critic)
        for p in self.critic_target.parameters():
            p.requires_grad_(False)

        self.wm_opt = torch.optim.Adam(list(self.model.parameters()),
                                       lr=cfg.wm_lr)
        self.actor_opt = torch.optim.Adam(list(self.actor.parameters()),
                                          lr=cfg.behavior.actor_lr)
        self.critic_opt = torch.optim.Adam(list(self.critic.parameters()),
                                           lr=cfg.behavior.critic_lr)
        self.intrinsic = IntrinsicMemory(feat, cfg.intrinsic, seed=cfg.seed + 2)
        self.model_rng = torch.Generator().manual_seed(cfg.seed + 1)
        self.counters = {"pretrain_iters": 0, "env_steps": 0,
                         "wm_updates": 0, "behavior_updates": 0,
                         "episodes": 0}

    # ------------------------------------------------------------------ #
    # updates

    def pretrain_update(self, obs: Tensor) -> LossReport:
        self.model.train()
        weights = self.cfg.pretrain_weights()
        self.wm_opt.zero_grad(set_to_none=True)
        report, _ = pretrain_loss(self.model, obs, weights, self.model_rng)
        report.total.backward()
        torch.nn.utils.clip_grad_norm_(self.model.parameters(),
                                       self.cfg.grad_clip)
        self.wm_opt.step()
        self.counters["pretrain_iters"] += 1
        return report

    def finetune_update(self, batch) -> tuple[LossReport, LossAux]:
        self.model.train()
        weights = self.cfg.finetune_weights()
        self.wm_opt.zero_grad(set_to_none=True)
        report, aux = finetune_loss(self.model, batch, weights, self.model_rng)
        report.total.backward()
        torch.nn.utils.clip_grad_norm_(self.model.parameters(),
                                       self.cfg.grad_clip)
        self.wm_opt.step()
        self.counters["wm_updates"] += 1
        return report, aux

    def behavior_update(self, start: LatentState) -> dict[str, float]:
        """One actor-critic update from detached posterior start states."""
        bc = self.cfg.behavior
        if (self.counters["behavior_updates"] % bc.target_update_interval == 0
                and self.counters["behavior_updates"] > 0):
            self.critic_target.load_state_dict(self.critic.state_dict())
        traj = imagine(self.model, self.actor, self.critic_target, start,
                       bc, self.model_rng)
        a_loss = actor_loss(traj, bc)
        self.actor_opt.zero_grad(set_to_none=True)
        a_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.actor.parameters(),
                                       self.cfg.grad_clip)
        self.actor_opt.step()
        # actor backprop through dynamics leaves gradients on model params;
        # they are cleared by the next wm update's zero_grad
        c_loss = critic_loss(traj, self.critic)
        self.critic_opt.zero_grad(set_to_none=True)
        c_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.critic.parameters(),
                                       self.cfg.grad_clip)
        self.critic_opt.step()
        self.counters["behavior_updates"] += 1
        return {"actor_loss": float(a_loss.detach()),
                "critic_loss": float(c_loss.detach()),
                "imagined_return": float(traj.returns.mean().detach())}

    # ------------------------------------------------------------------ #
    # acting

    def initial_policy_state(self) -> tuple[LatentState, LatentState, Tensor]:
        z = self.model.af.initial(1)
        s = self.model.ac.initial(1)
        a = torch.zeros(1, self.cfg.action_dim)
        return z, s, a

    @torch.no_grad()
    def act(self, obs_u8: np.ndarray, state, deterministic: bool = False,
            rng: torch.Generator | None = None,
            action_override: np.ndarray | None = None):
        """One acting step; returns (action ndarray, new state, af feature).

        ``action_override`` replaces the actor's choice (random prefill)
        while still advancing the posterior states.
        """
        self.model.eval()
        self.actor.eval()
        rng = rng if rng is not None else self.model_rng
        z_state, s_state, prev_action = state
        embed = self.model.encode(preprocess(obs_u8).unsqueeze(0))
        _, _, z_state = self.model.af.step(z_state, embed, rng)
        _, _, s_state = self.model.ac.step(s_state, prev_action,
                                           z_state.stoch, rng)
        if action_override is not None:
            action = torch.as_tensor(action_override,
                                     dtype=torch.float32).unsqueeze(0)
        else:
            action, _ = self.actor.sample(s_state.feature(), rng,
                                          deterministic=deterministic)
        self.model.train()
        self.actor.train()
        return (action[0].numpy().astype(np.float32),
                (z_state, s_state, action),
                z_state.feature()[0].numpy())

    # ------------------------------------------------------------------ #
    # checkpointing

    def _optim_param_names(self) -> dict[str, list[str]]:
        return {
            "wm": [n for n, _ in self.model.named_parameters()],
            "actor": [n for n, _ in self.actor.named_parameters()],
            "critic": [n for n, _ in self.critic.named_parameters()],
        }

    def checkpoint_arrays(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays: dict[str, np.ndarray] = {}
        groups = self.model.param_groups()
        for gname, params in groups.items():
            for pname, p in params.items():
                arrays[f"param/{gname}/{pname}"] = p.detach().numpy().copy()
        for pname, p in self.actor.named_parameters():
            arrays[f"param/psi/{pname}"] = p.detach().numpy().copy()
        for pname, p in self.critic.named_parameters():
            arrays[f"param/xi/{pname}"] = p.detach().numpy().copy()
        for pname, p in self.critic_target.named_parameters():
            arrays[f"param/xi_target/{pname}"] = p.detach().numpy().copy()
        # buffers (BatchNorm running stats) belong with theta/phi transfer
        for bname, b in self.model.named_buffers():
            arrays[f"buffer/model/{bname}"] = b.detach().numpy().copy()

        opts = {"wm": self.wm_opt, "actor": self.actor_opt,
                "critic": self.critic_opt}
        for oname, opt in opts.items():
            names = self._optim_param_names()[oname]
            for idx, st in opt.state_dict()["state"].items():
                for key, val in st.items():
                    arr = (val.detach().numpy().copy()
                           if torch.is_tensor(val)
                           else np.asarray(val, dtype=np.float64))
                    arrays[f"optim/{oname}/{names[idx]}/{key}"] = arr
        arrays["rng/torch_model"] = self.model_rng.get_state().numpy().copy()
        for key, val in self.intrinsic.state_arrays().items():
            arrays[f"state/intrinsic/{key}"] = val
        meta = {
            "kind": "agent",
            "preset": self.cfg.preset,
            "conditioning": self.cfg.conditioning,
            "dual_reward": self.cfg.dual_reward,
            "action_dim": self.cfg.action_dim,
            "counters": dict(self.counters),
        }
        return arrays, meta

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        arrays, meta = self.checkpoint_arrays()
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, arrays, meta)

    def load(self, path: str | Path, theta_only: bool = False) -> dict:
        arrays, meta = load_checkpoint(path)
        if meta.get("preset") != self.cfg.preset:
            raise CheckpointError(
                f"checkpoint preset {meta.get('preset')!r} does not match "
                f"run preset {self.cfg.preset!r}")
        if meta.get("conditioning") != self.cfg.conditioning:
            raise CheckpointError(
                f"checkpoint conditioning {meta.get('conditioning')!r} does "
                f"not match run conditioning {self.cfg.conditioning!r}")

        groups = self.model.param_groups()
        wanted = ("theta",) if theta_only else ("theta", "phi", "varphi")
        with torch.no_grad():
            for gname in wanted:
                for pname, p in groups[gname].items():
                    key = f"param/{gname}/{pname}"
                    if key not in arrays:
                        raise CheckpointError(f"checkpoint missing {key}")
                    p.copy_(torch.from_numpy(arrays[key]))
            buffers = dict(self.model.named_buffers())
            for key, arr in arrays.items():
                if key.startswith("buffer/model/"):
                    bname = key[len("buffer/model/"):]
                    if theta_only and not bname.startswith(
                            ("encoder.", "context_encoder.", "decoder.", "af.")):
                        continue
                    buffers[bname].copy_(torch.from_numpy(arr))
            if not theta_only:
                for pname, p in self.actor.named_parameters():
                    p.copy_(torch.from_numpy(arrays[f"param/psi/{pname}"]))
                for pname, p in self.critic.named_parameters():
                    p.copy_(torch.from_numpy(arrays[f"param/xi/{pname}"]))
                for pname, p in self.critic_target.named_parameters():
                    p.copy_(torch.from_numpy(arrays[f"param/xi_target/{pname}"]))
        if not theta_only:
            self._load_optimizers(arrays)
            self.model_rng.set_state(
                torch.from_numpy(arrays["rng/torch_model"]))
            self.intrinsic.load_state_arrays({
                k.split("/", 2)[2]: v for k, v in arrays.items()
                if k.startswith("state/intrinsic/")})
            self.counters.update(meta.get("counters", {}))
        return meta

    def _load_optimizers(self, arrays: dict[str, np.ndarray]) -> None:
        opts = {"wm": self.wm_opt, "actor": self.actor_opt,
                "critic": self.critic_opt}
        for oname, opt in opts.items():
            names = self._optim_param_names()[oname]
            state_dict = opt.state_dict()
            state: dict[int, dict] = {}
            for idx, pname in enumerate(names):
                entry = {}
                for key in ("step", "exp_avg", "exp_avg_sq"):
                    akey = f"optim/{oname}/{pname}/{key}"
                    if akey in arrays:
                        arr = torch.from_numpy(arrays[akey].copy())
                        entry[key] = arr if key != "step" else arr.to(torch.float32)
                if entry:
                    state[idx] = entry
            state_dict["state"] = state
            opt.load_state_dict(state_dict)
