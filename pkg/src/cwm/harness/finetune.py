"""Action-conditioned fine-tuning loop: collect, train, evaluate."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from cwm.config import RunConfig
from cwm.core.rssm import LatentState
from cwm.data.env import ReachEnvConfig, SpriteReachEnv
from cwm.data.replay import EpisodeRecord, ReplayBuffer, sample_segments, save_episode
from cwm.harness.agent import Agent
from cwm.harness.config_io import write_manifest
from cwm.harness.metrics import MetricsWriter, iqm_ci


def env_config(cfg: RunConfig) -> ReachEnvConfig:
    return ReachEnvConfig(side=cfg.vision_config().image_side,
                          episode_len=cfg.episode_len,
                          action_dim=cfg.action_dim)


class _Collector:
    """Accumulates one episode's transitions."""

    def __init__(self, first_obs: np.ndarray):
        self.obs = [first_obs]
        self.actions: list[np.ndarray] = []
        self.rewards: list[float] = []
        self.intrinsic: list[float] = []

    def step(self, action, obs, reward, r_int) -> None:
        self.actions.append(np.asarray(action, dtype=np.float32))
        self.obs.append(obs)
        self.rewards.append(float(reward))
        self.intrinsic.append(float(r_int))

    def record(self) -> EpisodeRecord:
        return EpisodeRecord(
            observations=np.stack(self.obs),
            actions=np.stack(self.actions),
            rewards=np.asarray(self.rewards, dtype=np.float32),
            intrinsic=np.asarray(self.intrinsic, dtype=np.float32))


def evaluate_policy(agent: Agent, cfg: RunConfig, episodes: int,
                    seed: int) -> list[dict]:
    """Deterministic-actor rollouts in a fresh environment instance."""
    env = SpriteReachEnv(env_config(cfg), seed=seed)
    rng = torch.Generator().manual_seed(seed)
    results = []
    for _ in range(episodes):
        obs = env.reset()
        state = agent.initial_policy_state()
        total, success = 0.0, False
        done = False
        while not done:
            action, state, _ = agent.act(obs, state, deterministic=True,
                                         rng=rng)
            obs, reward, done, info = env.step(action)
            total += reward
            success = success or info["success"]
        results.append({"return": total, "success": bool(success)})
    return results


def random_policy_returns(cfg: RunConfig, episodes: int, seed: int,
                          ) -> list[float]:
    """Uniform-random baseline on the same task."""
    env = SpriteReachEnv(env_config(cfg), seed=seed)
    rng = np.random.default_rng(seed + 1)
    out = []
    for _ in range(episodes):
        env.reset()
        total, done = 0.0, False
        while not done:
            _, reward, done, _ = env.step(
                rng.uniform(-1.0, 1.0, size=cfg.action_dim))
            total += reward
        out.append(total)
    return out


def run_finetune(cfg: RunConfig, pretrained: str | None = None,
                 load_theta_only: bool = True) -> Path:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes_dir = out / "episodes"
    episodes_dir.mkdir(exist_ok=True)
    write_manifest(cfg, out / "manifest.cfg")

    agent = Agent(cfg)
    if pretrained is not None:
        agent.load(pretrained, theta_only=load_theta_only)
    env = SpriteReachEnv(env_config(cfg), seed=cfg.seed * 31 + 5)
    buffer = ReplayBuffer(cfg.replay_capacity)
    data_rng = np.random.default_rng(cfg.seed * 104729 + 3)
    explore_rng = np.random.default_rng(cfg.seed * 104729 + 7)

    metrics = MetricsWriter(out / "metrics.jsonl")
    ckpt_path = out / "checkpoint.ckpt"
    obs = env.reset()
    collector = _Collector(obs)
    state = agent.initial_policy_state()
    eval_count = 0

    with metrics:
        for step in range(1, cfg.env_steps + 1):
            override = (explore_rng.uniform(-1.0, 1.0, size=cfg.action_dim)
                        if step <= cfg.prefill else None)
            action, state, af_feat = agent.act(obs, state,
                                               deterministic=False,
                                               action_override=override)
            r_int = agent.intrinsic.bonus(af_feat)
            obs, reward, done, info = env.step(action)
            collector.step(action, obs, reward, r_int)
            agent.counters["env_steps"] += 1

            if done:
                ep = collector.record()
                buffer.add(ep)
                idx = agent.counters["episodes"]
                save_episode(episodes_dir / f"episode_{idx:06d}.bin", ep)
                agent.counters["episodes"] += 1
                metrics.log(step, "collect/episode_return",
                            float(ep.rewards.sum()))
                obs = env.reset()
                collector = _Collector(obs)
                state = agent.initial_policy_state()

            if step > cfg.prefill and step % cfg.train_every == 0 \
                    and buffer.total_transitions >= cfg.t_finetune:
                batch = sample_segments(buffer, cfg.batch_finetune,
                                        cfg.t_finetune, data_rng)
                report, aux = agent.finetune_update(batch)
                starts = aux.rollout.states_ac
                start = LatentState(
                    torch.cat([st.h for st in starts]).detach(),
                    torch.cat([st.stoch for st in starts]).detach())
                binfo = agent.behavior_update(start)
                if agent.counters["wm_updates"] % cfg.log_every == 0:
                    metrics.log_many(step, {
                        **{f"wm/{k}": v for k, v in report.to_floats().items()},
                        **{f"behavior/{k}": v for k, v in binfo.items()}})

            if step % cfg.eval_every == 0 or step == cfg.env_steps:
                eval_count += 1
                results = evaluate_policy(agent, cfg, cfg.eval_episodes,
                                          seed=cfg.seed * 1009 + eval_count)
                returns = [r["return"] for r in results]
                point, lo, hi = iqm_ci(returns,
                                       rng=np.random.default_rng(eval_count))
                metrics.log_many(step, {
                    "eval/return_iqm": point, "eval/return_ci_lo": lo,
                    "eval/return_ci_hi": hi,
                    "eval/success_rate": float(np.mean(
                        [r["success"] for r in results]))})
                agent.save(ckpt_path)
    final = out / "checkpoint_final.ckpt"
    agent.save(final)
    return final
