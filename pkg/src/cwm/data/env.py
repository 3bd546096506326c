"""A visual reach task over the sprite world.

The agent (square sprite) moves by its 2-d action scaled by ``max_speed``;
reward is 10 * max(0, 1 - dist/d_max) to the goal (circle sprite), so it
ranges over [0, 10] and is zero beyond ``reward_dmax`` pixels.  Episodes
are fixed length; the background texture and sprite colors are resampled
every episode while the task stays the same.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cwm.data.sprites import _MARGIN, _make_background, _SPRITE_COLORS

_AGENT_SIZE = 8
_GOAL_SIZE = 8


@dataclass(frozen=True)
class ReachEnvConfig:
    side: int = 64
    episode_len: int = 100
    max_speed: float = 2.5
    reward_dmax: float = 16.0
    success_frac: float = 0.05
    action_dim: int = 2


class SpriteReachEnv:
    def __init__(self, cfg: ReachEnvConfig = ReachEnvConfig(), seed: int = 0):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self._needs_reset = True
        self._t = 0
        self._background = None
        self._agent_color = None
        self._goal_color = None
        self._agent_pos = np.zeros(2)
        self._goal_pos = np.zeros(2)

    @property
    def action_dim(self) -> int:
        return self.cfg.action_dim

    def reset(self) -> np.ndarray:
        cfg = self.cfg
        self._background = _make_background(self.rng, cfg.side)
        idx = self.rng.permutation(len(_SPRITE_COLORS))[:2]
        self._agent_color = _SPRITE_COLORS[idx[0]]
        self._goal_color = _SPRITE_COLORS[idx[1]]
        lo, hi = _MARGIN, cfg.side - _MARGIN - _AGENT_SIZE
        self._agent_pos = self.rng.uniform(lo, hi, size=2)
        self._goal_pos = self.rng.uniform(lo, hi, size=2)
        self._t = 0
        self._needs_reset = False
        return self._render()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        if self._needs_reset:
            raise RuntimeError("step() called on a finished episode; call reset()")
        cfg = self.cfg
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        if action.shape != (cfg.action_dim,):
            raise ValueError(f"action must have shape ({cfg.action_dim},)")
        lo, hi = _MARGIN, cfg.side - _MARGIN - _AGENT_SIZE
        # action is (dx, dy): first component moves columns, second rows
        self._agent_pos = np.clip(
            self._agent_pos + action[::-1] * cfg.max_speed, lo, hi)
        dist = float(np.linalg.norm(self._agent_pos - self._goal_pos))
        reward = 10.0 * max(0.0, 1.0 - dist / cfg.reward_dmax)
        success = dist < cfg.success_frac * cfg.side
        self._t += 1
        done = self._t >= cfg.episode_len
        if done:
            self._needs_reset = True
        return self._render(), reward, done, {"success": success, "dist": dist}

    def _draw(self, frame: np.ndarray, pos: np.ndarray, size: int,
              color: np.ndarray, circle: bool) -> None:
        y, x = int(round(pos[0])), int(round(pos[1]))
        if circle:
            yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
            c = (size - 1) / 2.0
            mask = (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0) ** 2
        else:
            mask = np.ones((size, size), dtype=bool)
        region = frame[:, y:y + size, x:x + size]
        region[:, mask] = color[:, None]

    def _render(self) -> np.ndarray:
        frame = self._background.copy()
        self._draw(frame, self._goal_pos, _GOAL_SIZE, self._goal_color, True)
        self._draw(frame, self._agent_pos, _AGENT_SIZE, self._agent_color, False)
        return frame

    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_rng_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state
