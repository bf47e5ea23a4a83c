"""Continuous-action hazard gridworld used for end-to-end constrained training.

A point agent moves on a 6 x 6 grid of unit cells.  The reward peaks at a
goal that sits just inside a block of hazard cells, so an agent that ignores
cost camps inside the hazard while a cost-aware agent stops at its edge and
gives up only a few percent of reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nav import StepInfo

__all__ = ["HazardGridConfig", "HazardGridWorld"]


@dataclass(frozen=True)
class HazardGridConfig:
    size: float = 6.0
    start: tuple[float, float] = (1.0, 3.0)
    start_jitter: float = 0.3
    goal: tuple[float, float] = (4.25, 3.0)
    hazard_cells: tuple[tuple[int, int], ...] = ((4, 2), (4, 3), (5, 2), (5, 3))
    step_size: float = 0.5
    reward_scale: float = 8.0
    time_limit: int = 40
    obs_scale: float = 3.0


class HazardGridWorld:
    obs_dim = 2
    act_dim = 2

    def __init__(self, config: HazardGridConfig | None = None):
        self.config = config or HazardGridConfig()
        self.pos = None
        self.t = 0

    @property
    def time_limit(self) -> int:
        return self.config.time_limit

    route_length = 0.0

    def in_hazard(self, p) -> bool:
        cell = (int(np.floor(p[0])), int(np.floor(p[1])))
        return cell in self.config.hazard_cells

    def _obs(self) -> np.ndarray:
        return (self.pos - self.config.size / 2.0) * self.config.obs_scale

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.pos = np.asarray(cfg.start, dtype=np.float64) + rng.uniform(-cfg.start_jitter, cfg.start_jitter, size=2)
        self.t = 0
        return self._obs()

    def step(self, action):
        if self.pos is None:
            raise RuntimeError("step called before reset")
        cfg = self.config
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        self.pos = np.clip(self.pos + cfg.step_size * a, 0.0, cfg.size - 1e-9)
        self.t += 1
        dist = float(np.linalg.norm(self.pos - np.asarray(cfg.goal)))
        reward = 1.0 - dist / cfg.reward_scale
        violation = self.in_hazard(self.pos)
        cost = 1.0 if violation else 0.0
        done = self.t >= cfg.time_limit
        info = StepInfo(infraction="Red" if violation else None, timeout=done,
                        distance_m=cfg.step_size * float(np.linalg.norm(a)))
        return self._obs(), reward, cost, violation, done, info

