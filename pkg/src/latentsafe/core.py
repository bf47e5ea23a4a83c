"""Shared data types, replay storage, return arithmetic and seeded randomness."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TransitionStep",
    "Episode",
    "ReplayBuffer",
    "RiskBudget",
    "SequenceBatch",
    "discounted_return",
    "push_episode",
    "sample_sequence_batch",
    "derive_rng",
]


def derive_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """Independent generator for a named stream under a global seed.

    Streams are keyed by name, so adding or reordering consumers elsewhere
    never shifts the numbers a given consumer sees.
    """
    key = [zlib.crc32(s.encode()) if isinstance(s, str) else int(s) for s in stream]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


@dataclass(frozen=True)
class TransitionStep:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    cost: float
    done: bool = False
    violation: bool = False

    def __post_init__(self):
        obs = np.asarray(self.observation, dtype=np.float64).reshape(-1)
        act = np.asarray(self.action, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "observation", obs)
        object.__setattr__(self, "action", act)
        if not self.cost >= 0.0:
            raise ValueError(f"cost must be >= 0, got {self.cost}")
        if np.any(np.abs(act) > 1.0):
            raise ValueError("action components must lie in [-1, 1]")
        if self.violation and not self.cost > 0.0:
            raise ValueError("a violating step must carry positive cost")


@dataclass
class Episode:
    steps: list[TransitionStep]
    seed: int = 0
    route_length_m: float = 0.0
    completed_fraction: float = 0.0
    _arrays: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.steps = list(self.steps)
        for i, step in enumerate(self.steps):
            if step.done and i != len(self.steps) - 1:
                raise ValueError(f"step {i} is done but not last")
        if not 0.0 <= self.completed_fraction <= 1.0:
            raise ValueError("completed_fraction must lie in [0, 1]")
        if self.route_length_m < 0:
            raise ValueError("route_length_m must be >= 0")

    def __len__(self) -> int:
        return len(self.steps)

    def arrays(self) -> dict[str, np.ndarray]:
        if self._arrays is None:
            self._arrays = {
                "obs": np.stack([s.observation for s in self.steps]),
                "act": np.stack([s.action for s in self.steps]),
                "rew": np.array([s.reward for s in self.steps]),
                "cost": np.array([s.cost for s in self.steps]),
                "done": np.array([s.done for s in self.steps], dtype=bool),
                "violation": np.array([s.violation for s in self.steps], dtype=bool),
            }
        return self._arrays

    def total_reward(self) -> float:
        return float(sum(s.reward for s in self.steps))

    def discounted_cost(self, gamma: float) -> float:
        return discounted_return([s.cost for s in self.steps], gamma)

    def violations(self) -> int:
        return int(sum(s.violation for s in self.steps))


@dataclass
class ReplayBuffer:
    """Episode-granular FIFO store bounded by a total step count."""

    capacity: int
    episodes: list[Episode] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    @property
    def n_steps(self) -> int:
        return sum(len(e) for e in self.episodes)

    def snapshot(self) -> tuple[Episode, ...]:
        return tuple(self.episodes)

    def __len__(self) -> int:
        return len(self.episodes)


@dataclass(frozen=True)
class RiskBudget:
    d: float = 0.5
    alpha: float = 0.5
    barrier_decay: float = 0.1
    barrier_degree_m: int = 1
    entropy_floor: float = -2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.d >= 0.0:
            raise ValueError(f"d must be >= 0, got {self.d}")
        if not 0.0 < self.barrier_decay < 1.0:
            raise ValueError(f"barrier_decay must lie in (0, 1), got {self.barrier_decay}")
        if self.barrier_degree_m < 1:
            raise ValueError("barrier_degree_m must be >= 1")


def discounted_return(values: Sequence[float], gamma: float) -> float:
    """``sum_t gamma**t * values[t]``; zero for an empty sequence."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    for v in reversed(list(values)):
        total = float(v) + gamma * total
    return total


def push_episode(buffer: ReplayBuffer, ep: Episode) -> ReplayBuffer:
    if len(ep) == 0:
        raise ValueError("cannot store an empty episode")
    if len(ep) > buffer.capacity:
        raise ValueError(f"episode of {len(ep)} steps exceeds buffer capacity {buffer.capacity}")
    buffer.episodes.append(ep)
    total = buffer.n_steps
    while total > buffer.capacity:
        total -= len(buffer.episodes.pop(0))
    return buffer


@dataclass
class SequenceBatch:
    obs: np.ndarray        # (B, L, obs_dim)
    act: np.ndarray        # (B, L, act_dim)
    rew: np.ndarray        # (B, L)
    cost: np.ndarray       # (B, L)
    done: np.ndarray       # (B, L)
    violation: np.ndarray  # (B, L)
    episode_index: np.ndarray
    start: np.ndarray

    @property
    def batch(self) -> int:
        return self.obs.shape[0]

    @property
    def length(self) -> int:
        return self.obs.shape[1]


def sample_sequence_batch(buffer: ReplayBuffer, batch: int, length: int, rng_seed) -> SequenceBatch:
    """Uniformly sample ``batch`` contiguous windows of ``length`` steps.

    Every valid window in the buffer is equally likely; windows never cross
    episode boundaries.  ``rng_seed`` may be an int or a Generator.
    """
    if length < 1 or batch < 1:
        raise ValueError("batch and length must be >= 1")
    eps = buffer.episodes
    n_windows = np.array([max(0, len(e) - length + 1) for e in eps], dtype=np.int64)
    if n_windows.sum() == 0:
        longest = max((len(e) for e in eps), default=0)
        raise ValueError(
            f"no stored episode has {length} steps: longest is {longest} "
            f"(deficit {length - longest})"
        )
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    flat = rng.integers(0, int(n_windows.sum()), size=batch)
    bounds = np.cumsum(n_windows)
    ep_idx = np.searchsorted(bounds, flat, side="right")
    starts = flat - np.concatenate([[0], bounds[:-1]])[ep_idx]
    cols = {k: [] for k in ("obs", "act", "rew", "cost", "done", "violation")}
    for e, s in zip(ep_idx, starts):
        arr = eps[e].arrays()
        for k in cols:
            cols[k].append(arr[k][s:s + length])
    return SequenceBatch(**{k: np.stack(v) for k, v in cols.items()},
                         episode_index=ep_idx, start=starts)
