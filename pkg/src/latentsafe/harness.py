"""Training runs with JSONL logs and checkpoints, evaluation episodes and speed sweeps."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import Agent, TrainingDivergence, run_episode, seed_buffer, train_epoch
from .config import RunConfig, config_digest, default_config_text, make_env
from .core import ReplayBuffer, derive_rng
from .metrics import (
    EpisodeLog,
    build_report,
    collision_rate,
    episode_log_from_record,
    infraction_score,
    safety_score,
)

log = logging.getLogger(__name__)

__all__ = ["TrainResult", "train_run", "evaluate", "SweepRow", "sweep", "write_sweep_csv", "write_curve_csv"]


@dataclass
class TrainResult:
    agent: Agent
    buffer: ReplayBuffer
    stats: list
    out_dir: Path | None


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=True)


def train_run(cfg: RunConfig, out_dir=None, epochs: int | None = None, progress=None) -> TrainResult:
    """Seed the buffer, run ``epochs`` epochs, append stats to ``train.jsonl``.

    Checkpoints land in ``checkpoints/epoch_NNNN`` every ``checkpoint_every``
    epochs and the final agent in ``final``.
    """
    t = cfg.train
    epochs = t.epochs if epochs is None else epochs
    env = make_env(cfg)
    agent = Agent(env.obs_dim, env.act_dim, t)
    buffer = seed_buffer(ReplayBuffer(t.buffer_capacity), env, t.seed_episodes, t.seed)
    out = Path(out_dir) if out_dir is not None else None
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(default_config_text(cfg))
        fh = open(out / "train.jsonl", "w")
    stats = []
    try:
        for epoch in range(epochs):
            record = train_epoch(agent, buffer, env, t, epoch)
            stats.append(record)
            if fh is not None:
                fh.write(_dump(record) + "\n")
                fh.flush()
                every = cfg.checkpoint_every
                if every and (epoch + 1) % every == 0:
                    agent.save(out / "checkpoints" / f"epoch_{epoch + 1:04d}")
            if progress is not None:
                progress(record)
    except TrainingDivergence:
        if fh is not None:
            fh.write(_dump({"epoch": len(stats), "diverged": True}) + "\n")
        raise
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        agent.save(out / "final")
    return TrainResult(agent, buffer, stats, out)


def evaluate(agent: Agent, cfg: RunConfig, episodes: int, seed: int = 0, scenario: str | None = None,
             speed: float | None = None, deterministic: bool = True, seed_key: str | None = None) -> list[EpisodeLog]:
    """Roll ``episodes`` evaluation episodes without exploration noise.

    Episode seeds derive from ``(seed, seed_key, i)``; ``seed_key`` defaults to
    the scenario name, and sweeps pass the family so every speed and every
    agent sees the same episodes.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = make_env(cfg, scenario, speed)
    dt = getattr(getattr(env, "config", None), "dt", 1.0)
    route = scenario or (cfg.scenario if cfg.env == "nav" else "hazard")
    key = seed_key or route
    logs = []
    for i in range(episodes):
        ep_seed = int(derive_rng(seed, "eval", key, i).integers(2**31))
        rng = derive_rng(seed, "eval-act", key, i)
        rec = run_episode(agent, env, ep_seed, rng, explore_noise=0.0, deterministic=deterministic)
        logs.append(episode_log_from_record(rec, route_id=route, dt=dt))
    return logs


@dataclass
class SweepRow:
    variant: str
    speed: float
    episodes: int
    fail_rate: float     # percent of episodes with any collision or infraction
    avg_time: float      # mean episode duration, simulated seconds
    safety_score: float


def summarize(variant: str, speed: float, logs: Sequence[EpisodeLog]) -> SweepRow:
    fails = np.mean([g.failed for g in logs])
    total_km = sum(g.distance_driven for g in logs)
    collisions = sum(g.collisions for g in logs)
    cr = collision_rate(collisions, total_km) if total_km > 0 else 0.0
    is_mean = float(np.mean([infraction_score(g.infractions) for g in logs]))
    return SweepRow(variant, float(speed), len(logs), 100.0 * float(fails),
                    float(np.mean([g.wall_time for g in logs])), safety_score(is_mean, cr))


def sweep(agents: dict, cfg: RunConfig, family: str = "dynamic", speeds=(1.0, 2.0, 3.0),
          episodes: int = 100, seed: int = 0) -> list[SweepRow]:
    """Evaluate each named agent at each obstacle speed on the same seeds."""
    rows = []
    for name in sorted(agents):
        for speed in speeds:
            scenario = f"{family}-{int(speed)}" if family == "dynamic" else family
            logs = evaluate(agents[name], cfg, episodes, seed, scenario=scenario, speed=float(speed), seed_key=family)
            rows.append(summarize(name, speed, logs))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "speed", "episodes", "fail_rate", "avg_time", "safety_score"])
        for r in rows:
            w.writerow([r.variant, repr(r.speed), r.episodes, repr(r.fail_rate), repr(r.avg_time),
                        repr(r.safety_score)])


def write_curve_csv(stats: Sequence[dict], path) -> None:
    """Plot-ready per-epoch reward/cost curve."""
    cols = ["epoch", "return", "cost", "violations", "kappa", "beta", "E_gamma"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in stats:
            if s.get("diverged"):
                continue
            w.writerow([s["epoch"]] + [repr(float(s[c])) for c in cols[1:]])


def digest(cfg: RunConfig) -> str:
    return config_digest(cfg)
