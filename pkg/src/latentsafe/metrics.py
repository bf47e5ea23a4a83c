"""Driving metrics: route completion, infraction score, driving score and rates."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .envs.nav import time_to_collision

__all__ = [
    "INFRACTION_PENALTIES",
    "EpisodeLog",
    "MetricsReport",
    "route_completion",
    "infraction_score",
    "driving_score",
    "collision_occurrences",
    "infractions_per_km",
    "time_to_collision",
    "collision_rate",
    "safety_score",
    "build_report",
    "episode_log_from_record",
    "write_metrics_csv",
    "write_routes_csv",
    "read_logs_jsonl",
    "write_logs_jsonl",
]

INFRACTION_PENALTIES = {"Ped": 0.50, "Veh": 0.60, "Stat": 0.65, "Red": 0.70}
OFF_ROUTE_PENALTY_PER_M = 0.01


@dataclass
class EpisodeLog:
    route_completion_fraction: float
    off_route_distance: float = 0.0
    infractions: dict = field(default_factory=dict)
    collisions: int = 0
    distance_driven: float = 0.0      # km
    min_ttc: float | None = None      # s
    wall_time: float = 0.0            # s, simulated
    seed: int = 0
    route_id: str = "0"

    def __post_init__(self):
        if not 0.0 <= self.route_completion_fraction <= 1.0:
            raise ValueError("route_completion_fraction must lie in [0, 1]")
        if self.off_route_distance < 0 or self.distance_driven < 0 or self.collisions < 0:
            raise ValueError("distances and counts must be >= 0")
        unknown = set(self.infractions) - set(INFRACTION_PENALTIES)
        if unknown:
            raise ValueError(f"unknown infraction types {sorted(unknown)}")
        if any(v < 0 for v in self.infractions.values()):
            raise ValueError("infraction counts must be >= 0")

    @property
    def n_infractions(self) -> int:
        return int(sum(self.infractions.values()))

    @property
    def failed(self) -> bool:
        return self.collisions > 0 or self.n_infractions > 0

    def to_dict(self) -> dict:
        return asdict(self)


def _route_fraction(log: EpisodeLog, penalty_per_m: float) -> float:
    return max(log.route_completion_fraction - penalty_per_m * log.off_route_distance, 0.0)


def route_completion(logs: Sequence[EpisodeLog], penalty_per_m: float = OFF_ROUTE_PENALTY_PER_M) -> float:
    """Mean penalized completion, as a percentage."""
    if not logs:
        raise ValueError("route_completion needs at least one log")
    return 100.0 * float(np.mean([_route_fraction(log, penalty_per_m) for log in logs]))


def infraction_score(counts: Mapping[str, int]) -> float:
    score = 1.0
    for kind, n in counts.items():
        if n < 0:
            raise ValueError("infraction counts must be >= 0")
        try:
            score *= INFRACTION_PENALTIES[kind] ** n
        except KeyError:
            raise ValueError(f"unknown infraction type {kind!r}") from None
    return score


def driving_score(route_scores: Sequence[float], penalties: Sequence[float]) -> float:
    if len(route_scores) != len(penalties):
        raise ValueError(f"length mismatch: {len(route_scores)} routes vs {len(penalties)} penalties")
    if not route_scores:
        raise ValueError("driving_score needs at least one route")
    return float(np.mean(np.asarray(route_scores, float) * np.asarray(penalties, float)))


def collision_occurrences(collisions: float, distance_km: float) -> float:
    if distance_km <= 0:
        raise ValueError("distance must be > 0")
    return collisions / distance_km * 100.0


def collision_rate(collisions: float, distance_km: float) -> float:
    if distance_km <= 0:
        raise ValueError("distance must be > 0")
    return collisions / distance_km


def infractions_per_km(infractions: Sequence[float], distances_km: Sequence[float]) -> float:
    total = float(np.sum(distances_km))
    if total <= 0:
        raise ValueError("total distance must be > 0")
    return float(np.sum(infractions)) / total


def safety_score(infraction: float, collision_rate_per_km: float, cr_scale: float = 1.0) -> float:
    """Proxy ``100 * IS * (1 - CR / (CR + scale))``; not a published formula."""
    cr_norm = collision_rate_per_km / (collision_rate_per_km + cr_scale)
    return 100.0 * infraction * (1.0 - cr_norm)


@dataclass
class MetricsReport:
    DS: float
    RC: float
    IS: float
    CO: float
    IPK: float
    TTC: float | None
    CR: float
    stderr: dict
    routes: list
    digest: str

    def rows(self) -> list[tuple[str, float | None, float | None]]:
        return [(k, getattr(self, k), self.stderr.get(k)) for k in ("DS", "RC", "IS", "CO", "IPK", "TTC", "CR")]


def _stderr(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


def build_report(logs: Sequence[EpisodeLog], penalty_per_m: float = OFF_ROUTE_PENALTY_PER_M,
                 config_digest: str = "") -> MetricsReport:
    """Aggregate logs in a canonical order (route_id, seed, then content) so the result is order-free."""
    if not logs:
        raise ValueError("no episode logs")
    logs = sorted(logs, key=lambda g: (g.route_id, g.seed, json.dumps(g.to_dict(), sort_keys=True)))
    rc = np.array([_route_fraction(g, penalty_per_m) for g in logs])
    is_ = np.array([infraction_score(g.infractions) for g in logs])
    ds = rc * is_
    dist = np.array([g.distance_driven for g in logs])
    coll = np.array([g.collisions for g in logs])
    infr = np.array([g.n_infractions for g in logs])
    total_km = float(dist.sum())
    ttcs = [g.min_ttc for g in logs if g.min_ttc is not None]
    per_km = (coll / np.where(dist > 0, dist, np.nan))
    routes = [
        {"route_id": g.route_id, "rc": 100.0 * r, "is": i, "ds": 100.0 * d, "collisions": g.collisions,
         "distance_km": g.distance_driven, "min_ttc": g.min_ttc}
        for g, r, i, d in zip(logs, rc, is_, ds)
    ]
    return MetricsReport(
        DS=100.0 * float(ds.mean()),
        RC=100.0 * float(rc.mean()),
        IS=float(is_.mean()),
        CO=collision_occurrences(coll.sum(), total_km) if total_km > 0 else float("nan"),
        IPK=infractions_per_km(infr, dist) if total_km > 0 else float("nan"),
        TTC=float(np.mean(ttcs)) if ttcs else None,
        CR=collision_rate(coll.sum(), total_km) if total_km > 0 else float("nan"),
        stderr={"DS": 100.0 * _stderr(ds), "RC": 100.0 * _stderr(rc), "IS": _stderr(is_),
                "TTC": _stderr(ttcs) if ttcs else None,
                "CR": _stderr(per_km[np.isfinite(per_km)]) if np.isfinite(per_km).any() else None},
        routes=routes,
        digest=config_digest,
    )


def episode_log_from_record(record, route_id: str = "0", dt: float = 0.1) -> EpisodeLog:
    """Turn a rolled-out episode (steps + per-step infos) into an EpisodeLog."""
    counts: dict[str, int] = {}
    collisions = 0
    ttcs = []
    off_route = dist = 0.0
    for info in record.infos:
        if info.infraction:
            counts[info.infraction] = counts.get(info.infraction, 0) + 1
        if info.collided_with:
            collisions += 1
        if info.min_ttc is not None:
            ttcs.append(info.min_ttc)
        off_route += info.off_route_m
        dist += info.distance_m
    ep = record.episode
    return EpisodeLog(
        route_completion_fraction=float(ep.completed_fraction),
        off_route_distance=off_route,
        infractions=counts,
        collisions=collisions,
        distance_driven=dist / 1000.0,
        min_ttc=min(ttcs) if ttcs else None,
        wall_time=len(ep) * dt,
        seed=int(ep.seed),
        route_id=route_id,
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value", "stderr"])
        for name, value, err in report.rows():
            w.writerow([name, _fmt(value), _fmt(err)])


def write_routes_csv(report: MetricsReport, path) -> None:
    cols = ["route_id", "rc", "is", "ds", "collisions", "distance_km", "min_ttc"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report.routes:
            w.writerow([r["route_id"], _fmt(r["rc"]), _fmt(r["is"]), _fmt(r["ds"]), r["collisions"],
                        _fmt(r["distance_km"]), _fmt(r["min_ttc"])])


def write_logs_jsonl(logs: Sequence[EpisodeLog], path) -> None:
    with open(Path(path), "w") as fh:
        for g in logs:
            fh.write(json.dumps(g.to_dict(), sort_keys=True) + "\n")


def read_logs_jsonl(path) -> list[EpisodeLog]:
    with open(Path(path)) as fh:
        return [EpisodeLog(**json.loads(line)) for line in fh if line.strip()]


def digest_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
