"""INI run configuration: one section per module, every default listed by ``default_config_text``."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agent import TrainConfig
from .core import RiskBudget
from .envs import HazardGridConfig, HazardGridWorld, NavEnv, preset
from .metrics import OFF_ROUTE_PENALTY_PER_M

__all__ = ["RunConfig", "load_config", "parse_config", "default_config_text", "make_env", "config_digest"]

_AGENT_KEYS = {f.name for f in fields(TrainConfig)} - {"risk", "h_dim", "z_dim", "hidden", "min_std",
                                                         "beta_kl", "free_bits", "seed"}
_WM_KEYS = ("h_dim", "z_dim", "hidden", "min_std", "beta_kl", "free_bits")


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    env: str = "hazard"                # "hazard" or "nav"
    scenario: str = "dynamic-2"        # nav preset
    obstacle_speed: float | None = None
    hazard: HazardGridConfig = field(default_factory=HazardGridConfig)
    checkpoint_every: int = 50
    off_route_penalty: float = OFF_ROUTE_PENALTY_PER_M

    def __post_init__(self):
        if self.env not in ("hazard", "nav"):
            raise ValueError(f"env must be 'hazard' or 'nav', got {self.env!r}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(raw: str, default):
    """Parse ``raw`` into the type of ``default``."""
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return _to_tuple(json.loads(raw))
    if default is None:
        return float(raw)
    return raw


def _to_tuple(x):
    return tuple(_to_tuple(v) for v in x) if isinstance(x, list) else x


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return json.dumps(value)
    if value is None:
        return "none"
    return str(value)


def _section(parser, name: str, obj, keys):
    if not parser.has_section(name):
        return {}
    known = set(keys)
    out = {}
    for key, raw in parser.items(name):
        if key not in known:
            raise ValueError(f"[{name}] unknown key {key!r}")
        out[key] = _coerce(raw, getattr(obj, key))
    return out


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    allowed = {"run", "risk", "agent", "world_model", "env", "hazard", "harness"}
    extra = set(parser.sections()) - allowed
    if extra:
        raise ValueError(f"unknown config sections {sorted(extra)}")
    base = RunConfig()
    t = base.train
    run = _section(parser, "run", t, ("seed",))
    risk = _section(parser, "risk", t.risk, [f.name for f in fields(RiskBudget)])
    agent = _section(parser, "agent", t, sorted(_AGENT_KEYS))
    wm = _section(parser, "world_model", t, _WM_KEYS)
    env = _section(parser, "env", base, ("env", "scenario", "obstacle_speed"))
    hazard = _section(parser, "hazard", base.hazard, [f.name for f in fields(HazardGridConfig)])
    harness = _section(parser, "harness", base, ("checkpoint_every", "off_route_penalty"))
    train = replace(t, risk=replace(t.risk, **risk), **agent, **wm, **run)
    return replace(base, train=train, hazard=replace(base.hazard, **hazard), **env, **harness)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def default_config_text(cfg: RunConfig | None = None) -> str:
    cfg = cfg or RunConfig()
    t = cfg.train
    blocks = {
        "run": {"seed": t.seed},
        "risk": dataclasses.asdict(t.risk),
        "agent": {k: getattr(t, k) for k in sorted(_AGENT_KEYS)},
        "world_model": {k: getattr(t, k) for k in _WM_KEYS},
        "env": {"env": cfg.env, "scenario": cfg.scenario, "obstacle_speed": cfg.obstacle_speed},
        "hazard": {f.name: getattr(cfg.hazard, f.name) for f in fields(HazardGridConfig)},
        "harness": {"checkpoint_every": cfg.checkpoint_every, "off_route_penalty": cfg.off_route_penalty},
    }
    lines = []
    for name, items in blocks.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def make_env(cfg: RunConfig, scenario: str | None = None, speed: float | None = None):
    if cfg.env == "hazard" and scenario is None:
        return HazardGridWorld(cfg.hazard)
    nav_cfg = preset(scenario or cfg.scenario)
    speed = speed if speed is not None else cfg.obstacle_speed
    if speed is not None:
        nav_cfg = nav_cfg.with_obstacle_speed(speed)
    return NavEnv(nav_cfg)


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True, default=str).encode()).hexdigest()[:16]
