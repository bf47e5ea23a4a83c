"""2D navigation world: a lane route, a goal, static and moving obstacles.

The ego is a disc-shaped unicycle.  Actions are ``(acceleration, yaw-rate)``
commands in [-1, 1]^2 scaled by the configured limits.  Observations are a
normalized vector of ray-cast ranges plus speed, heading error, lateral
offset and goal bearing/distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rewards import (
    composite_reward,
    exploration_reward,
    lane_reward,
    orientation_reward,
    velocity_reward,
    wrap_angle,
)

__all__ = [
    "MovingObstacle",
    "NavWorldConfig",
    "EgoState",
    "NavWorld",
    "StepInfo",
    "nav_reset",
    "nav_step",
    "NavEnv",
    "time_to_collision",
    "preset",
    "PRESETS",
]


@dataclass(frozen=True)
class MovingObstacle:
    """Disc looping along a closed polyline at constant speed."""

    path: tuple[tuple[float, float], ...]
    speed: float
    radius: float = 0.5
    phase: float = 0.0      # initial arclength (m)
    kind: str = "Veh"       # infraction class on contact: "Ped" or "Veh"

    def _segments(self):
        pts = np.asarray(self.path + (self.path[0],), dtype=np.float64)
        seg = np.diff(pts, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        return pts, seg, lengths

    @property
    def loop_length(self) -> float:
        return float(self._segments()[2].sum())

    def position(self, arclength: float) -> np.ndarray:
        pts, seg, lengths = self._segments()
        s = arclength % lengths.sum()
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lengths) - 1)
        return pts[i] + seg[i] * ((s - cum[i]) / lengths[i])

    def velocity(self, arclength: float) -> np.ndarray:
        pts, seg, lengths = self._segments()
        s = arclength % lengths.sum()
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lengths) - 1)
        return seg[i] / lengths[i] * self.speed


@dataclass(frozen=True)
class NavWorldConfig:
    arena: tuple[float, float] = (30.0, 10.0)
    route: tuple[tuple[float, float], ...] = ((2.0, 5.0), (28.0, 5.0))
    start_heading_jitter: float = 0.1
    start_position_jitter: float = 0.3
    goal_radius: float = 1.0
    d_max: float = 2.0
    v_target: float = 4.0
    v_max: float = 6.0
    accel_max: float = 3.0
    yaw_rate_max: float = 1.5
    ego_radius: float = 0.4
    hazard_discs: tuple[tuple[float, float, float], ...] = ()           # (x, y, r)
    hazard_rects: tuple[tuple[float, float, float, float], ...] = ()    # (xmin, ymin, xmax, ymax)
    static_obstacles: tuple[tuple[float, float, float], ...] = ()       # (x, y, r)
    moving_obstacles: tuple[MovingObstacle, ...] = ()
    phase_jitter: float = 0.0
    dt: float = 0.1
    time_limit: int = 150
    weights: tuple[float, float, float, float] = (0.4, 0.3, 0.2, 0.1)
    lam: float = 0.5
    mu: float = 1.0
    nu: float = 0.1
    visit_cell: float = 1.0
    safety_margin: float = 1.0
    n_rays: int = 9
    ray_fov: float = math.pi
    ray_range: float = 10.0
    walls_are_obstacles: bool = True

    def validate(self) -> list[str]:
        errors = []
        if not self.dt > 0:
            errors.append(f"dt must be > 0 (got {self.dt})")
        if not self.d_max > 0:
            errors.append(f"d_max must be > 0 (got {self.d_max})")
        if any(w < 0 for w in self.weights) or len(self.weights) != 4:
            errors.append("weights must be four values >= 0")
        for i, ob in enumerate(self.moving_obstacles):
            if not ob.speed > 0:
                errors.append(f"moving obstacle {i}: speed must be > 0 (got {ob.speed})")
            if len(ob.path) < 2:
                errors.append(f"moving obstacle {i}: path needs >= 2 points")
        if len(self.route) < 2:
            errors.append("route needs >= 2 points")
        if self.arena[0] <= 0 or self.arena[1] <= 0:
            errors.append("arena dimensions must be > 0")
        for name in ("lam", "mu", "safety_margin", "visit_cell", "v_max", "ray_range", "goal_radius"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0 (got {getattr(self, name)})")
        if self.nu < 0:
            errors.append("nu must be >= 0")
        if self.time_limit < 1:
            errors.append("time_limit must be >= 1")
        if self.n_rays < 1:
            errors.append("n_rays must be >= 1")
        return errors

    @property
    def obs_dim(self) -> int:
        return self.n_rays + 5

    def with_obstacle_speed(self, speed: float) -> "NavWorldConfig":
        return replace(self, moving_obstacles=tuple(replace(m, speed=speed) for m in self.moving_obstacles))


@dataclass
class EgoState:
    position: np.ndarray
    heading: float
    speed: float = 0.0
    d_offset: float = 0.0
    theta_ideal: float = 0.0
    n_visits: int = 0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.speed < 0:
            raise ValueError("speed must be >= 0")


@dataclass
class StepInfo:
    infraction: str | None = None
    collided_with: str | None = None
    reached_goal: bool = False
    timeout: bool = False
    progress: float = 0.0
    off_route_m: float = 0.0
    distance_m: float = 0.0
    min_ttc: float | None = None
    nearest_clearance: float = math.inf
    components: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


@dataclass
class NavWorld:
    config: NavWorldConfig
    seed: int
    t: int = 0
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    visits: dict = field(default_factory=dict)
    ready: bool = False
    route_pts: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    # -- geometry ----------------------------------------------------------
    def moving_positions(self) -> np.ndarray:
        obs = self.config.moving_obstacles
        if not obs:
            return np.zeros((0, 2))
        return np.stack([m.position(p) for m, p in zip(obs, self.phases)])

    def moving_velocities(self) -> np.ndarray:
        obs = self.config.moving_obstacles
        if not obs:
            return np.zeros((0, 2))
        return np.stack([m.velocity(p) for m, p in zip(obs, self.phases)])

    def discs(self) -> list[tuple[np.ndarray, float, str]]:
        """Every disc-shaped unsafe object as (center, radius, infraction class)."""
        cfg = self.config
        out = [(np.array([x, y]), r, "Stat") for x, y, r in cfg.static_obstacles]
        out += [(np.array([x, y]), r, "Red") for x, y, r in cfg.hazard_discs]
        for m, pos in zip(cfg.moving_obstacles, self.moving_positions()):
            out.append((pos, m.radius, m.kind))
        return out

    def clearances(self, p: np.ndarray) -> list[tuple[float, str]]:
        """Signed distance from point ``p`` to each unsafe object's boundary."""
        out = [(float(np.linalg.norm(p - c) - r), kind) for c, r, kind in self.discs()]
        for xmin, ymin, xmax, ymax in self.config.hazard_rects:
            dx = max(xmin - p[0], 0.0, p[0] - xmax)
            dy = max(ymin - p[1], 0.0, p[1] - ymax)
            if dx == 0.0 and dy == 0.0:
                d = -min(p[0] - xmin, xmax - p[0], p[1] - ymin, ymax - p[1])
            else:
                d = math.hypot(dx, dy)
            out.append((d, "Red"))
        if self.config.walls_are_obstacles:
            W, H = self.config.arena
            out.append((float(min(p[0], W - p[0], p[1], H - p[1])), "Stat"))
        return out

    def route_geometry(self, p: np.ndarray) -> tuple[float, float, float]:
        """(signed lateral offset, ideal heading, arclength progress) w.r.t. the route."""
        pts = self.route_pts
        best = None
        travelled = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            seg = b - a
            L = float(np.linalg.norm(seg))
            u = float(np.clip(np.dot(p - a, seg) / (L * L), 0.0, 1.0))
            proj = a + u * seg
            dist = float(np.linalg.norm(p - proj))
            cross = seg[0] * (p[1] - a[1]) - seg[1] * (p[0] - a[0])
            if best is None or dist < best[0] - 1e-12:
                best = (dist, math.copysign(dist, cross) if dist > 0 else 0.0,
                        math.atan2(seg[1], seg[0]), travelled + u * L)
            travelled += L
        return best[1], best[2], best[3]

    @property
    def route_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.route_pts, axis=0), axis=1).sum())

    def ray_cast(self, p: np.ndarray, heading: float) -> np.ndarray:
        cfg = self.config
        if cfg.n_rays == 1:
            angles = np.array([heading])
        else:
            angles = heading + np.linspace(-cfg.ray_fov / 2, cfg.ray_fov / 2, cfg.n_rays)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        best = np.full(cfg.n_rays, cfg.ray_range)
        for c, r, _ in self.discs():
            oc = p - c
            b = dirs @ oc
            cterm = float(oc @ oc) - r * r
            disc = b * b - cterm
            hit = disc >= 0
            sq = np.sqrt(np.where(hit, disc, 0.0))
            t0 = -b - sq
            t1 = -b + sq
            t = np.where(t0 >= 0, t0, np.where(t1 >= 0, 0.0, np.inf))
            best = np.minimum(best, np.where(hit, t, np.inf))
        rects = list(cfg.hazard_rects)
        for xmin, ymin, xmax, ymax in rects:
            with np.errstate(divide="ignore", invalid="ignore"):
                tx1 = (xmin - p[0]) / dirs[:, 0]
                tx2 = (xmax - p[0]) / dirs[:, 0]
                ty1 = (ymin - p[1]) / dirs[:, 1]
                ty2 = (ymax - p[1]) / dirs[:, 1]
            tmin = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
            tmax = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
            ok = (tmax >= np.maximum(tmin, 0.0)) & np.isfinite(tmax)
            best = np.minimum(best, np.where(ok, np.maximum(tmin, 0.0), np.inf))
        if cfg.walls_are_obstacles:
            W, H = cfg.arena
            with np.errstate(divide="ignore"):
                tx = np.where(dirs[:, 0] > 0, (W - p[0]) / dirs[:, 0],
                              np.where(dirs[:, 0] < 0, -p[0] / dirs[:, 0], np.inf))
                ty = np.where(dirs[:, 1] > 0, (H - p[1]) / dirs[:, 1],
                              np.where(dirs[:, 1] < 0, -p[1] / dirs[:, 1], np.inf))
            best = np.minimum(best, np.maximum(np.minimum(tx, ty), 0.0))
        return np.minimum(best, cfg.ray_range)

    def observe(self, ego: EgoState) -> np.ndarray:
        cfg = self.config
        rays = self.ray_cast(ego.position, ego.heading) / cfg.ray_range
        goal = self.route_pts[-1]
        to_goal = goal - ego.position
        bearing = wrap_angle(math.atan2(to_goal[1], to_goal[0]) - ego.heading)
        diag = math.hypot(*cfg.arena)
        return np.concatenate([
            rays,
            [ego.speed / cfg.v_max,
             wrap_angle(ego.heading - ego.theta_ideal) / math.pi,
             float(np.clip(ego.d_offset / cfg.d_max, -2.0, 2.0)),
             bearing / math.pi,
             float(np.linalg.norm(to_goal)) / diag],
        ])

    def _cell(self, p: np.ndarray) -> tuple[int, int]:
        return (int(math.floor(p[0] / self.config.visit_cell)), int(math.floor(p[1] / self.config.visit_cell)))

    def min_ttc(self, ego: EgoState) -> float | None:
        """Smallest distance / closing-speed over objects on a closing course."""
        v_ego = ego.speed * np.array([math.cos(ego.heading), math.sin(ego.heading)])
        best = None
        objs = [(np.array([x, y]), r, np.zeros(2)) for x, y, r in self.config.static_obstacles]
        objs += [(pos, m.radius, vel) for m, pos, vel in
                 zip(self.config.moving_obstacles, self.moving_positions(), self.moving_velocities())]
        for c, r, vel in objs:
            rel = c - ego.position
            dist = float(np.linalg.norm(rel))
            if dist == 0.0:
                return 0.0
            closing = float(np.dot(v_ego - vel, rel / dist))
            ttc = time_to_collision(max(dist - r - self.config.ego_radius, 0.0), closing)
            if ttc is not None and (best is None or ttc < best):
                best = ttc
        return best


def time_to_collision(distance_m: float, v_rel_mps: float) -> float | None:
    """``distance / v_rel`` when closing, ``None`` otherwise."""
    if distance_m < 0:
        raise ValueError("distance must be >= 0")
    if distance_m == 0.0:
        return 0.0
    if v_rel_mps <= 0:
        return None
    return distance_m / v_rel_mps


def nav_reset(config: NavWorldConfig, seed: int) -> tuple[NavWorld, EgoState, np.ndarray]:
    errors = config.validate()
    if errors:
        raise ValueError("invalid NavWorldConfig: " + "; ".join(errors))
    rng = np.random.default_rng(seed)
    world = NavWorld(config=config, seed=seed)
    world.route_pts = np.asarray(config.route, dtype=np.float64)
    world.phases = np.array([m.phase + rng.uniform(0.0, config.phase_jitter) if config.phase_jitter > 0 else m.phase
                             for m in config.moving_obstacles], dtype=np.float64)
    start = world.route_pts[0]
    seg = world.route_pts[1] - start
    heading0 = math.atan2(seg[1], seg[0])
    jitter = rng.uniform(-1.0, 1.0, size=3)
    normal = np.array([-math.sin(heading0), math.cos(heading0)])
    pos = start + normal * jitter[0] * config.start_position_jitter
    heading = wrap_angle(heading0 + jitter[1] * config.start_heading_jitter)
    ego = EgoState(position=pos, heading=heading, speed=0.0)
    ego.d_offset, ego.theta_ideal, _ = world.route_geometry(pos)
    world.visits = {world._cell(pos): 1}
    ego.n_visits = 0
    world.t = 0
    world.ready = True
    return world, ego, world.observe(ego)


def nav_step(world: NavWorld, ego: EgoState, action):
    """Advance one ``dt``; returns ``(observation, reward, cost, violation, done, info)``.

    ``world`` and ``ego`` are updated in place.
    """
    if not world.ready:
        raise RuntimeError("nav_step called before nav_reset")
    cfg = world.config
    u = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
    old_pos = ego.position.copy()
    accel = u[0] * cfg.accel_max
    yaw_rate = u[1] * cfg.yaw_rate_max
    new_speed = float(np.clip(ego.speed + accel * cfg.dt, 0.0, cfg.v_max))
    ego.heading = wrap_angle(ego.heading + yaw_rate * cfg.dt)
    avg_speed = 0.5 * (ego.speed + new_speed)
    ego.position = old_pos + avg_speed * cfg.dt * np.array([math.cos(ego.heading), math.sin(ego.heading)])
    ego.speed = new_speed
    world.phases = world.phases + np.array([m.speed for m in cfg.moving_obstacles]) * cfg.dt
    world.t += 1

    ego.d_offset, ego.theta_ideal, progress = world.route_geometry(ego.position)
    cell = world._cell(ego.position)
    ego.n_visits = world.visits.get(cell, 0) if cell != world._cell(old_pos) else ego.n_visits
    world.visits[cell] = world.visits.get(cell, 0) + (cell != world._cell(old_pos))

    clear = world.clearances(ego.position)
    nearest = min((d for d, _ in clear), default=math.inf) - cfg.ego_radius
    hits = [kind for d, kind in clear if d - cfg.ego_radius <= 0.0]
    violation = bool(hits)
    cost = (1.0 if violation else 0.0) + max(0.0, 1.0 - max(nearest, 0.0) / cfg.safety_margin)

    components = (
        velocity_reward(ego.speed, cfg.v_target, cfg.lam),
        lane_reward(ego.d_offset, cfg.d_max),
        orientation_reward(ego.heading, ego.theta_ideal, cfg.mu),
        exploration_reward(ego.n_visits, cfg.nu),
    )
    reward = composite_reward(components, cfg.weights)
    # finish line: within goal_radius of the route end, measured along the route, and inside the lane
    reached = progress >= world.route_length - cfg.goal_radius and abs(ego.d_offset) <= cfg.d_max
    timeout = world.t >= cfg.time_limit
    done = violation or reached or timeout
    if done:
        world.ready = False
    step_dist = float(np.linalg.norm(ego.position - old_pos))
    info = StepInfo(
        infraction=hits[0] if hits else None,
        collided_with=hits[0] if hits else None,
        reached_goal=reached,
        timeout=timeout and not (violation or reached),
        progress=progress,
        off_route_m=step_dist if abs(ego.d_offset) > cfg.d_max else 0.0,
        distance_m=step_dist,
        min_ttc=world.min_ttc(ego),
        nearest_clearance=nearest,
        components=components,
    )
    return world.observe(ego), reward, cost, violation, done, info


class NavEnv:
    """Object wrapper over ``nav_reset``/``nav_step`` with the training interface."""

    act_dim = 2

    def __init__(self, config: NavWorldConfig):
        self.config = config
        self.obs_dim = config.obs_dim
        self.world = None
        self.ego = None

    def reset(self, seed: int) -> np.ndarray:
        self.world, self.ego, obs = nav_reset(self.config, seed)
        return obs

    def step(self, action):
        return nav_step(self.world, self.ego, action)

    @property
    def time_limit(self) -> int:
        return self.config.time_limit

    @property
    def route_length(self) -> float:
        if self.world is None:
            return float(np.linalg.norm(np.diff(np.asarray(self.config.route), axis=0), axis=1).sum())
        return self.world.route_length


# -- scenario presets (our own layouts) ------------------------------------------

def _crossing(x: float, speed: float, y_lo: float = 1.0, y_hi: float = 9.0, phase: float = 0.0,
              kind: str = "Ped") -> MovingObstacle:
    return MovingObstacle(path=((x, y_lo), (x, y_hi)), speed=speed, radius=0.5, phase=phase, kind=kind)


def _dynamic(speed: float) -> NavWorldConfig:
    return NavWorldConfig(
        arena=(30.0, 10.0),
        route=((2.0, 5.0), (28.0, 5.0)),
        moving_obstacles=(_crossing(12.0, speed, phase=0.0), _crossing(20.0, speed, phase=8.0)),
        phase_jitter=16.0,
        time_limit=150,
    )


PRESETS = {
    "corridor": lambda: NavWorldConfig(
        arena=(30.0, 10.0), route=((2.0, 5.0), (28.0, 5.0)),
        static_obstacles=((15.0, 6.6, 0.8),), time_limit=150,
    ),
    "intersection": lambda: NavWorldConfig(
        arena=(24.0, 24.0), route=((2.0, 5.0), (16.0, 5.0), (16.0, 22.0)),
        moving_obstacles=(MovingObstacle(path=((1.0, 12.0), (23.0, 12.0)), speed=2.0, radius=0.8, kind="Veh"),),
        hazard_rects=((18.5, 0.0, 24.0, 3.0),), phase_jitter=44.0, time_limit=200,
    ),
    "obstacle-field": lambda: NavWorldConfig(
        arena=(30.0, 12.0), route=((2.0, 6.0), (28.0, 6.0)),
        static_obstacles=((9.0, 7.0, 0.7), (14.0, 4.6, 0.7), (19.0, 7.2, 0.7), (24.0, 5.0, 0.6)),
        hazard_discs=((12.0, 10.5, 1.0),), time_limit=150,
    ),
    "dynamic-1": lambda: _dynamic(1.0),
    "dynamic-2": lambda: _dynamic(2.0),
    "dynamic-3": lambda: _dynamic(3.0),
}


def preset(name: str) -> NavWorldConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
