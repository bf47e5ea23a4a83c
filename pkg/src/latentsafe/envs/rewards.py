"""Driving reward components and their weighted composite."""

from __future__ import annotations

import math

__all__ = [
    "wrap_angle",
    "velocity_reward",
    "lane_reward",
    "orientation_reward",
    "exploration_reward",
    "composite_reward",
]


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def velocity_reward(v_current: float, v_target: float, lam: float) -> float:
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if v_current == v_target:
        return 1.0
    return 1.0 / (1.0 + lam * abs(v_current - v_target))


def lane_reward(d_offset: float, d_max: float) -> float:
    if d_max <= 0:
        raise ValueError("d_max must be > 0")
    d = abs(d_offset)
    if d == 0.0:
        return 1.0
    if d > d_max:
        return -1.0
    return (d_max - d) / d_max


def orientation_reward(theta_current: float, theta_ideal: float, mu: float) -> float:
    if mu <= 0:
        raise ValueError("mu must be > 0")
    return 1.0 / (1.0 + mu * abs(wrap_angle(theta_current - theta_ideal)))


def exploration_reward(n_visits: int, nu: float) -> float:
    if nu < 0 or n_visits < 0:
        raise ValueError("nu and n_visits must be >= 0")
    return math.exp(-nu * n_visits)


def composite_reward(components, weights) -> float:
    """``w_v R_v + w_l R_l + w_o R_o + w_e R_e``."""
    components, weights = tuple(components), tuple(weights)
    if len(components) != 4 or len(weights) != 4:
        raise ValueError("expected four components and four weights")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    return float(sum(w * c for w, c in zip(weights, components)))
