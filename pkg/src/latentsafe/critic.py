"""Gaussian distributional safety critic.

The discounted cost return from ``(s, a)`` is modelled as ``N(Q_c, V_c)``.
Means follow the ordinary Bellman recursion; variances follow the second
moment recursion ``E[C^2] = c^2 + 2 gamma c E[Q'] + gamma^2 (E[V'] + E[Q'^2])``.
The critic is trained with the univariate 2-Wasserstein distance and
summarized by the Gaussian CVaR.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .autodiff import Tensor, as_tensor, stop_gradient
from .envs.tabular import TabularCMDP
from .nn import MLP, ParamStore

log = logging.getLogger(__name__)

__all__ = [
    "GaussianCostDistribution",
    "SafetyCritic",
    "CriticTable",
    "bellman_cost_operator",
    "q_c_target",
    "v_c_target",
    "w2_distance_gaussian",
    "cvar",
    "cvar_coefficient",
    "critic_losses",
    "fit_tabular_critic",
    "ConvergenceError",
]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianCostDistribution:
    q_c: float
    v_c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v_c", max(float(self.v_c), 0.0))


def bellman_cost_operator(c: float, gamma: float, next_dist_sample: float) -> float:
    """Sample-level operator ``c + gamma * C(s', a')``."""
    if c < 0:
        raise ValueError("cost must be >= 0")
    return c + gamma * next_dist_sample


def q_c_target(c, gamma, expected_next_q, done=False):
    """``c + gamma * E[Q_c(s', a')]``, without bootstrap on terminal transitions."""
    return c + gamma * np.where(done, 0.0, expected_next_q)


def v_c_target(c, gamma, q_here, expected_next_q, expected_next_v, expected_next_q_sq, done=False):
    """Variance target from the second-moment recursion, clamped at zero."""
    cont = np.where(done, 0.0, 1.0)
    raw = (np.square(c) - np.square(q_here)
           + cont * (2.0 * gamma * c * expected_next_q
                     + gamma**2 * expected_next_v
                     + gamma**2 * expected_next_q_sq))
    if np.any(raw < -1e-6):
        log.warning("variance projection went negative (min %.3g); clamping to 0", float(np.min(raw)))
    out = np.maximum(raw, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def w2_distance_gaussian(g1: GaussianCostDistribution, g2: GaussianCostDistribution) -> float:
    """2-Wasserstein distance between two univariate Gaussians."""
    return math.hypot(g1.q_c - g2.q_c, math.sqrt(g1.v_c) - math.sqrt(g2.v_c))


def cvar_coefficient(alpha: float) -> float:
    """``phi(Phi^-1(alpha)) / alpha``, the standard-deviation multiplier of the CVaR."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(norm.pdf(norm.ppf(alpha)) / alpha)


def cvar(q_c, v_c, alpha: float):
    """Gaussian CVaR ``q + phi(Phi^-1(alpha)) / alpha * sqrt(v)``.

    Works on floats, arrays or Tensors.
    """
    k = cvar_coefficient(alpha)
    if isinstance(q_c, Tensor) or isinstance(v_c, Tensor):
        return as_tensor(q_c) + k * as_tensor(v_c).sqrt()
    if np.any(np.asarray(v_c) < 0):
        raise ValueError("variance must be >= 0")
    return q_c + k * np.sqrt(v_c)


class SafetyCritic:
    """Mean network ``mu`` and softplus-headed variance network ``eta``."""

    def __init__(self, in_dim: int, act_dim: int, hidden: tuple[int, ...] = (64, 64),
                 activation: str = "tanh", min_var: float = 1e-6):
        self.mean_net = MLP("qc", (in_dim + act_dim, *hidden, 1), activation, out_scale=0.1)
        # start near zero variance; softplus(-5) ~ 0.0067
        self.var_net = MLP("vc", (in_dim + act_dim, *hidden, 1), activation, out_activation="softplus",
                           out_bias=-5.0)
        self.min_var = min_var

    def init(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        self.mean_net.init(store, rng)
        self.var_net.init(store, rng)
        return store

    @staticmethod
    def _input(feat, act):
        from .autodiff import concat
        return concat([as_tensor(feat), as_tensor(act)], axis=1)

    def q(self, params, feat, act) -> Tensor:
        return self.mean_net(params, self._input(feat, act)).reshape(-1)

    def v(self, params, feat, act) -> Tensor:
        return self.var_net(params, self._input(feat, act)).reshape(-1) + self.min_var

    def gamma(self, params, feat, act, alpha: float) -> Tensor:
        x = self._input(feat, act)
        q = self.mean_net(params, x).reshape(-1)
        v = self.var_net(params, x).reshape(-1) + self.min_var
        return cvar(q, v, alpha)


def critic_losses(batch: dict, critic: SafetyCritic, params: dict, target_params: dict, gamma: float):
    """``(J_C, J_V)`` on a batch of ``feat, act, cost, next_feat, next_act, done``.

    Targets come from the frozen target parameters; the mean used inside the
    variance projection is the online mean at ``(s, a)``, also frozen.
    """
    c = np.asarray(batch["cost"], dtype=np.float64)
    done = np.asarray(batch["done"], dtype=bool)
    q_next = critic.q(target_params, batch["next_feat"], batch["next_act"]).data
    v_next = critic.v(target_params, batch["next_feat"], batch["next_act"]).data
    q_sa = critic.q(params, batch["feat"], batch["act"])
    v_sa = critic.v(params, batch["feat"], batch["act"])
    q_bar = q_c_target(c, gamma, q_next, done)
    v_bar = v_c_target(c, gamma, q_sa.data, q_next, v_next, q_next**2, done)
    delta_q = stop_gradient(q_bar) - q_sa
    j_c = delta_q.square().mean()
    delta_v = (np.sqrt(v_bar) - v_sa.sqrt()).square()
    j_v = delta_v.mean()
    if not (np.isfinite(j_c.data) and np.isfinite(j_v.data)):
        raise FloatingPointError("non-finite safety-critic loss")
    return j_c, j_v


@dataclass
class CriticTable:
    """Time-indexed Gaussian cost-return table ``[t, s, a]``."""

    q: np.ndarray
    v: np.ndarray
    policy: np.ndarray
    sweeps: int

    def at(self, s: int, a: int, t: int = 0) -> GaussianCostDistribution:
        return GaussianCostDistribution(float(self.q[t, s, a]), float(self.v[t, s, a]))

    def state_moments(self, s: int, t: int = 0) -> tuple[float, float]:
        pi = self.policy[s]
        q = float(pi @ self.q[t, s])
        second = float(pi @ (self.v[t, s] + self.q[t, s] ** 2))
        return q, max(second - q * q, 0.0)

    def to_csv(self, path, alpha: float, t: int = 0) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "a", "q_c", "v_c", f"cvar@{alpha}"])
            S, A = self.q.shape[1:]
            for s in range(S):
                for a in range(A):
                    q, v = self.q[t, s, a], self.v[t, s, a]
                    w.writerow([s, a, repr(float(q)), repr(float(v)), repr(float(cvar(q, v, alpha)))])


def fit_tabular_critic(mdp: TabularCMDP, policy, iterations: int = 1000, tol: float = 1e-10) -> CriticTable:
    """Sweep both projection equations to their joint fixed point.

    States are indexed by time because episodes end at the horizon.
    """
    policy = np.asarray(policy, dtype=np.float64)
    H, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    q = np.zeros((H, S, A))
    v = np.zeros((H, S, A))
    P, c, g = mdp.transition, mdp.cost, mdp.gamma
    cont = (~mdp.terminal).astype(np.float64)  # bootstrap only into non-terminal states
    for sweep in range(1, iterations + 1):
        q_new = np.empty_like(q)
        v_new = np.empty_like(v)
        for t in range(H):
            if t + 1 < H:
                eq = (policy * q[t + 1]).sum(axis=1) * cont          # E_a'[Q'] per s'
                ev = (policy * v[t + 1]).sum(axis=1) * cont
                eq2 = (policy * q[t + 1] ** 2).sum(axis=1) * cont
                e_q, e_v, e_q2 = P @ eq, P @ ev, P @ eq2             # (S, A)
            else:
                e_q = e_v = e_q2 = np.zeros((S, A))
            q_new[t] = q_c_target(c, g, e_q)
            v_new[t] = v_c_target(c, g, q_new[t], e_q, e_v, e_q2)
        change = max(np.max(np.abs(q_new - q)), np.max(np.abs(v_new - v)))
        q, v = q_new, v_new
        if change < tol:
            return CriticTable(q=q, v=v, policy=policy, sweeps=sweep)
    raise ConvergenceError(f"no convergence after {iterations} sweeps (last change {change:.3g})")
