"""Latent diffusion sampler for candidate latents and safety-screened selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, as_tensor, concat
from .nn import MLP, ParamStore

__all__ = [
    "DiffusionSchedule",
    "Denoiser",
    "diffusion_sample_candidates",
    "denoiser_loss",
    "select_candidate",
]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-preserving schedule with per-step noise rates ``betas``."""

    betas: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.size < 1 or np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("betas must be a non-empty sequence in (0, 1)")

    @classmethod
    def linear(cls, n_steps: int = 5, beta_start: float = 0.1, beta_end: float = 0.7) -> "DiffusionSchedule":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        return cls(tuple(float(b) for b in np.linspace(beta_start, beta_end, n_steps)))

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(1.0 - np.asarray(self.betas))

    @property
    def noise_levels(self) -> np.ndarray:
        """Noise standard deviation at each step, in sampling order (decreasing)."""
        return np.sqrt(1.0 - self.alpha_bars)[::-1].copy()


class Denoiser:
    """Noise predictor ``eps(x_k, context, k)`` over latent vectors."""

    def __init__(self, z_dim: int, context_dim: int, hidden: int = 64):
        self.z_dim = z_dim
        self.context_dim = context_dim
        self.net = MLP("denoise", (z_dim + context_dim + 2, hidden, hidden, z_dim), "tanh")

    def init(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        self.net.init(store, rng)
        return store

    def predict_noise(self, params, x, context, k: np.ndarray, schedule: DiffusionSchedule) -> Tensor:
        k = np.asarray(k, dtype=np.int64).reshape(-1)
        level = np.sqrt(1.0 - schedule.alpha_bars[k - 1])
        emb = np.stack([k / schedule.n_steps, level], axis=1)
        return self.net(params, concat([as_tensor(x), as_tensor(context), Tensor(emb)], axis=1))

    def reverse_step(self, params, schedule: DiffusionSchedule) -> Callable:
        """Ancestral sampling step ``x_k -> x_{k-1}`` driven by the noise predictor."""
        betas = np.asarray(schedule.betas)
        abar = schedule.alpha_bars

        def step(x: np.ndarray, context: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
            eps = self.predict_noise(params, x, context, np.full(len(x), k), schedule).data
            beta = betas[k - 1]
            mean = (x - beta / np.sqrt(1.0 - abar[k - 1]) * eps) / np.sqrt(1.0 - beta)
            if k == 1:
                return mean
            sigma = np.sqrt(beta * (1.0 - abar[k - 2]) / (1.0 - abar[k - 1]))
            return mean + sigma * rng.standard_normal(x.shape)

        return step


def diffusion_sample_candidates(context, K: int, schedule: DiffusionSchedule, rng: np.random.Generator,
                                denoise_step: Callable, z_dim: int) -> np.ndarray:
    """``K`` independent denoising chains from unit Gaussian noise.

    ``denoise_step(x, context, k, rng)`` maps the level-``k`` sample to level
    ``k - 1``; ``context`` is a single conditioning vector shared by all chains.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    ctx = np.repeat(np.atleast_2d(np.asarray(context, dtype=np.float64)), K, axis=0)
    x = rng.standard_normal((K, z_dim))
    for k in range(schedule.n_steps, 0, -1):
        x = denoise_step(x, ctx, k, rng)
    return x


def denoiser_loss(denoiser: Denoiser, params, z_clean: np.ndarray, contexts: np.ndarray,
                  schedule: DiffusionSchedule, rng: np.random.Generator) -> Tensor:
    """Mean squared error between predicted and injected noise at random levels."""
    n = len(z_clean)
    k = rng.integers(1, schedule.n_steps + 1, size=n)
    eps = rng.standard_normal(z_clean.shape)
    abar = schedule.alpha_bars[k - 1][:, None]
    x_k = np.sqrt(abar) * z_clean + np.sqrt(1.0 - abar) * eps
    pred = denoiser.predict_noise(params, x_k, contexts, k, schedule)
    return (pred - eps).square().mean()


def select_candidate(candidates, q_of: Callable, gamma_of: Callable, d: float) -> tuple[int, np.ndarray]:
    """Pick the Q-maximal candidate among those with CVaR <= d.

    With no candidate inside the budget, fall back to the one with the least
    CVaR.  Ties go to the lowest index.  Returns ``(index, candidate)``.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    q = np.asarray(q_of(candidates), dtype=np.float64).reshape(-1)
    g = np.asarray(gamma_of(candidates), dtype=np.float64).reshape(-1)
    safe = g <= d
    if safe.any():
        idx = int(np.argmax(np.where(safe, q, -np.inf)))
    else:
        idx = int(np.argmin(g))
    return idx, candidates[idx]
