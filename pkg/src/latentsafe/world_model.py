"""Latent world model: posterior, prior, gated recurrent core and decoding heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concat
from .core import SequenceBatch
from .nn import MLP, ParamStore, ShapeError

__all__ = [
    "LatentState",
    "DiagonalGaussian",
    "WorldModel",
    "ImaginedTrajectory",
    "kl_divergence",
    "world_model_loss",
    "imagine",
]


@dataclass
class LatentState:
    h: np.ndarray
    z: np.ndarray

    def features(self) -> np.ndarray:
        return np.concatenate([np.atleast_2d(self.h), np.atleast_2d(self.z)], axis=1)


@dataclass
class DiagonalGaussian:
    mean: Tensor
    std: Tensor

    def rsample(self, noise: np.ndarray) -> Tensor:
        """Reparameterized draw ``mean + std * noise``."""
        return self.mean + self.std * noise

    def sample(self, rng: np.random.Generator) -> Tensor:
        return self.rsample(rng.standard_normal(self.mean.shape))


def kl_divergence(post: DiagonalGaussian, prior: DiagonalGaussian) -> Tensor:
    """KL(post || prior) summed over the last axis."""
    if post.mean.shape != prior.mean.shape:
        raise ShapeError(f"dimension mismatch {post.mean.shape} vs {prior.mean.shape}")
    var_ratio = (post.std / prior.std).square()
    mean_term = ((post.mean - prior.mean) / prior.std).square()
    per_dim = 0.5 * (var_ratio + mean_term - 1.0) - (post.std / prior.std).log()
    return per_dim.sum(axis=-1)


class WorldModel:
    def __init__(self, obs_dim: int, act_dim: int, h_dim: int = 64, z_dim: int = 16,
                 hidden: int = 64, min_std: float = 0.1):
        if min_std < 1e-6:
            raise ValueError("min_std must be >= 1e-6")
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.h_dim, self.z_dim = h_dim, z_dim
        self.min_std = min_std
        self.post_net = MLP("post", (obs_dim + h_dim, hidden, 2 * z_dim), "tanh")
        self.prior_net = MLP("prior", (h_dim, hidden, 2 * z_dim), "tanh")
        self.cand_net = MLP("rnn_cand", (h_dim + z_dim + act_dim, h_dim), out_activation="tanh")
        self.gate_net = MLP("rnn_gate", (h_dim + z_dim + act_dim, h_dim), out_activation="sigmoid")
        self.obs_head = MLP("dec_obs", (h_dim + z_dim, hidden, obs_dim), "tanh")
        self.rew_head = MLP("dec_rew", (h_dim + z_dim, hidden, 1), "tanh")
        self.cost_head = MLP("dec_cost", (h_dim + z_dim, hidden, 1), "tanh", out_activation="softplus",
                             out_bias=-5.0)
        self._nets = (self.post_net, self.prior_net, self.cand_net, self.gate_net,
                      self.obs_head, self.rew_head, self.cost_head)

    @property
    def feat_dim(self) -> int:
        return self.h_dim + self.z_dim

    def init(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        for net in self._nets:
            net.init(store, rng)
        return store

    def _gaussian(self, raw: Tensor) -> DiagonalGaussian:
        mean = raw[:, : self.z_dim]
        std = raw[:, self.z_dim:].softplus() + self.min_std
        return DiagonalGaussian(mean, std)

    def posterior(self, params, o, h) -> DiagonalGaussian:
        return self._gaussian(self.post_net(params, concat([as_tensor(o), as_tensor(h)], axis=1)))

    def prior(self, params, h) -> DiagonalGaussian:
        return self._gaussian(self.prior_net(params, as_tensor(h)))

    def recurrent_step(self, params, h, z, a) -> Tensor:
        """Gated update ``sigmoid(gate) * tanh(candidate)``; entries stay in (-1, 1)."""
        x = concat([as_tensor(h), as_tensor(z), as_tensor(a)], axis=1)
        return self.gate_net(params, x) * self.cand_net(params, x)

    def decode_heads(self, params, h, z) -> tuple[Tensor, Tensor, Tensor]:
        feat = concat([as_tensor(h), as_tensor(z)], axis=1)
        return (self.obs_head(params, feat),
                self.rew_head(params, feat).reshape(-1),
                self.cost_head(params, feat).reshape(-1))


@dataclass
class FilterOutput:
    h: np.ndarray          # (B, L, h_dim) recurrent state before observing o_t
    z: np.ndarray          # (B, L, z_dim) posterior sample
    z_mean: np.ndarray     # (B, L, z_dim)
    kl: float
    recon: float
    reward_err: float
    cost_err: float


def world_model_loss(model: WorldModel, params: dict, batch: SequenceBatch, rng: np.random.Generator,
                     beta_kl: float = 1.0, free_bits: float = 1.0) -> tuple[Tensor, FilterOutput]:
    """Reconstruction + reward + cost + free-bits KL, summed over time, averaged over batch.

    Heads evaluated at the state reached after ``a_t`` predict ``r_t`` and ``c_t``.
    """
    B, L = batch.batch, batch.length
    h = Tensor(np.zeros((B, model.h_dim)))
    total = Tensor(0.0)
    hs, zs, zms = [], [], []
    kl_sum = recon_sum = rew_sum = cost_sum = 0.0
    for t in range(L):
        post = model.posterior(params, batch.obs[:, t], h)
        prior = model.prior(params, h)
        z = post.rsample(rng.standard_normal((B, model.z_dim)))
        kl = kl_divergence(post, prior)
        kl_term = (kl - free_bits).relu() + free_bits  # max(KL, free_bits)
        o_hat, r_hat, c_hat = model.decode_heads(params, h, z)
        recon = (o_hat - batch.obs[:, t]).square().sum(axis=1)
        step = recon + beta_kl * kl_term
        if t > 0:
            r_err = (r_hat - batch.rew[:, t - 1]).square()
            c_err = (c_hat - batch.cost[:, t - 1]).square()
            step = step + r_err + c_err
            rew_sum += float(r_err.data.mean())
            cost_sum += float(c_err.data.mean())
        total = total + step.mean()
        kl_sum += float(kl.data.mean())
        recon_sum += float(recon.data.mean())
        hs.append(h.data)
        zs.append(z.data)
        zms.append(post.mean.data)
        h = model.recurrent_step(params, h, z, batch.act[:, t])
    if not np.isfinite(total.data):
        raise FloatingPointError("non-finite world-model loss")
    out = FilterOutput(h=np.stack(hs, 1), z=np.stack(zs, 1), z_mean=np.stack(zms, 1),
                       kl=kl_sum / L, recon=recon_sum / L,
                       reward_err=rew_sum / max(L - 1, 1), cost_err=cost_sum / max(L - 1, 1))
    return total, out


@dataclass
class ImaginedTrajectory:
    h: list          # H + 1 Tensors (N, h_dim)
    z: list          # H + 1 Tensors (N, z_dim)
    actions: list    # H Tensors (N, act_dim)
    log_probs: list  # H Tensors (N,)
    rewards: list    # H Tensors (N,)
    costs: list      # H Tensors (N,)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def features(self, tau: int) -> Tensor:
        return concat([self.h[tau], self.z[tau]], axis=1)


def imagine(model: WorldModel, params, start: LatentState, policy_fn, horizon: int,
            rng: np.random.Generator) -> ImaginedTrajectory:
    """Roll the prior forward ``horizon`` steps under ``policy_fn(features, rng)``.

    ``policy_fn`` returns ``(action, log_prob)`` Tensors.  Nothing outside the
    model and the generator is touched.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    h, z = as_tensor(start.h), as_tensor(start.z)
    traj = ImaginedTrajectory([h], [z], [], [], [], [])
    for _ in range(horizon):
        a, logp = policy_fn(concat([h, z], axis=1), rng)
        h = model.recurrent_step(params, h, z, a)
        z = model.prior(params, h).sample(rng)
        _, r_hat, c_hat = model.decode_heads(params, h, z)
        traj.h.append(h)
        traj.z.append(z)
        traj.actions.append(a)
        traj.log_probs.append(logp)
        traj.rewards.append(r_hat)
        traj.costs.append(c_hat)
    return traj
