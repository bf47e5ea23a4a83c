"""CVaR-constrained soft actor-critic trained inside a latent world model.

One epoch of :func:`train_epoch` runs, in order: world-model and denoiser
updates on replayed sequences, behavior learning on imagined rollouts
(reward critics, safety critic, actor with CVaR hinge and barrier terms,
entropy and safety multipliers), soft target updates, and finally one
environment episode whose latents are proposed by the diffusion sampler.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, minimum, stop_gradient
from .core import (
    Episode,
    ReplayBuffer,
    RiskBudget,
    TransitionStep,
    derive_rng,
    discounted_return,
    push_episode,
    sample_sequence_batch,
)
from .critic import SafetyCritic, critic_losses, cvar_coefficient
from .diffusion import Denoiser, DiffusionSchedule, denoiser_loss, diffusion_sample_candidates, select_candidate
from .nn import MLP, Adam, ParamStore, collect_grads, load_params, polyak_update, save_params
from .world_model import LatentState, WorldModel, imagine, world_model_loss

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "Multipliers",
    "Policy",
    "TwinCritic",
    "Agent",
    "TrainingDivergence",
    "sample_action",
    "reward_critic_loss",
    "policy_loss",
    "sac_policy_loss",
    "entropy_multiplier_loss",
    "safety_multiplier_loss",
    "update_beta",
    "update_kappa",
    "barrier_check",
    "imagined_barrier_penalty",
    "train_epoch",
    "seed_buffer",
    "run_episode",
]

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_LOG_2PI = math.log(2.0 * math.pi)


class TrainingDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr_reward: float = 3e-4
    lr_policy: float = 3e-4
    lr_cost: float = 3e-4
    lr_var: float = 3e-4
    lr_beta: float = 1e-3
    lr_kappa: float = 0.05
    lr_model: float = 1e-3
    lr_denoiser: float = 1e-3
    tau: float = 0.01
    gamma: float = 0.99
    horizon: int = 5
    batch_size: int = 16
    seq_len: int = 8
    updates_per_epoch: int = 20
    seed_episodes: int = 5
    epochs: int = 300
    risk: RiskBudget = field(default_factory=RiskBudget)
    rho: float = 1.0
    beta_init: float = 0.1
    kappa_init: float = 0.0
    barrier: bool = True
    barrier_weight: float = 6.0
    variant: str = "safe"            # "safe" or "sac" (unconstrained ablation)
    behavior_source: str = "imagination"   # or "replay"
    diffusion: bool = True
    n_candidates: int = 8
    diffusion_steps: int = 5
    explore_start: float = 0.1
    explore_end: float = 0.01
    h_dim: int = 64
    z_dim: int = 16
    hidden: int = 64
    min_std: float = 0.1
    beta_kl: float = 1.0
    free_bits: float = 1.0
    grad_clip: float | None = 100.0
    buffer_capacity: int = 100_000
    seed: int = 0

    def __post_init__(self):
        rates = ("lr_reward", "lr_policy", "lr_cost", "lr_var", "lr_beta", "lr_kappa", "lr_model", "lr_denoiser")
        bad = [r for r in rates if getattr(self, r) < 0]
        if bad:
            raise ValueError(f"learning rates must be >= 0: {bad}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.variant not in ("safe", "sac"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.behavior_source not in ("imagination", "replay"):
            raise ValueError(f"unknown behavior_source {self.behavior_source!r}")
        if self.horizon < self.risk.barrier_degree_m + 1 and self.barrier:
            raise ValueError("imagination horizon must exceed the barrier degree")

    @property
    def constrained(self) -> bool:
        return self.variant == "safe"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("risk"), dict):
            d["risk"] = RiskBudget(**d["risk"])
        return cls(**d)

    def unconstrained(self) -> "TrainConfig":
        return replace(self, variant="sac", barrier=False, rho=0.0, kappa_init=0.0)


@dataclass
class Multipliers:
    beta: float = 0.1
    kappa: float = 0.0
    penalty_rho: float = 1.0

    def __post_init__(self):
        if not self.beta > 0 or self.kappa < 0 or self.penalty_rho < 0:
            raise ValueError("need beta > 0, kappa >= 0, penalty_rho >= 0")


# -- networks -------------------------------------------------------------------

class Policy:
    """Tanh-squashed Gaussian policy."""

    def __init__(self, in_dim: int, act_dim: int, hidden: tuple[int, ...] = (64, 64)):
        self.act_dim = act_dim
        self.net = MLP("pi", (in_dim, *hidden, 2 * act_dim), "tanh", out_scale=0.1)

    def init(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        self.net.init(store, rng)
        return store

    def head(self, params, feat) -> tuple[Tensor, Tensor]:
        out = self.net(params, feat)
        mean = out[:, : self.act_dim]
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (out[:, self.act_dim:].tanh() + 1.0)
        return mean, log_std

    def sample(self, params, feat, noise: np.ndarray) -> tuple[Tensor, Tensor]:
        """Reparameterized action and its exact log-density after the squash."""
        mean, log_std = self.head(params, feat)
        u = mean + log_std.exp() * noise
        action = u.tanh()
        gauss = (-0.5 * noise**2 - 0.5 * _LOG_2PI) - log_std
        # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
        squash = 2.0 * (math.log(2.0) - u - (-2.0 * u).softplus())
        return action, (gauss - squash).sum(axis=1)

    def deterministic(self, params, feat) -> tuple[Tensor, Tensor]:
        return self.sample(params, feat, np.zeros((feat.shape[0], self.act_dim)))


class TwinCritic:
    def __init__(self, in_dim: int, act_dim: int, hidden: tuple[int, ...] = (64, 64)):
        self.q1 = MLP("q1", (in_dim + act_dim, *hidden, 1), "tanh")
        self.q2 = MLP("q2", (in_dim + act_dim, *hidden, 1), "tanh")

    def init(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        self.q1.init(store, rng)
        self.q2.init(store, rng)
        return store

    def __call__(self, params, feat, act) -> tuple[Tensor, Tensor]:
        x = concat([feat, act], axis=1)
        return self.q1(params, x).reshape(-1), self.q2(params, x).reshape(-1)


def sample_action(policy: Policy, params, state_features, deterministic: bool, rng: np.random.Generator,
                  explore_noise: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Numpy-level action sampling; exploration noise is added after the squash."""
    feat = Tensor(np.atleast_2d(state_features))
    if not np.all(np.isfinite(feat.data)):
        raise ValueError("state features must be finite")
    if isinstance(params, ParamStore):
        params = params.const()
    if deterministic:
        a, logp = policy.deterministic(params, feat)
    else:
        a, logp = policy.sample(params, feat, rng.standard_normal((feat.shape[0], policy.act_dim)))
    action = a.data
    if explore_noise > 0:
        action = np.clip(action + explore_noise * rng.standard_normal(action.shape), -1.0, 1.0)
    return action, logp.data


# -- losses ---------------------------------------------------------------------

def reward_critic_loss(batch: dict, critics: TwinCritic, params, target_params, beta: float, gamma: float) -> Tensor:
    """Soft Bellman MSE summed over both critics.

    ``batch`` carries ``feat, act, reward, next_feat, next_act, next_logp, done``
    where the next action was freshly drawn from the current policy.
    """
    q1_t, q2_t = critics(target_params, Tensor(batch["next_feat"]), Tensor(batch["next_act"]))
    soft_next = np.minimum(q1_t.data, q2_t.data) - beta * np.asarray(batch["next_logp"])
    y = np.asarray(batch["reward"]) + gamma * np.where(batch["done"], 0.0, soft_next)
    q1, q2 = critics(params, Tensor(batch["feat"]), Tensor(batch["act"]))
    loss = (q1 - y).square().mean() + (q2 - y).square().mean()
    if not np.isfinite(loss.data):
        raise TrainingDivergence("non-finite reward-critic loss")
    return loss


def sac_policy_loss(feat, policy: Policy, params, critics: TwinCritic, critic_params, beta: float,
                    noise: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
    """Unconstrained SAC actor loss ``E[beta log pi - min(Q1, Q2)]``."""
    action, logp = policy.sample(params, feat, noise)
    q1, q2 = critics(critic_params, feat, action)
    loss = (beta * logp - minimum(q1, q2)).mean()
    return loss, action, logp


@dataclass
class PolicyLossInfo:
    log_probs: np.ndarray
    gammas: np.ndarray
    hinge_mean: float


def policy_loss(feat, policy: Policy, params, critics: TwinCritic, critic_params,
                safety: SafetyCritic, safety_params, mult: Multipliers, budget: RiskBudget,
                noise: np.ndarray) -> tuple[Tensor, PolicyLossInfo]:
    """SAC actor loss plus augmented-Lagrangian CVaR terms.

    ``beta log pi - min Q + kappa (Gamma - d)+ + rho/2 ((Gamma - d)+)^2``
    averaged over states, with a fresh reparameterized action per state.
    """
    action, logp = policy.sample(params, feat, noise)
    q1, q2 = critics(critic_params, feat, action)
    gam = safety.gamma(safety_params, feat, action, budget.alpha)
    hinge = (gam - budget.d).relu()
    loss = ((mult.beta * logp - minimum(q1, q2)).mean()
            + mult.kappa * hinge.mean()
            + (0.5 * mult.penalty_rho) * hinge.square().mean())
    if not np.isfinite(loss.data):
        raise TrainingDivergence("non-finite policy loss")
    return loss, PolicyLossInfo(logp.data, gam.data, float(hinge.data.mean()))


def entropy_multiplier_loss(beta: float, log_probs, entropy_floor: float) -> tuple[float, float]:
    """``J_e = -beta E[log pi + H_0]`` and its derivative in beta."""
    slack = float(np.mean(log_probs) + entropy_floor)
    return -beta * slack, -slack


def update_beta(beta: float, log_probs, entropy_floor: float, lr: float) -> float:
    _, grad = entropy_multiplier_loss(beta, log_probs, entropy_floor)
    return max(beta - lr * grad, 1e-6)


def safety_multiplier_loss(kappa: float, gamma_values, d: float) -> tuple[float, float]:
    """``J_s = -kappa E[Gamma - d]`` and its derivative in kappa."""
    excess = float(np.mean(gamma_values) - d)
    return -kappa * excess, -excess


def update_kappa(kappa: float, gamma_values, d: float, lr: float) -> float:
    _, grad = safety_multiplier_loss(kappa, gamma_values, d)
    return max(kappa - lr * grad, 0.0)


def barrier_check(gamma_t: float, gamma_t_plus_m: float, decay: float) -> bool:
    """Discrete barrier condition ``h(t+m) <= (1 - decay) h(t)``."""
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must lie in (0, 1)")
    return gamma_t_plus_m <= (1.0 - decay) * gamma_t


def imagined_barrier_penalty(traj, safety: SafetyCritic, safety_params, alpha: float, decay: float,
                             m: int, offset: float = 0.0) -> Tensor:
    """Mean hinge ``(h_{t+m} - (1 - decay) h_t)+`` with ``h = Gamma - offset``.

    ``Gamma`` is evaluated at each imagined (state, action) pair, so the
    penalty differentiates through the critic heads, the actions and, when
    the rollout was recorded with gradients, the latent dynamics.
    """
    H = traj.horizon
    if H < m + 1:
        raise ValueError(f"trajectory of {H} actions is too short for barrier degree {m}")
    hs = [safety.gamma(safety_params, traj.features(t), traj.actions[t], alpha) - offset for t in range(H)]
    terms = [(hs[t + m] - (1.0 - decay) * hs[t]).relu().mean() for t in range(H - m)]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


# -- the agent --------------------------------------------------------------------

@dataclass
class UpdateStats:
    wm_loss: float
    kl: float
    denoiser: float
    j_r: float
    j_c: float
    j_v: float
    j_pi: float
    barrier: float
    mean_gamma: float
    entropy: float


class Agent:
    """All learned components plus their optimizers and multipliers."""

    STORES = ("wm", "den", "pi", "q", "q_target", "c", "c_target")

    def __init__(self, obs_dim: int, act_dim: int, config: TrainConfig):
        self.config = config
        self.obs_dim, self.act_dim = obs_dim, act_dim
        rng = derive_rng(config.seed, "init")
        hid = (config.hidden, config.hidden)
        self.model = WorldModel(obs_dim, act_dim, config.h_dim, config.z_dim, config.hidden, config.min_std)
        self.denoiser = Denoiser(config.z_dim, config.h_dim + config.z_dim, config.hidden)
        self.policy = Policy(self.model.feat_dim, act_dim, hid)
        self.critics = TwinCritic(self.model.feat_dim, act_dim, hid)
        self.safety = SafetyCritic(self.model.feat_dim, act_dim, hid)
        self.schedule = DiffusionSchedule.linear(config.diffusion_steps)
        self.wm = self.model.init(rng)
        self.den = self.denoiser.init(rng)
        self.pi = self.policy.init(rng)
        self.q = self.critics.init(rng)
        self.c = self.safety.init(rng)
        self.q_target = self.q.copy()
        self.c_target = self.c.copy()
        self.mult = Multipliers(config.beta_init, config.kappa_init, config.rho)
        clip = config.grad_clip
        self.opt = {k: Adam(clip_norm=clip) for k in ("wm", "den", "pi", "q", "qc", "vc")}
        self.update_rng = derive_rng(config.seed, "update")
        self.act_rng = derive_rng(config.seed, "act")

    # -- helpers -----------------------------------------------------------
    def _policy_fn(self, params):
        def fn(feat, rng):
            return self.policy.sample(params, feat, rng.standard_normal((feat.shape[0], self.act_dim)))
        return fn

    def _step(self, store: ParamStore, opt: str, tracked: dict, lr: float, names=None) -> None:
        grads = collect_grads(tracked)
        if names is not None:
            grads = {k: g for k, g in grads.items() if k.startswith(names)}
        self.opt[opt].step(store, grads, lr)

    def _behavior_batch(self, filt, batch, rng):
        """Transitions, start features and (optionally) a recorded rollout."""
        cfg = self.config
        N = filt.h.shape[0] * filt.h.shape[1]
        traj = None
        pi_params = self.pi.track()
        if cfg.behavior_source == "imagination":
            start = LatentState(filt.h.reshape(N, -1), filt.z.reshape(N, -1))
            rollout_params = pi_params if (cfg.barrier and cfg.constrained) else self.pi.const()
            traj = imagine(self.model, self.wm.const(), start, self._policy_fn(rollout_params), cfg.horizon, rng)
            feats = [traj.features(t).data for t in range(cfg.horizon + 1)]
            trans = {
                "feat": np.concatenate(feats[:-1]),
                "act": np.concatenate([a.data for a in traj.actions]),
                "reward": np.concatenate([r.data for r in traj.rewards]),
                "cost": np.concatenate([c.data for c in traj.costs]),
                "next_feat": np.concatenate(feats[1:]),
            }
            trans["done"] = np.zeros(len(trans["reward"]), dtype=bool)
        else:
            B, L = filt.h.shape[:2]
            feat = np.concatenate([filt.h, filt.z], axis=2)
            trans = {
                "feat": feat[:, :-1].reshape(B * (L - 1), -1),
                "act": batch.act[:, :-1].reshape(B * (L - 1), -1),
                "reward": batch.rew[:, :-1].reshape(-1),
                "cost": batch.cost[:, :-1].reshape(-1),
                "next_feat": feat[:, 1:].reshape(B * (L - 1), -1),
                "done": batch.done[:, :-1].reshape(-1) & batch.violation[:, :-1].reshape(-1),
            }
        return trans, traj, pi_params

    def update(self, buffer: ReplayBuffer) -> UpdateStats:
        cfg = self.config
        rng = self.update_rng
        batch = sample_sequence_batch(buffer, cfg.batch_size, cfg.seq_len, rng)

        wm_tracked = self.wm.track()
        wm_loss, filt = world_model_loss(self.model, wm_tracked, batch, rng, cfg.beta_kl, cfg.free_bits)
        wm_loss.backward()
        self._step(self.wm, "wm", wm_tracked, cfg.lr_model)

        B, L = batch.batch, batch.length
        z_clean = filt.z.reshape(B * L, -1)
        ctx = np.concatenate([filt.h, filt.z_mean], axis=2).reshape(B * L, -1)
        den_tracked = self.den.track()
        d_loss = denoiser_loss(self.denoiser, den_tracked, z_clean, ctx, self.schedule, rng)
        d_loss.backward()
        self._step(self.den, "den", den_tracked, cfg.lr_denoiser)

        trans, traj, pi_tracked = self._behavior_batch(filt, batch, rng)
        pi_const = self.pi.const()
        n_act, n_logp = self.policy.sample(pi_const, Tensor(trans["next_feat"]),
                                           rng.standard_normal((len(trans["next_feat"]), self.act_dim)))
        trans["next_act"], trans["next_logp"] = n_act.data, n_logp.data

        # critics
        q_tracked = self.q.track()
        j_r = reward_critic_loss(trans, self.critics, q_tracked, self.q_target.const(), self.mult.beta, cfg.gamma)
        j_r.backward()
        self._step(self.q, "q", q_tracked, cfg.lr_reward)

        c_tracked = self.c.track()
        j_c, j_v = critic_losses(trans, self.safety, c_tracked, self.c_target.const(), cfg.gamma)
        (j_c + j_v).backward()
        self._step(self.c, "qc", c_tracked, cfg.lr_cost, names="qc.")
        self._step(self.c, "vc", c_tracked, cfg.lr_var, names="vc.")

        # actor
        feat = Tensor(trans["feat"])
        noise = rng.standard_normal((len(trans["feat"]), self.act_dim))
        q_const, c_const = self.q.const(), self.c.const()
        barrier_val = 0.0
        if cfg.constrained:
            j_pi, info = policy_loss(feat, self.policy, pi_tracked, self.critics, q_const,
                                     self.safety, c_const, self.mult, cfg.risk, noise)
            total = j_pi
            if cfg.barrier and traj is not None:
                pen = imagined_barrier_penalty(traj, self.safety, c_const, cfg.risk.alpha,
                                               cfg.risk.barrier_decay, cfg.risk.barrier_degree_m,
                                               offset=cfg.risk.d)
                barrier_val = pen.item()
                total = total + cfg.barrier_weight * pen
            logp, gammas = info.log_probs, info.gammas
        else:
            j_pi, action, logp_t = sac_policy_loss(feat, self.policy, pi_tracked, self.critics, q_const,
                                                   self.mult.beta, noise)
            if not np.isfinite(j_pi.data):
                raise TrainingDivergence("non-finite policy loss")
            total = j_pi
            logp = logp_t.data
            gammas = self.safety.gamma(c_const, feat, Tensor(action.data), cfg.risk.alpha).data
        total.backward()
        self._step(self.pi, "pi", pi_tracked, cfg.lr_policy)

        # multipliers, in the order beta then kappa
        self.mult.beta = update_beta(self.mult.beta, logp, cfg.risk.entropy_floor, cfg.lr_beta)
        if cfg.constrained:
            self.mult.kappa = update_kappa(self.mult.kappa, gammas, cfg.risk.d, cfg.lr_kappa)

        polyak_update(self.q_target, self.q, cfg.tau)
        polyak_update(self.c_target, self.c, cfg.tau)
        return UpdateStats(
            wm_loss=wm_loss.item(), kl=filt.kl, denoiser=d_loss.item(), j_r=j_r.item(),
            j_c=j_c.item(), j_v=j_v.item(), j_pi=j_pi.item(), barrier=barrier_val,
            mean_gamma=float(np.mean(gammas)), entropy=float(-np.mean(logp)),
        )

    # -- acting -------------------------------------------------------------
    def initial_latent(self) -> np.ndarray:
        return np.zeros(self.config.h_dim)

    def choose_latent(self, obs: np.ndarray, h: np.ndarray, rng: np.random.Generator,
                      threshold: float) -> tuple[np.ndarray, dict]:
        """Posterior-conditioned diffusion candidates, screened by CVaR."""
        wm = self.wm.const()
        post = self.model.posterior(wm, Tensor(obs[None]), Tensor(h[None]))
        if not self.config.diffusion:
            z = post.sample(rng).data[0]
            return z, {"n_safe": None}
        ctx = np.concatenate([h, post.mean.data[0]])
        step = self.denoiser.reverse_step(self.den.const(), self.schedule)
        cands = diffusion_sample_candidates(ctx, self.config.n_candidates, self.schedule, rng, step, self.config.z_dim)
        scores = self.score_latents(h, cands)
        idx, z = select_candidate(cands, lambda _: scores["q"], lambda _: scores["gamma"], threshold)
        return z, {"n_safe": int(np.sum(scores["gamma"] <= threshold)), "gamma": float(scores["gamma"][idx])}

    def score_latents(self, h: np.ndarray, zs: np.ndarray) -> dict:
        feat = Tensor(np.concatenate([np.repeat(h[None], len(zs), 0), zs], axis=1))
        a, _ = self.policy.deterministic(self.pi.const(), feat)
        q1, q2 = self.critics(self.q.const(), feat, a)
        g = self.safety.gamma(self.c.const(), feat, a, self.config.risk.alpha)
        return {"q": np.minimum(q1.data, q2.data), "gamma": g.data}

    def next_latent(self, h, z, a) -> np.ndarray:
        return self.model.recurrent_step(self.wm.const(), Tensor(h[None]), Tensor(z[None]), Tensor(a[None])).data[0]

    # -- persistence --------------------------------------------------------
    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in self.STORES:
            save_params(getattr(self, name), directory / name)
        meta = {"config": self.config.to_dict(), "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "multipliers": asdict(self.mult)}
        (directory / "agent.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Agent":
        directory = Path(directory)
        meta = json.loads((directory / "agent.json").read_text())
        agent = cls(meta["obs_dim"], meta["act_dim"], TrainConfig.from_dict(meta["config"]))
        for name in cls.STORES:
            getattr(agent, name).load_from(load_params(directory / name))
        agent.mult = Multipliers(**meta["multipliers"])
        return agent


# -- environment interaction --------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: Episode
    infos: list
    n_screened: int = 0


def run_episode(agent: Agent, env, seed: int, rng: np.random.Generator, explore_noise: float = 0.0,
                deterministic: bool = False, screen: bool | None = None) -> EpisodeRecord:
    """Roll one episode with diffusion-proposed latents feeding the policy."""
    cfg = agent.config
    if screen is None:
        screen = cfg.constrained
    obs = env.reset(seed)
    h = agent.initial_latent()
    steps, infos = [], []
    time_limit = env.time_limit
    n_screened = 0
    for t in range(time_limit):
        remaining = (time_limit - t) / time_limit
        threshold = cfg.risk.d * remaining if screen else math.inf
        z, sel = agent.choose_latent(obs, h, rng, threshold)
        if sel.get("n_safe") == 0:
            n_screened += 1
        feat = np.concatenate([h, z])
        action, _ = sample_action(agent.policy, agent.pi, feat, deterministic, rng, explore_noise)
        action = action[0]
        next_obs, reward, cost, violation, done, info = env.step(action)
        steps.append(TransitionStep(obs, action, reward, cost, done, violation))
        infos.append(info)
        h = agent.next_latent(h, z, action)
        obs = next_obs
        if done:
            break
    progress = getattr(infos[-1], "progress", 0.0)
    route_len = getattr(env, "route_length", 0.0)
    frac = float(np.clip(progress / route_len, 0.0, 1.0)) if route_len else 0.0
    if infos[-1].reached_goal:
        frac = 1.0
    ep = Episode(steps, seed=seed, route_length_m=route_len, completed_fraction=frac)
    return EpisodeRecord(ep, infos, n_screened)


def seed_buffer(buffer: ReplayBuffer, env, n_episodes: int, seed: int) -> ReplayBuffer:
    """Fill the buffer with uniformly random-action episodes."""
    rng = derive_rng(seed, "seed-episodes")
    for i in range(n_episodes):
        obs = env.reset(int(rng.integers(2**31)))
        steps = []
        for _ in range(env.time_limit):
            a = rng.uniform(-1.0, 1.0, size=env.act_dim)
            next_obs, r, c, v, done, _ = env.step(a)
            steps.append(TransitionStep(obs, a, r, c, done, v))
            obs = next_obs
            if done:
                break
        push_episode(buffer, Episode(steps, seed=i))
    return buffer


def exploration_scale(config: TrainConfig, epoch: int) -> float:
    if config.epochs <= 1:
        return config.explore_start
    frac = min(epoch / (config.epochs - 1), 1.0)
    return config.explore_start + (config.explore_end - config.explore_start) * frac


def train_epoch(agent: Agent, buffer: ReplayBuffer, env, config: TrainConfig | None = None, epoch: int = 0) -> dict:
    """One outer iteration: ``updates_per_epoch`` updates, then one episode."""
    config = config or agent.config
    if len(buffer) == 0:
        raise ValueError("buffer must be seeded with random episodes first")
    stats = []
    for _ in range(config.updates_per_epoch):
        try:
            stats.append(agent.update(buffer))
        except FloatingPointError as exc:
            raise TrainingDivergence(f"epoch {epoch}: {exc}") from exc
    env_seed = int(derive_rng(config.seed, "env", epoch).integers(2**31))
    ep_rng = derive_rng(config.seed, "interact", epoch)
    rec = run_episode(agent, env, env_seed, ep_rng, explore_noise=exploration_scale(config, epoch))
    push_episode(buffer, rec.episode)

    def avg(name):
        return float(np.mean([getattr(s, name) for s in stats])) if stats else float("nan")

    ep = rec.episode
    return {
        "epoch": epoch,
        "J_R": avg("j_r"), "J_C": avg("j_c"), "J_V": avg("j_v"), "J_pi": avg("j_pi"),
        "KL": avg("kl"), "wm_loss": avg("wm_loss"), "denoiser": avg("denoiser"),
        "barrier": avg("barrier"), "E_gamma": avg("mean_gamma"), "entropy": avg("entropy"),
        "kappa": agent.mult.kappa, "beta": agent.mult.beta,
        "return": ep.total_reward(),
        "cost": ep.discounted_cost(config.gamma),
        "violations": ep.violations(),
        "steps": len(ep),
    }
