"""Self-check suites run by ``latentsafe oracle-check``.

Each suite compares a library routine with an independent computation
(enumeration, Monte-Carlo, quadrature, finite differences, brute force or
hand-worked arithmetic) and reports pass/fail with the worst deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .agent import (
    Multipliers,
    Policy,
    TwinCritic,
    entropy_multiplier_loss,
    imagined_barrier_penalty,
    policy_loss,
    reward_critic_loss,
)
from .autodiff import Tensor
from .core import Episode, ReplayBuffer, RiskBudget, TransitionStep, push_episode, sample_sequence_batch
from .critic import GaussianCostDistribution, SafetyCritic, critic_losses, cvar, fit_tabular_critic, w2_distance_gaussian
from .diffusion import Denoiser, DiffusionSchedule, denoiser_loss, select_candidate
from .envs.tabular import bernoulli_mdp, chain_mdp, exact_cost_distribution, random_cmdp
from .metrics import (
    EpisodeLog,
    collision_occurrences,
    collision_rate,
    driving_score,
    infraction_score,
    infractions_per_km,
    route_completion,
    time_to_collision,
)
from .nn import ParamStore, gradient_check
from .world_model import LatentState, WorldModel, imagine, world_model_loss

__all__ = ["SuiteResult", "SUITES", "run_suites", "gradient_cases", "tail_mean", "w2_quadrature"]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def critic_vs_enumeration(n_mdps: int = 25, seed: int = 0, tol: float = 1e-8) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_mdps):
        mdp, policy = random_cmdp(rng)
        table = fit_tabular_critic(mdp, policy)
        for s in range(mdp.n_states):
            exact = exact_cost_distribution(mdp, s, policy)
            worst = max(worst, np.max(np.abs(table.q[0, s] - exact.q_sa)), np.max(np.abs(table.v[0, s] - exact.v_sa)))
    return SuiteResult("critic-vs-enumeration", worst <= tol, f"sup-norm error {worst:.2e} over {n_mdps} CMDPs")


def tail_mean(q: float, v: float, alpha: float, n: int, rng: np.random.Generator) -> float:
    """Mean of the worst ``alpha`` fraction of ``n`` samples from N(q, v)."""
    x = q + math.sqrt(v) * rng.standard_normal(n)
    k = max(int(round(alpha * n)), 1)
    return float(np.partition(x, n - k)[n - k:].mean())


def cvar_vs_monte_carlo(n_triples: int = 100, n_samples: int = 1_000_000, seed: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    pinned = abs(cvar(1.0, 4.0, 0.5) - 2.5957691) <= 1e-6 and abs(cvar(0.0, 1.0, 0.1) - 1.7549833) <= 1e-6
    worst = 0.0
    for _ in range(n_triples):
        q, v, a = rng.uniform(0.5, 5.0), rng.uniform(0.1, 4.0), rng.uniform(0.05, 0.95)
        worst = max(worst, abs(tail_mean(q, v, a, n_samples, rng) / cvar(q, v, a) - 1.0))
    return SuiteResult("cvar-vs-monte-carlo", pinned and worst <= 0.01,
                       f"pinned values {'ok' if pinned else 'WRONG'}; worst relative gap {worst:.2e}")


def w2_quadrature(g1: GaussianCostDistribution, g2: GaussianCostDistribution) -> float:
    """``sqrt(int_0^1 (F1^-1(u) - F2^-1(u))^2 du)`` integrated in normal-score space."""
    s1, s2 = math.sqrt(g1.v_c), math.sqrt(g2.v_c)

    def integrand(t):
        return ((g1.q_c - g2.q_c) + (s1 - s2) * t) ** 2 * norm.pdf(t)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    return math.sqrt(val)


def w2_vs_quadrature(n_pairs: int = 100, seed: int = 2) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        g1 = GaussianCostDistribution(rng.normal(0, 3), rng.uniform(0, 9))
        g2 = GaussianCostDistribution(rng.normal(0, 3), rng.uniform(0, 9))
        worst = max(worst, abs(w2_distance_gaussian(g1, g2) - w2_quadrature(g1, g2)))
    broken = 0
    for _ in range(1000):
        a, b, c = (GaussianCostDistribution(rng.normal(0, 3), rng.uniform(0, 9)) for _ in range(3))
        ab, bc, ac = w2_distance_gaussian(a, b), w2_distance_gaussian(b, c), w2_distance_gaussian(a, c)
        ok = (w2_distance_gaussian(a, a) == 0.0 and ab >= 0 and abs(ab - w2_distance_gaussian(b, a)) <= 1e-12
              and ac <= ab + bc + 1e-12)
        broken += not ok
    return SuiteResult("w2-vs-quadrature", worst <= 1e-6 and broken == 0,
                       f"max abs error {worst:.2e}; metric axioms broken on {broken}/1000 triples")


def _tiny_batch(rng, obs_dim=3, act_dim=2, length=4, batch=2) -> tuple:
    buf = ReplayBuffer(1000)
    for _ in range(2):
        steps = [TransitionStep(rng.normal(size=obs_dim), rng.uniform(-1, 1, act_dim), float(rng.normal()),
                                float(rng.uniform(0, 1))) for _ in range(length + 2)]
        push_episode(buf, Episode(steps))
    return sample_sequence_batch(buf, batch, length, 0)


def gradient_cases(seed: int = 3) -> list[tuple[str, Callable, ParamStore, list | None]]:
    """``(name, loss_fn, store, names)`` for every trained loss, on small random nets.

    ``names`` limits the check to the arrays a loss is meant to train; ``None``
    means all of them. J_V treats the online mean as a constant, so only the
    variance head is compared.
    """
    rng = np.random.default_rng(seed)
    F, A, N = 5, 2, 6
    feat = rng.normal(size=(N, F))
    act = rng.uniform(-0.9, 0.9, size=(N, A))
    next_feat = rng.normal(size=(N, F))
    next_act = rng.uniform(-0.9, 0.9, size=(N, A))
    hid = (6, 6)
    cases = []

    safety = SafetyCritic(F, A, hid)
    c_store, c_target = safety.init(rng), safety.init(rng)
    cbatch = {"feat": feat, "act": act, "cost": rng.uniform(0, 1, N), "next_feat": next_feat,
              "next_act": next_act, "done": np.zeros(N, bool)}
    vc_names = [n for n in c_store.names() if n.startswith("vc.")]
    cases.append(("J_C", lambda p: critic_losses(cbatch, safety, p, c_target.const(), 0.9)[0], c_store, None))
    cases.append(("J_V", lambda p: critic_losses(cbatch, safety, p, c_target.const(), 0.9)[1], c_store, vc_names))

    critics = TwinCritic(F, A, hid)
    q_store, q_target = critics.init(rng), critics.init(rng)
    rbatch = dict(cbatch, reward=rng.normal(size=N), next_logp=rng.normal(size=N))
    cases.append(("J_R", lambda p: reward_critic_loss(rbatch, critics, p, q_target.const(), 0.2, 0.9), q_store, None))

    policy = Policy(F, A, hid)
    pi_store = policy.init(rng)
    noise = rng.standard_normal((N, A))
    # budget below every Gamma so both hinge terms are active
    mult = Multipliers(beta=0.3, kappa=0.7, penalty_rho=1.5)
    budget = RiskBudget(d=0.0, alpha=0.3)
    c_big = c_store.copy()
    c_big["qc.b2"] = c_big["qc.b2"] + 2.0

    def j_pi(p):
        return policy_loss(Tensor(feat), policy, p, critics, q_store.const(), safety, c_big.const(),
                           mult, budget, noise)[0]

    cases.append(("J_pi", j_pi, pi_store, None))

    beta_store = ParamStore()
    beta_store.add("beta", np.array(0.4))
    logp = rng.normal(size=N)

    def j_e(p):
        # J_e is linear in beta; its closed-form slope is checked against the tape
        _, slope = entropy_multiplier_loss(0.0, logp, -1.0)
        return p["beta"] * slope

    cases.append(("J_e", j_e, beta_store, None))

    model = WorldModel(3, A, h_dim=4, z_dim=3, hidden=5)
    wm_store = model.init(rng)
    batch = _tiny_batch(rng)

    def wm_loss(p):
        return world_model_loss(model, p, batch, np.random.default_rng(11), free_bits=0.05)[0]

    cases.append(("world_model", wm_loss, wm_store, None))

    den = Denoiser(3, 4, hidden=6)
    den_store = den.init(rng)
    z_clean = rng.normal(size=(N, 3))
    ctx = rng.normal(size=(N, 4))
    sched = DiffusionSchedule.linear()
    cases.append(("denoiser", lambda p: denoiser_loss(den, p, z_clean, ctx, sched, np.random.default_rng(5)),
                  den_store, None))

    pol2 = Policy(model.feat_dim, A, (5,))
    pol2_store = pol2.init(rng)
    saf2 = SafetyCritic(model.feat_dim, A, (5,))
    saf2_store = saf2.init(rng)
    saf2_store["qc.b1"] = saf2_store["qc.b1"] + 1.0
    start = LatentState(rng.normal(size=(3, 4)) * 0.5, rng.normal(size=(3, 3)))

    def barrier(p):
        def fn(f, r):
            return pol2.sample(p, f, r.standard_normal((f.shape[0], A)))
        traj = imagine(model, wm_store.const(), start, fn, 3, np.random.default_rng(9))
        return imagined_barrier_penalty(traj, saf2, saf2_store.const(), 0.5, 0.5, 1, offset=0.0)

    cases.append(("barrier_penalty", barrier, pol2_store, None))
    return cases


def gradient_integrity(tol: float = 1e-4) -> SuiteResult:
    errs = {name: gradient_check(fn, store, names=names) for name, fn, store, names in gradient_cases()}
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    return SuiteResult("gradient-integrity", worst <= tol, detail)


def selection_brute_force(n_sets: int = 10_000, seed: int = 4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_sets):
        K = int(rng.integers(1, 9))
        cands = rng.normal(size=(K, 3))
        q = np.round(rng.normal(size=K), 1)
        g = rng.uniform(0, 2, size=K)
        d = float(rng.uniform(0, 2))
        idx, _ = select_candidate(cands, lambda _: q, lambda _: g, d)
        safe = [i for i in range(K) if g[i] <= d]
        if safe:
            best = max(q[i] for i in safe)
            want = min(i for i in safe if q[i] == best)
        else:
            want = min(range(K), key=lambda i: (g[i], i))
        bad += idx != want
    return SuiteResult("candidate-selection", bad == 0, f"{n_sets - bad}/{n_sets} agree")


def tabular_examples() -> SuiteResult:
    chain = exact_cost_distribution(chain_mdp(), 0, np.ones((4, 1)))
    mdp, pol = bernoulli_mdp()
    bern = exact_cost_distribution(mdp, 0, pol)
    table = fit_tabular_critic(mdp, pol)
    checks = [
        abs(chain.q_s - 2.71) < 1e-12 and abs(chain.v_s) < 1e-12,
        abs(bern.q_s - 0.5) < 1e-12 and abs(bern.v_s - 0.25) < 1e-12,
        np.allclose(table.state_moments(0), (0.5, 0.25), atol=1e-12),
    ]
    return SuiteResult("tabular-examples", all(checks), f"{sum(checks)}/{len(checks)} worked examples")


def metric_examples() -> SuiteResult:
    checks = [
        route_completion([EpisodeLog(1.0), EpisodeLog(0.5)]) == 75.0,
        abs(route_completion([EpisodeLog(1.0, off_route_distance=20.0)]) - 80.0) < 1e-12,
        infraction_score({}) == 1.0,
        infraction_score({"Ped": 1}) == 0.5,
        abs(infraction_score({"Ped": 1, "Red": 2}) - 0.245) < 1e-12,
        abs(driving_score([0.9, 0.8], [1.0, 0.5]) - 0.65) < 1e-12,
        collision_occurrences(2, 10) == 20.0,
        abs(infractions_per_km([2, 1], [10, 5]) - 0.2) < 1e-12,
        time_to_collision(10.0, 5.0) == 2.0,
        time_to_collision(10.0, -1.0) is None,
        time_to_collision(0.0, 3.0) == 0.0,
        collision_rate(2, 10) == 0.2,
    ]
    return SuiteResult("metric-examples", all(checks), f"{sum(checks)}/{len(checks)} worked examples")


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "critic-vs-enumeration": critic_vs_enumeration,
    "cvar-vs-monte-carlo": cvar_vs_monte_carlo,
    "w2-vs-quadrature": w2_vs_quadrature,
    "gradient-integrity": gradient_integrity,
    "candidate-selection": selection_brute_force,
    "tabular-examples": tabular_examples,
    "metric-examples": metric_examples,
}


def run_suites(names=None) -> list[SuiteResult]:
    out = []
    for name in names or SUITES:
        try:
            out.append(SUITES[name]())
        except Exception as exc:  # a crashing suite is a failing suite
            out.append(SuiteResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return out
