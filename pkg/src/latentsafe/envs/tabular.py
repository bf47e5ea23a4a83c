"""Finite CMDPs small enough to solve exactly by trajectory enumeration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TabularCMDP",
    "CostMoments",
    "EnumerationBudgetError",
    "tabular_step",
    "exact_cost_distribution",
    "chain_mdp",
    "bernoulli_mdp",
    "random_cmdp",
]


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass
class TabularCMDP:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray      # (S, A)
    cost: np.ndarray        # (S, A)
    gamma: float
    horizon: int
    terminal: np.ndarray    # (S,) bool

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.cost = np.asarray(self.cost, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        S, A = self.cost.shape
        if self.transition.shape != (S, A, S) or self.reward.shape != (S, A) or self.terminal.shape != (S,):
            raise ValueError("inconsistent table shapes")
        if np.any(self.transition < 0) or np.max(np.abs(self.transition.sum(-1) - 1.0)) > 1e-12:
            raise ValueError("each transition row must be a probability vector (tolerance 1e-12)")
        if np.any(self.cost < 0):
            raise ValueError("costs must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[1]


def tabular_step(mdp: TabularCMDP, s: int, a: int, rng: np.random.Generator, t: int = 0):
    """One transition from ``s`` under ``a`` at time ``t``: ``(s', r, c, done)``."""
    if not 0 <= s < mdp.n_states:
        raise IndexError(f"state {s} out of range [0, {mdp.n_states})")
    if not 0 <= a < mdp.n_actions:
        raise IndexError(f"action {a} out of range [0, {mdp.n_actions})")
    s_next = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
    done = bool(mdp.terminal[s_next]) or t + 1 >= mdp.horizon
    return s_next, float(mdp.reward[s, a]), float(mdp.cost[s, a]), done


@dataclass
class CostMoments:
    """Moments of the discounted cost return from one start state."""

    q_sa: np.ndarray   # (A,) mean given the first action
    v_sa: np.ndarray   # (A,) variance given the first action
    q_s: float         # mean with the first action drawn from the policy
    v_s: float
    n_paths: int


def _path_count(mdp: TabularCMDP, policy: np.ndarray) -> np.ndarray:
    """Number of positive-probability paths from each (s, a) at t = 0."""
    branch = (mdp.transition > 0)
    acts = (policy > 0)
    # paths[s] = number of continuations from state s at time t (s not terminal)
    paths = np.ones(mdp.n_states)
    for _ in range(mdp.horizon - 1):
        cont = np.where(mdp.terminal, 1.0, paths)
        per_sa = branch.astype(float) @ cont  # (S, A)
        paths = (acts * per_sa).sum(axis=1)
    cont = np.where(mdp.terminal, 1.0, paths)
    return branch.astype(float) @ cont


def exact_cost_distribution(mdp: TabularCMDP, s0: int, policy, budget: int = 1_000_000) -> CostMoments:
    """Enumerate every trajectory from ``s0`` and return exact cost-return moments."""
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy must be an (S, A) table of action probabilities")
    estimate = int(_path_count(mdp, policy)[s0].sum())
    if estimate > budget:
        raise EnumerationBudgetError(
            f"enumeration would visit about {estimate} paths, budget is {budget}"
        )
    q_sa = np.zeros(mdp.n_actions)
    v_sa = np.zeros(mdp.n_actions)
    n_paths = 0
    for a0 in range(mdp.n_actions):
        # live partial paths: current state, probability, accumulated discounted cost
        state = np.array([s0])
        prob = np.array([1.0])
        acc = np.array([0.0])
        action = np.array([a0])
        finished_p, finished_c = [], []
        for t in range(mdp.horizon):
            acc = acc + mdp.gamma**t * mdp.cost[state, action]
            p_next = mdp.transition[state, action]  # (N, S)
            idx, s_next = np.nonzero(p_next)
            prob = prob[idx] * p_next[idx, s_next]
            acc = acc[idx]
            stop = mdp.terminal[s_next] | (t + 1 >= mdp.horizon)
            finished_p.append(prob[stop])
            finished_c.append(acc[stop])
            state, prob, acc = s_next[~stop], prob[~stop], acc[~stop]
            if state.size == 0:
                break
            pi = policy[state]  # (N, A)
            idx, action = np.nonzero(pi)
            state, acc = state[idx], acc[idx]
            prob = prob[idx] * pi[idx, action]
        p = np.concatenate(finished_p)
        c = np.concatenate(finished_c)
        n_paths += p.size
        q_sa[a0] = np.sum(p * c)
        v_sa[a0] = max(np.sum(p * c * c) - q_sa[a0] ** 2, 0.0)
    pi0 = policy[s0]
    q_s = float(pi0 @ q_sa)
    v_s = float(max(pi0 @ (v_sa + q_sa**2) - q_s**2, 0.0))
    return CostMoments(q_sa=q_sa, v_sa=v_sa, q_s=q_s, v_s=v_s, n_paths=n_paths)


def chain_mdp(n_steps: int = 3, cost: float = 1.0, gamma: float = 0.9) -> TabularCMDP:
    """Deterministic chain 0 -> 1 -> ... -> n_steps (terminal), one action."""
    S = n_steps + 1
    P = np.zeros((S, 1, S))
    for s in range(S - 1):
        P[s, 0, s + 1] = 1.0
    P[S - 1, 0, S - 1] = 1.0
    c = np.full((S, 1), cost)
    c[S - 1] = 0.0
    terminal = np.zeros(S, dtype=bool)
    terminal[S - 1] = True
    return TabularCMDP(P, np.zeros((S, 1)), c, gamma, n_steps, terminal)


def bernoulli_mdp(gamma: float = 0.9) -> tuple[TabularCMDP, np.ndarray]:
    """One decision with costs 0 and 1, taken uniformly; returns (mdp, policy)."""
    P = np.zeros((2, 2, 2))
    P[:, :, 1] = 1.0
    c = np.array([[0.0, 1.0], [0.0, 0.0]])
    mdp = TabularCMDP(P, np.zeros((2, 2)), c, gamma, 1, np.array([False, True]))
    return mdp, np.full((2, 2), 0.5)


def random_cmdp(rng: np.random.Generator, max_states: int = 6, max_actions: int = 3,
                max_horizon: int = 6, max_successors: int = 2) -> tuple[TabularCMDP, np.ndarray]:
    """Random sparse CMDP and a random stochastic policy over it."""
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    H = int(rng.integers(1, max_horizon + 1))
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            k = int(rng.integers(1, max_successors + 1))
            succ = rng.choice(S, size=k, replace=False)
            P[s, a, succ] = rng.dirichlet(np.ones(k))
            P[s, a] /= P[s, a].sum()
    cost = rng.uniform(0.0, 1.0, size=(S, A)) * (rng.random((S, A)) < 0.7)
    reward = rng.normal(size=(S, A))
    terminal = rng.random(S) < 0.2
    terminal[0] = False
    policy = rng.dirichlet(np.ones(A), size=S)
    gamma = float(rng.uniform(0.5, 0.99))
    return TabularCMDP(P, reward, cost, gamma, H, terminal), policy
