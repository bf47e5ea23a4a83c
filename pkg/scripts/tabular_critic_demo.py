"""
Distributional cost critic on a small tabular CMDP
==================================================

Fit the Gaussian cost critic by fixed-point iteration, compare it with
brute-force enumeration of every trajectory, then read off the CVaR of the
cost at a few risk levels.
"""

import numpy as np

from latentsafe.critic import cvar, fit_tabular_critic
from latentsafe.envs.tabular import exact_cost_distribution, random_cmdp

rng = np.random.default_rng(0)
mdp, policy = random_cmdp(rng)
print(f"{mdp.n_states} states, policy shape {policy.shape}")

# fixed-point fit of (Q_c, V_c) for every step, state and action
table = fit_tabular_critic(mdp, policy)

# enumeration gives the exact mean and variance of the discounted cost
for s in range(mdp.n_states):
    exact = exact_cost_distribution(mdp, s, policy)
    q, v = table.state_moments(s)
    print(f"state {s}: fitted mean {q:.6f} var {v:.6f}  exact mean {exact.q_s:.6f} var {exact.v_s:.6f}")

# a smaller alpha looks further into the tail
q, v = table.state_moments(0)
for alpha in (0.9, 0.5, 0.1, 0.01):
    print(f"alpha {alpha:<5} CVaR {cvar(q, v, alpha):.4f}")
