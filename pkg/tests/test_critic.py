import csv
import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from latentsafe.critic import (
    ConvergenceError,
    GaussianCostDistribution,
    SafetyCritic,
    bellman_cost_operator,
    critic_losses,
    cvar,
    fit_tabular_critic,
    q_c_target,
    v_c_target,
    w2_distance_gaussian,
)
from latentsafe.envs import bernoulli_mdp, chain_mdp, exact_cost_distribution, random_cmdp
from latentsafe.nn import gradient_check


def test_variance_clamped_on_construction():
    assert GaussianCostDistribution(1.0, -0.3).v_c == 0.0


def test_bellman_operator_examples():
    assert bellman_cost_operator(1.0, 0.9, 2.0) == pytest.approx(2.8)
    assert bellman_cost_operator(0.7, 0.0, 5.0) == 0.7
    assert bellman_cost_operator(0.0, 0.9, 0.0) == 0.0
    with pytest.raises(ValueError):
        bellman_cost_operator(-1.0, 0.9, 0.0)


def test_q_target_terminal_no_bootstrap():
    assert q_c_target(0.4, 0.9, 10.0, done=True) == 0.4
    assert q_c_target(0.4, 0.9, 10.0) == pytest.approx(9.4)


def test_v_target_zero_everywhere():
    assert v_c_target(0.0, 0.9, 0.0, 0.0, 0.0, 0.0) == 0.0


def test_v_target_negative_warns_and_clamps(caplog):
    with caplog.at_level(logging.WARNING, logger="latentsafe.critic"):
        out = v_c_target(0.0, 0.9, 2.0, 0.0, 0.0, 0.0)
    assert out == 0.0
    assert "negative" in caplog.text


def test_w2_examples():
    g = GaussianCostDistribution(1.0, 4.0)
    assert w2_distance_gaussian(g, g) == 0.0
    assert w2_distance_gaussian(g, GaussianCostDistribution(0.0, 1.0)) == pytest.approx(math.sqrt(2))
    assert w2_distance_gaussian(GaussianCostDistribution(0, 9), GaussianCostDistribution(0, 1)) == pytest.approx(2.0)


gauss = st.builds(GaussianCostDistribution, st.floats(-50, 50), st.floats(0, 100))


@given(gauss, gauss, gauss)
def test_w2_is_metric(a, b, c):
    assert w2_distance_gaussian(a, a) == 0.0
    ab = w2_distance_gaussian(a, b)
    assert ab >= 0.0
    assert ab == w2_distance_gaussian(b, a)
    assert w2_distance_gaussian(a, c) <= ab + w2_distance_gaussian(b, c) + 1e-9


def test_cvar_examples():
    assert cvar(1.3, 0.0, 0.2) == 1.3
    assert cvar(1.0, 4.0, 0.5) == pytest.approx(2.5957691, abs=1e-6)
    assert cvar(0.0, 1.0, 0.1) == pytest.approx(1.7549833, abs=1e-6)


def test_cvar_rejects_alpha():
    for a in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            cvar(0.0, 1.0, a)


@given(st.floats(-10, 10), st.one_of(st.just(0.0), st.floats(1e-8, 10)), st.floats(1e-3, 1 - 1e-3))
def test_cvar_dominates_mean(q, v, alpha):
    g = cvar(q, v, alpha)
    assert g >= q
    assert (g == q) == (v == 0.0)


@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(1e-3, 0.99), st.floats(1e-3, 0.99))
def test_cvar_decreasing_in_alpha(q, v, a1, a2):
    assume(abs(a1 - a2) > 1e-6)
    lo, hi = sorted((a1, a2))
    assert cvar(q, v, lo) > cvar(q, v, hi)


def test_cvar_tends_to_mean():
    assert cvar(2.0, 3.0, 1 - 1e-9) == pytest.approx(2.0, abs=1e-6)


def test_fit_tabular_examples():
    chain = fit_tabular_critic(chain_mdp(3, 1.0, 0.9), np.ones((4, 1)))
    assert chain.at(0, 0).q_c == pytest.approx(2.71, abs=1e-12)
    assert np.all(np.abs(chain.v) < 1e-12)
    mdp, pol = bernoulli_mdp()
    bern = fit_tabular_critic(mdp, pol)
    assert bern.state_moments(0) == pytest.approx((0.5, 0.25), abs=1e-12)
    zero = fit_tabular_critic(chain_mdp(3, 0.0), np.ones((4, 1)))
    assert np.all(zero.q == 0.0) and np.all(zero.v == 0.0)


def test_fit_tabular_nonconvergence():
    with pytest.raises(ConvergenceError):
        fit_tabular_critic(chain_mdp(4), np.ones((5, 1)), iterations=1)


@given(st.integers(0, 2**31 - 1))
def test_fit_matches_enumeration(seed):
    mdp, policy = random_cmdp(np.random.default_rng(seed))
    table = fit_tabular_critic(mdp, policy)
    for s in range(mdp.n_states):
        exact = exact_cost_distribution(mdp, s, policy)
        assert np.max(np.abs(table.q[0, s] - exact.q_sa)) <= 1e-8
        assert np.max(np.abs(table.v[0, s] - exact.v_sa)) <= 1e-8


def test_table_csv(tmp_path):
    mdp, pol = bernoulli_mdp()
    table = fit_tabular_critic(mdp, pol)
    table.to_csv(tmp_path / "c.csv", alpha=0.5)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["s", "a", "q_c", "v_c", "cvar@0.5"]
    assert len(rows) == 1 + 4


def _flat_critic(q_value, gamma):
    """Critic whose nets output constant Q = q_value and V ~ 0."""
    critic = SafetyCritic(3, 1, (4,), min_var=0.0)
    store = critic.init(np.random.default_rng(0))
    for k in store.names():
        store[k] = np.zeros_like(store[k])
    store["qc.b1"] = np.array([q_value])
    store["vc.b1"] = np.array([-60.0])
    rng = np.random.default_rng(1)
    n = 8
    batch = {"feat": rng.normal(size=(n, 3)), "act": rng.uniform(-1, 1, (n, 1)),
             "cost": np.full(n, q_value * (1 - gamma)), "next_feat": rng.normal(size=(n, 3)),
             "next_act": rng.uniform(-1, 1, (n, 1)), "done": np.zeros(n, bool)}
    return critic, store, batch


def test_losses_vanish_at_fixed_point():
    critic, store, batch = _flat_critic(2.0, 0.9)
    j_c, j_v = critic_losses(batch, critic, store.const(), store.const(), 0.9)
    assert j_c.item() <= 1e-10 and j_v.item() <= 1e-10


def test_losses_zero_with_zero_td_error_terminal():
    critic, store, batch = _flat_critic(0.5, 0.9)
    batch = dict(batch, cost=np.full(8, 0.5), done=np.ones(8, bool))
    j_c, j_v = critic_losses(batch, critic, store.const(), store.const(), 0.9)
    assert j_c.item() == pytest.approx(0.0, abs=1e-20) and j_v.item() <= 1e-10


def test_j_c_gradient_check():
    critic = SafetyCritic(3, 2, (5, 5))
    rng = np.random.default_rng(2)
    store, target = critic.init(rng), critic.init(rng)
    n = 6
    batch = {"feat": rng.normal(size=(n, 3)), "act": rng.uniform(-1, 1, (n, 2)), "cost": rng.uniform(0, 1, n),
             "next_feat": rng.normal(size=(n, 3)), "next_act": rng.uniform(-1, 1, (n, 2)), "done": np.zeros(n, bool)}
    names = [k for k in store.names() if k.startswith("qc.")]
    assert gradient_check(lambda p: critic_losses(batch, critic, p, target.const(), 0.9)[0], store, names=names) <= 1e-4


def test_variance_head_nonnegative():
    critic = SafetyCritic(3, 2)
    store = critic.init(np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(50, 3)) * 20
    a = np.random.default_rng(5).uniform(-1, 1, (50, 2))
    assert np.all(critic.v(store.const(), x, a).data >= 0)


def test_non_finite_loss_raises():
    critic, store, batch = _flat_critic(1.0, 0.9)
    batch = dict(batch, cost=np.full(8, np.inf))
    with pytest.raises(FloatingPointError):
        critic_losses(batch, critic, store.const(), store.const(), 0.9)
