import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latentsafe.envs import (
    EnumerationBudgetError,
    HazardGridWorld,
    MovingObstacle,
    NavEnv,
    NavWorldConfig,
    TabularCMDP,
    bernoulli_mdp,
    chain_mdp,
    composite_reward,
    exact_cost_distribution,
    exploration_reward,
    lane_reward,
    nav_reset,
    nav_step,
    orientation_reward,
    preset,
    random_cmdp,
    tabular_step,
    velocity_reward,
)


# -- tabular ----------------------------------------------------------------

def test_tabular_step_deterministic_row():
    mdp = chain_mdp(1)
    s, r, c, done = tabular_step(mdp, 0, 0, np.random.default_rng(0))
    assert s == 1 and c == 1.0 and done


def test_tabular_step_split_matches_table():
    P = np.zeros((3, 1, 3))
    P[0, 0, 1:] = 0.5
    P[1:, 0, 1:] = 0.5
    mdp = TabularCMDP(P, np.zeros((3, 1)), np.zeros((3, 1)), 0.9, 2, np.zeros(3, bool))
    rng = np.random.default_rng(5)
    draws = np.array([tabular_step(mdp, 0, 0, rng)[0] for _ in range(100_000)])
    assert abs(np.mean(draws == 1) - 0.5) < 0.01


def test_tabular_step_bad_index():
    mdp = chain_mdp()
    with pytest.raises(IndexError):
        tabular_step(mdp, 0, 3, np.random.default_rng(0))


def test_tabular_rows_must_normalize():
    P = np.full((2, 1, 2), 0.5)
    P[0, 0] = (0.5, 0.5 + 1e-9)
    with pytest.raises(ValueError):
        TabularCMDP(P, np.zeros((2, 1)), np.zeros((2, 1)), 0.9, 2, np.zeros(2, bool))


def test_exact_cost_examples():
    chain = exact_cost_distribution(chain_mdp(3, 1.0, 0.9), 0, np.ones((4, 1)))
    assert chain.q_s == pytest.approx(2.71, abs=1e-12) and chain.v_s == pytest.approx(0.0, abs=1e-12)
    mdp, pol = bernoulli_mdp()
    bern = exact_cost_distribution(mdp, 0, pol)
    assert (bern.q_s, bern.v_s) == pytest.approx((0.5, 0.25), abs=1e-12)
    zero = chain_mdp(3, 0.0)
    m = exact_cost_distribution(zero, 0, np.ones((4, 1)))
    assert m.q_s == 0.0 and m.v_s == 0.0


def test_exact_cost_budget_error_reports_estimate():
    P = np.full((4, 3, 4), 0.25)
    mdp = TabularCMDP(P, np.zeros((4, 3)), np.ones((4, 3)), 0.9, 12, np.zeros(4, bool))
    with pytest.raises(EnumerationBudgetError, match="paths"):
        exact_cost_distribution(mdp, 0, np.full((4, 3), 1 / 3))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_cost_matches_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    mdp, policy = random_cmdp(rng)
    exact = exact_cost_distribution(mdp, 0, policy)
    n = 100_000
    totals = np.zeros(n)
    mc = np.random.default_rng(100 + seed)
    for i in range(n):
        s, t, acc = 0, 0, 0.0
        while True:
            a = mc.choice(mdp.n_actions, p=policy[s])
            s2, _, c, done = tabular_step(mdp, s, a, mc, t)
            acc += mdp.gamma**t * c
            t += 1
            s = s2
            if done:
                break
        totals[i] = acc
    se = totals.std() / math.sqrt(n) + 1e-12
    assert abs(totals.mean() - exact.q_s) <= 3 * se
    # the variance estimate has its own (larger) sampling error
    var_se = totals.var() * math.sqrt(2.0 / (n - 1)) + 1e-12
    assert abs(totals.var() - exact.v_s) <= 4 * var_se


# -- reward components ---------------------------------------------------------

def test_reward_examples():
    assert velocity_reward(10, 10, 0.5) == 1.0
    assert velocity_reward(8, 10, 0.5) == pytest.approx(0.5)
    assert velocity_reward(13, 10, 1.0) == pytest.approx(0.25)
    assert lane_reward(0, 2) == 1.0
    assert lane_reward(3, 2) == -1.0
    assert lane_reward(0.5, 2) == pytest.approx(0.75)
    assert orientation_reward(0.3, 0.3, 1.0) == 1.0
    assert orientation_reward(0.5, 0.0, 2.0) == pytest.approx(0.5)
    # 1/(1+pi) = 0.241453..., quoted to four places as 0.2415
    assert orientation_reward(math.pi, 0.0, 1.0) == pytest.approx(0.24150, abs=1e-4)
    assert orientation_reward(math.pi, 0.0, 1.0) == 1.0 / (1.0 + math.pi)
    assert exploration_reward(0, 0.3) == 1.0
    assert exploration_reward(2, 0.5) == pytest.approx(0.36788, abs=1e-5)
    assert exploration_reward(10, 0.1) == pytest.approx(0.36788, abs=1e-5)
    assert composite_reward((0.7, 0.1, 0.2, 0.3), (1, 0, 0, 0)) == 0.7
    assert composite_reward((1, 1, 1, 1), (0.4, 0.3, 0.2, 0.1)) == pytest.approx(1.0)
    assert composite_reward((1, -1, 0.5, 1), (0.4, 0.3, 0.2, 0.1)) == pytest.approx(0.3)


def test_orientation_wraps_on_circle():
    assert orientation_reward(math.pi - 0.1, -math.pi + 0.1, 1.0) == pytest.approx(1 / 1.2)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(1e-3, 10), st.floats(0, 10), st.floats(1e-3, 5),
       st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 1000), st.floats(0, 5))
def test_reward_ranges(v, vt, lam, d, dmax, th, ti, n, nu):
    assert 0 < velocity_reward(v, vt, lam) <= 1
    assert -1 <= lane_reward(d, dmax) <= 1
    assert 0 < orientation_reward(th, ti, lam) <= 1
    assert 0 <= exploration_reward(n, nu) <= 1


# -- navigation world ---------------------------------------------------------

def empty_config(**kw):
    base = dict(arena=(40.0, 40.0), route=((5.0, 20.0), (35.0, 20.0)), start_position_jitter=0.0,
                start_heading_jitter=0.0, walls_are_obstacles=True)
    base.update(kw)
    return NavWorldConfig(**base)


def test_far_from_obstacles_is_free():
    cfg = empty_config(static_obstacles=((20.0, 35.0, 0.5),))
    world, ego, _ = nav_reset(cfg, 0)
    _, _, cost, violation, done, info = nav_step(world, ego, [0.0, 0.0])
    assert cost == 0.0 and not violation and not done
    assert info.nearest_clearance > 1.0


def test_inside_hazard_disc_is_violation():
    cfg = empty_config(hazard_discs=((5.0, 20.0, 1.0),))
    world, ego, _ = nav_reset(cfg, 0)
    _, _, cost, violation, done, _ = nav_step(world, ego, [0.0, 0.0])
    assert violation and cost >= 1.0 and done


def test_zero_action_from_rest_stays_put():
    world, ego, _ = nav_reset(empty_config(), 0)
    start = ego.position.copy()
    _, _, cost, violation, _, _ = nav_step(world, ego, [0.0, 0.0])
    assert np.allclose(ego.position, start) and not violation and cost == 0.0


def test_step_before_reset():
    world, ego, _ = nav_reset(empty_config(), 0)
    world.ready = False
    with pytest.raises(RuntimeError):
        nav_step(world, ego, [0.0, 0.0])


def test_reset_is_seeded():
    cfg = preset("dynamic-2")
    _, _, o1 = nav_reset(cfg, 11)
    _, _, o2 = nav_reset(cfg, 11)
    assert np.array_equal(o1, o2)


def test_invalid_config_lists_errors():
    with pytest.raises(ValueError, match="d_max"):
        nav_reset(empty_config(d_max=0.0), 0)


def test_obstacle_displacement_speed_three():
    ob = MovingObstacle(path=((10.0, 5.0), (10.0, 35.0)), speed=3.0)
    cfg = empty_config(moving_obstacles=(ob,))
    world, ego, _ = nav_reset(cfg, 0)
    p0 = world.moving_positions()[0].copy()
    k = 7
    for _ in range(k):
        nav_step(world, ego, [0.0, 0.0])
    assert np.linalg.norm(world.moving_positions()[0] - p0) == pytest.approx(3.0 * k * cfg.dt, abs=1e-9)


@given(st.floats(0.5, 3.0), st.integers(1, 40))
def test_moving_obstacle_speed_exact(speed, k):
    ob = MovingObstacle(path=((10.0, 5.0), (10.0, 35.0)), speed=speed)
    cfg = empty_config(moving_obstacles=(ob,))
    world, ego, _ = nav_reset(cfg, 0)
    p0 = world.moving_positions()[0].copy()
    for _ in range(k):
        world.phases = world.phases + speed * cfg.dt
    dist = np.linalg.norm(world.moving_positions()[0] - p0)
    assert dist == pytest.approx(speed * k * cfg.dt, abs=1e-9)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=60), st.integers(0, 99))
def test_violation_iff_geometric_intersection(actions, seed):
    cfg = preset("obstacle-field")
    world, ego, _ = nav_reset(cfg, seed)
    W, H = cfg.arena
    for a in actions:
        _, _, _, violation, done, _ = nav_step(world, ego, a)
        p, r = ego.position, cfg.ego_radius
        hit = any(np.hypot(p[0] - x, p[1] - y) <= rr + r for x, y, rr in cfg.static_obstacles)
        hit |= any(np.hypot(p[0] - x, p[1] - y) <= rr + r for x, y, rr in cfg.hazard_discs)
        hit |= p[0] - r <= 0 or p[1] - r <= 0 or p[0] + r >= W or p[1] + r >= H
        assert violation == hit
        if done:
            break


def test_identical_inputs_identical_episode():
    cfg = preset("dynamic-3")
    acts = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))

    def roll():
        env = NavEnv(cfg)
        out = [np.concatenate([env.reset(4), [0.0, 0.0, 0.0]])]
        for a in acts:
            o, r, c, v, d, _ = env.step(a)
            out.append(np.concatenate([o, [r, c, v]]))
            if d:
                break
        return np.array(out)

    assert np.array_equal(roll(), roll())


@pytest.mark.parametrize("name", ["corridor", "intersection", "obstacle-field", "dynamic-1", "dynamic-2", "dynamic-3"])
def test_presets_reset(name):
    env = NavEnv(preset(name))
    obs = env.reset(0)
    assert obs.shape == (env.obs_dim,) and np.all(np.isfinite(obs))


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("town-5")


def test_hazard_grid_cost_inside_hazard():
    env = HazardGridWorld()
    env.reset(0)
    env.pos = np.array([4.5, 2.5])
    _, _, cost, violation, _, info = env.step([0.0, 0.0])
    assert violation and cost == 1.0 and info.infraction == "Red"
    env.pos = np.array([1.0, 1.0])
    _, _, cost, violation, _, _ = env.step([0.0, 0.0])
    assert not violation and cost == 0.0


@pytest.mark.parametrize("y, reached", [(5.0, True), (3.6, True), (2.5, False)])
def test_goal_is_a_finish_line_inside_the_lane(y, reached):
    cfg = preset("corridor")
    world, ego, _ = nav_reset(cfg, 0)
    ego.position = np.array([26.9, y])
    ego.heading, ego.speed = 0.0, 2.0
    *_, done, info = nav_step(world, ego, [0.0, 0.0])
    assert info.reached_goal is reached and done is reached
