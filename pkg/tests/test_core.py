import numpy as np
import pytest
from hypothesis import given, strategies as st

from latentsafe.core import (
    Episode,
    ReplayBuffer,
    RiskBudget,
    TransitionStep,
    derive_rng,
    discounted_return,
    push_episode,
    sample_sequence_batch,
)


def make_episode(n, tag=0.0, obs_dim=2):
    steps = [TransitionStep(np.full(obs_dim, tag + i), np.zeros(2), float(i), 0.0) for i in range(n)]
    return Episode(steps)


def test_discounted_return_examples():
    assert discounted_return([1, 1, 1], 0.5) == 1.75
    assert discounted_return([3.5, 9.0, -2.0], 0.0) == 3.5
    assert discounted_return([], 0.7) == 0.0


def test_discounted_return_rejects_bad_gamma():
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.5)


finite = st.floats(-100, 100, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), max_size=12), finite, finite, st.floats(0, 1))
def test_discounted_return_linear(pairs, a, b, gamma):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    combo = [a * u + b * v for u, v in zip(x, y)]
    want = a * discounted_return(x, gamma) + b * discounted_return(y, gamma)
    assert discounted_return(combo, gamma) == pytest.approx(want, abs=1e-7 * (1 + abs(want)))


def test_transition_step_invariants():
    with pytest.raises(ValueError):
        TransitionStep(np.zeros(2), np.zeros(2), 0.0, -0.1)
    with pytest.raises(ValueError):
        TransitionStep(np.zeros(2), np.array([1.2, 0.0]), 0.0, 0.0)
    with pytest.raises(ValueError):
        TransitionStep(np.zeros(2), np.zeros(2), 0.0, 0.0, violation=True)


def test_episode_done_only_last():
    s = TransitionStep(np.zeros(1), np.zeros(1), 0.0, 0.0, done=True)
    t = TransitionStep(np.zeros(1), np.zeros(1), 0.0, 0.0)
    Episode([t, s])
    with pytest.raises(ValueError):
        Episode([s, t])
    with pytest.raises(ValueError):
        Episode([t], completed_fraction=1.5)


def test_push_under_capacity():
    buf = push_episode(ReplayBuffer(10), make_episode(3))
    assert buf.n_steps == 3


def test_push_evicts_oldest():
    buf = ReplayBuffer(5)
    push_episode(buf, make_episode(4, tag=0))
    push_episode(buf, make_episode(3, tag=100))
    assert buf.n_steps <= 5
    assert len(buf) == 1 and buf.episodes[0].steps[0].observation[0] == 100


def test_push_empty_rejected():
    with pytest.raises(ValueError):
        push_episode(ReplayBuffer(5), Episode([]))


@given(st.integers(1, 30), st.lists(st.integers(1, 10), min_size=1, max_size=25))
def test_buffer_never_exceeds_capacity(capacity, lengths):
    buf = ReplayBuffer(capacity)
    for n in lengths:
        if n > capacity:
            with pytest.raises(ValueError):
                push_episode(buf, make_episode(n))
        else:
            push_episode(buf, make_episode(n))
        assert buf.n_steps <= capacity


def test_sample_windows_contiguous_and_deterministic():
    buf = push_episode(ReplayBuffer(100), make_episode(10))
    a = sample_sequence_batch(buf, 2, 5, 7)
    b = sample_sequence_batch(buf, 2, 5, 7)
    assert a.obs.shape == (2, 5, 2)
    for k in range(2):
        assert np.all(np.diff(a.obs[k, :, 0]) == 1.0)
    assert np.array_equal(a.obs, b.obs) and np.array_equal(a.start, b.start)


def test_sample_too_short_names_deficit():
    buf = push_episode(ReplayBuffer(100), make_episode(3))
    with pytest.raises(ValueError, match="deficit 2"):
        sample_sequence_batch(buf, 1, 5, 0)


@given(st.lists(st.integers(1, 9), min_size=1, max_size=8), st.integers(1, 6), st.integers(0, 10_000))
def test_windows_never_straddle_episodes(lengths, length, seed):
    buf = ReplayBuffer(1000)
    for i, n in enumerate(lengths):
        push_episode(buf, make_episode(n, tag=1000 * i))
    if max(lengths) < length:
        with pytest.raises(ValueError):
            sample_sequence_batch(buf, 4, length, seed)
        return
    batch = sample_sequence_batch(buf, 4, length, seed)
    ids = batch.obs[:, :, 0] // 1000
    assert np.all(ids == ids[:, :1])
    assert np.all(np.diff(batch.obs[:, :, 0], axis=1) == 1.0)


def test_risk_budget_validation():
    RiskBudget()
    for bad in (dict(alpha=0.0), dict(alpha=1.0), dict(d=-0.1), dict(barrier_decay=1.0), dict(barrier_degree_m=0)):
        with pytest.raises(ValueError):
            RiskBudget(**bad)


def test_derive_rng_streams_independent_of_order():
    a = derive_rng(3, "x").standard_normal(4)
    derive_rng(3, "y").standard_normal(10)
    assert np.array_equal(a, derive_rng(3, "x").standard_normal(4))
    assert not np.array_equal(a, derive_rng(3, "y").standard_normal(4))
    assert not np.array_equal(a, derive_rng(4, "x").standard_normal(4))
