import math

import pytest
from hypothesis import given, strategies as st

from latentsafe.metrics import (
    INFRACTION_PENALTIES,
    EpisodeLog,
    build_report,
    collision_occurrences,
    collision_rate,
    driving_score,
    infraction_score,
    infractions_per_km,
    route_completion,
    safety_score,
    time_to_collision,
)


def test_route_completion_examples():
    assert route_completion([EpisodeLog(1.0), EpisodeLog(0.5)]) == pytest.approx(75.0)
    assert route_completion([EpisodeLog(1.0)] * 3) == 100.0
    # 20 m off route at 0.01 per metre costs 0.2
    assert route_completion([EpisodeLog(1.0, off_route_distance=20.0)]) == pytest.approx(80.0)
    assert route_completion([EpisodeLog(0.1, off_route_distance=500.0)]) == 0.0
    with pytest.raises(ValueError):
        route_completion([])


def test_infraction_score_examples():
    assert infraction_score({}) == 1.0
    assert infraction_score({"Ped": 1}) == 0.50
    assert infraction_score({"Ped": 1, "Red": 2}) == pytest.approx(0.245, abs=1e-15)
    with pytest.raises(ValueError):
        infraction_score({"Ped": -1})
    with pytest.raises(ValueError):
        infraction_score({"Cyclist": 1})


def test_driving_score_examples():
    assert driving_score([1.0], [1.0]) == 1.0
    assert driving_score([0.9, 0.8], [1.0, 0.5]) == pytest.approx(0.65, abs=1e-15)
    assert driving_score([0.7, 0.0], [0.0, 1.0]) == 0.0
    with pytest.raises(ValueError):
        driving_score([0.5, 0.5], [1.0])


def test_rate_examples():
    assert collision_occurrences(2, 10) == pytest.approx(20.0)
    assert collision_occurrences(0, 3) == 0.0
    assert collision_rate(2, 10) == pytest.approx(0.2)
    assert collision_rate(0, 3) == 0.0
    assert infractions_per_km([2, 1], [10, 5]) == pytest.approx(0.2)
    assert infractions_per_km([0, 0], [1, 1]) == 0.0
    for fn in (collision_occurrences, collision_rate):
        with pytest.raises(ValueError):
            fn(1, 0.0)
    with pytest.raises(ValueError):
        infractions_per_km([1], [0.0])


def test_time_to_collision_examples():
    assert time_to_collision(10.0, 5.0) == 2.0
    assert time_to_collision(10.0, -1.0) is None
    assert time_to_collision(0.0, 3.0) == 0.0


def test_safety_score_proxy_bounds():
    assert safety_score(1.0, 0.0) == 100.0
    assert 0.0 < safety_score(0.5, 2.0) < 50.0


counts = st.dictionaries(st.sampled_from(sorted(INFRACTION_PENALTIES)), st.integers(0, 6))


@given(counts, counts)
def test_infraction_score_multiplicative(a, b):
    merged = {k: a.get(k, 0) + b.get(k, 0) for k in set(a) | set(b)}
    assert infraction_score(merged) == pytest.approx(infraction_score(a) * infraction_score(b), rel=1e-12)
    assert 0.0 < infraction_score(merged) <= 1.0


logs = st.builds(
    EpisodeLog,
    route_completion_fraction=st.floats(0, 1),
    off_route_distance=st.floats(0, 200),
    infractions=counts,
    collisions=st.integers(0, 3),
    distance_driven=st.one_of(st.just(0.0), st.floats(1e-6, 5)),
    min_ttc=st.one_of(st.none(), st.floats(0, 10)),
    seed=st.integers(0, 1000),
)


@given(st.lists(logs, min_size=1, max_size=12))
def test_report_consistency(batch):
    rep = build_report(batch)
    assert 0.0 <= rep.RC <= 100.0
    assert 0.0 < rep.IS <= 1.0
    assert rep.DS <= rep.RC + 1e-9
    for v in (rep.CO, rep.IPK, rep.CR):
        assert math.isnan(v) or v >= 0
    assert repr(build_report(list(reversed(batch)))) == repr(rep)


def test_episode_log_validation():
    with pytest.raises(ValueError):
        EpisodeLog(1.5)
    with pytest.raises(ValueError):
        EpisodeLog(0.5, infractions={"Bus": 1})
    with pytest.raises(ValueError):
        EpisodeLog(0.5, collisions=-1)
    assert EpisodeLog(1.0, collisions=1).failed and not EpisodeLog(1.0).failed
