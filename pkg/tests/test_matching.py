import json
from datetime import timedelta

import pytest

from tcverify.errors import UnknownCandidate
from tcverify.geodesy import GeoPoint, destination_point, haversine_km
from tcverify.matching import MatchPolicy, MatchResult, match_tracks, relabel
from tcverify.track_model import ForecastRow, ForecastSet, ObservedStore, TrackPoint

from conftest import straight_storm, utc

T0 = utc(2023, 9, 1)


def track(cid, origin, leads=(0, 6, 12), members=1, init=T0, spread_km=0.0):
    rows = []
    for lead in leads:
        for m in range(members):
            pos = destination_point(origin, 90.0 * m, spread_km) if m else origin
            rows.append(ForecastRow("M", cid, init, lead, m,
                                    TrackPoint(pos, 50.0, 990.0, init + timedelta(hours=lead))))
    return rows


@pytest.fixture
def obs():
    return ObservedStore([straight_storm("AL01", T0, 8, lat=20.0, lon0=280.0),
                          straight_storm("AL02", T0, 8, lat=30.0, lon0=300.0)])


def offset(obs, sid, km, bearing=0.0):
    return destination_point(obs.storms[sid].points[0].position, bearing, km)


def test_near_candidate_matched(obs):
    fs = ForecastSet("M", track("c1", offset(obs, "AL01", 50)))
    result = match_tracks(fs, obs)
    assert result.matched == {("c1", T0): "AL01"}
    assert result.distances_km[("c1", T0)] == pytest.approx(50.0, abs=1e-9)
    assert result.unmatched_storms == [("AL02", T0)]


def test_far_candidate_spurious(obs):
    far = offset(obs, "AL01", 500, bearing=180.0)
    assert min(haversine_km(far, s.points[0].position) for s in obs) > 300
    result = match_tracks(ForecastSet("M", track("c1", far)), obs)
    assert result.matched == {} and result.spurious == [("c1", T0)]


def test_nearer_candidate_wins(obs):
    fs = ForecastSet("M", track("c1", offset(obs, "AL01", 80)) + track("c2", offset(obs, "AL01", 50, 90)))
    result = match_tracks(fs, obs, MatchPolicy(max_init_distance_km=300))
    assert result.matched == {("c2", T0): "AL01"}
    assert result.spurious == [("c1", T0)]


def test_ensemble_anchor_is_member_mean(obs):
    origin = offset(obs, "AL02", 10)
    fs = ForecastSet("M", track("e", origin, members=3, spread_km=100.0))
    assert match_tracks(fs, obs).matched == {("e", T0): "AL02"}


def test_exact_init_required_by_default(obs):
    fs = ForecastSet("M", track("late", offset(obs, "AL01", 20), leads=(6, 12)))
    assert match_tracks(fs, obs).spurious == [("late", T0)]
    relaxed = match_tracks(fs, obs, MatchPolicy(require_init_time_exact=False))
    assert relaxed.matched == {("late", T0): "AL01"}


def test_deterministic_and_json(obs):
    fs = ForecastSet("M", track("c1", offset(obs, "AL01", 50)) + track("c2", offset(obs, "AL02", 70)))
    a, b = match_tracks(fs, obs), match_tracks(fs, obs)
    assert a.to_json() == b.to_json()
    payload = json.loads(a.to_json())
    assert [m["sid"] for m in payload["matched"]] == ["AL01", "AL02"]
    assert payload["spurious"] == [] and payload["unmatched"] == []


def test_relabel(obs):
    fs = ForecastSet("M", track("c1", offset(obs, "AL01", 50)) + track("zz", offset(obs, "AL01", 900)))
    result = match_tracks(fs, obs)
    out = relabel(fs, result)
    assert {r.sid for r in out} == {"AL01"}
    assert len(out) == 3
    assert [r.point for r in out] == [r.point for r in fs if r.sid == "c1"]


def test_relabel_empty_and_ghost(obs):
    fs = ForecastSet("M", track("c1", offset(obs, "AL01", 50)))
    assert len(relabel(fs, MatchResult())) == 0
    ghost = MatchResult(matched={("ghost", T0): "AL01"})
    with pytest.raises(UnknownCandidate):
        relabel(fs, ghost)


def test_policy_validation():
    with pytest.raises(ValueError):
        MatchPolicy(max_init_distance_km=0)
