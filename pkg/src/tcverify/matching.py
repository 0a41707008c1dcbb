"""Associate forecast tracks with observed storms at initialization time."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Tuple

from .errors import UnknownCandidate
from .geodesy import EARTH, EarthModel, haversine_km, spherical_mean
from .track_model import ForecastRow, ForecastSet, ObservedStore, format_time

TrackId = Tuple[str, datetime]  # (provisional id, init_time)


@dataclass(frozen=True)
class MatchPolicy:
    max_init_distance_km: float = 300.0
    require_init_time_exact: bool = True

    def __post_init__(self):
        if not self.max_init_distance_km > 0:
            raise ValueError("max_init_distance_km must be positive")


@dataclass
class MatchResult:
    matched: Dict[TrackId, str] = field(default_factory=dict)
    spurious: List[TrackId] = field(default_factory=list)
    unmatched_storms: List[Tuple[str, datetime]] = field(default_factory=list)
    distances_km: Dict[TrackId, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "matched": [{"candidate": c, "init_time": format_time(t), "sid": sid,
                         "distance_km": self.distances_km.get((c, t))}
                        for (c, t), sid in sorted(self.matched.items())],
            "spurious": [{"candidate": c, "init_time": format_time(t)} for c, t in sorted(self.spurious)],
            "unmatched": [{"sid": s, "init_time": format_time(t)} for s, t in sorted(self.unmatched_storms)],
        }, indent=2)


def _anchor(rows: List[ForecastRow], exact: bool):
    """Earliest-lead rows of a candidate track (lead 0 only when ``exact``)."""
    first = min(r.lead_h for r in rows)
    if exact and first != 0:
        return None
    return [r for r in rows if r.lead_h == first]


def match_tracks(candidates: ForecastSet, obs: ObservedStore, policy: MatchPolicy = MatchPolicy(),
                 earth: EarthModel = EARTH) -> MatchResult:
    """Greedy nearest-first one-to-one matching per initialization time.

    Each candidate track is anchored at its lead-0 position (or its earliest
    lead when ``require_init_time_exact`` is off) and compared against every
    storm observed at the anchor time.  Pairs within the distance threshold
    are assigned in order of increasing distance, ties broken by candidate id
    then storm id; unassigned candidates are spurious.
    """
    rows_by_track: Dict[TrackId, List[ForecastRow]] = defaultdict(list)
    for row in candidates:
        rows_by_track[(row.sid, row.init_time)].append(row)

    result = MatchResult()
    by_init: Dict[datetime, list] = defaultdict(list)
    for track_id in sorted(rows_by_track):
        anchor = _anchor(rows_by_track[track_id], policy.require_init_time_exact)
        by_init[track_id[1]].append((track_id, anchor))

    for init in sorted(by_init):
        edges = []
        for track_id, anchor in by_init[init]:
            if anchor is None:
                continue
            when = anchor[0].point.valid_time
            pos = spherical_mean([r.point.position for r in anchor])
            for storm in obs:
                truth = storm.at(when)
                if truth is None:
                    continue
                d = haversine_km(pos, truth.position, earth)
                if d <= policy.max_init_distance_km:
                    edges.append((d, track_id[0], storm.sid, track_id))
        edges.sort(key=lambda e: (e[0], e[1], e[2]))
        taken_tracks, taken_storms = set(), set()
        for d, _, sid, track_id in edges:
            if track_id in taken_tracks or sid in taken_storms:
                continue
            taken_tracks.add(track_id)
            taken_storms.add(sid)
            result.matched[track_id] = sid
            result.distances_km[track_id] = d
        for track_id, _ in by_init[init]:
            if track_id not in taken_tracks:
                result.spurious.append(track_id)
        for storm in obs:
            if storm.at(init) is not None and storm.sid not in taken_storms:
                result.unmatched_storms.append((storm.sid, init))
    result.spurious.sort()
    result.unmatched_storms.sort()
    return result


def relabel(fs: ForecastSet, result: MatchResult) -> ForecastSet:
    """Copy of ``fs`` with matched tracks renamed to storm ids and spurious ones dropped."""
    present = set(fs.tracks())
    for track_id in list(result.matched) + list(result.spurious):
        if track_id not in present:
            raise UnknownCandidate(f"candidate {track_id[0]} at {format_time(track_id[1])} not in {fs.model}")
    rows = []
    for row in fs:
        sid = result.matched.get((row.sid, row.init_time))
        if sid is None:
            continue
        rows.append(ForecastRow(row.model, sid, row.init_time, row.lead_h, row.member, row.point, row.filled))
    return ForecastSet(fs.model, rows, provenance=fs.provenance, diagnostics=dict(fs.diagnostics))
