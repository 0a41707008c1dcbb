"""Rapid intensification labels and rare-event skill scores."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .track_model import ForecastRow, ForecastSet, ObservedStore, VerificationKey

RI_THRESHOLD_KT = 30.0
RI_WINDOW_H = 24
# absorbs float noise in differences such as 80.1 - 50.1
_EPS = 1e-9


def is_ri(dvmax_kt: float) -> bool:
    return dvmax_kt >= RI_THRESHOLD_KT - _EPS


@dataclass(frozen=True)
class RIEvent:
    sid: str
    window_start: datetime
    window_end: datetime
    dvmax_kt: float
    label: bool
    init_time: Optional[datetime] = None
    lead_h: Optional[int] = None
    prob: Optional[float] = None


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    unmatched_model: int = 0
    unmatched_truth: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn,
                               self.unmatched_model + other.unmatched_model,
                               self.unmatched_truth + other.unmatched_truth)


def ri_windows(series: Sequence[Tuple[datetime, Optional[float]]]) -> Iterator[Tuple[datetime, Optional[float], Optional[float]]]:
    """Every 24 h window on the 6 h grid spanned by ``series``.

    Yields (start, vmax at start, vmax at end); either value is ``None``
    when the series has no usable observation there.
    """
    if not series:
        return
    values = {t: v for t, v in series}
    start, stop = min(values), max(values)
    step = timedelta(hours=6)
    window = timedelta(hours=RI_WINDOW_H)
    t = start
    while t + window <= stop:
        yield t, values.get(t), values.get(t + window)
        t += step


def label_ri(series: Sequence[Tuple[datetime, Optional[float]]], sid: str = "") -> List[RIEvent]:
    """One event per 24 h window whose two endpoints both have a wind value."""
    events = []
    for start, v0, v1 in ri_windows(series):
        if v0 is None or v1 is None:
            continue
        dv = v1 - v0
        events.append(RIEvent(sid, start, start + timedelta(hours=RI_WINDOW_H), dv, is_ri(dv)))
    return events


def count_skipped_windows(series: Sequence[Tuple[datetime, Optional[float]]]) -> int:
    return sum(1 for _, v0, v1 in ri_windows(series) if v0 is None or v1 is None)


def confusion(model_events: Sequence[RIEvent], truth_events: Sequence[RIEvent]) -> ConfusionCounts:
    """Contingency counts over model windows joined to truth on (sid, window_start)."""
    truth = {(e.sid, e.window_start): e.label for e in truth_events}
    c = ConfusionCounts()
    used = set()
    for e in model_events:
        k = (e.sid, e.window_start)
        if k not in truth:
            c.unmatched_model += 1
            continue
        used.add(k)
        obs = truth[k]
        if e.label and obs:
            c.tp += 1
        elif e.label:
            c.fp += 1
        elif obs:
            c.fn += 1
        else:
            c.tn += 1
    c.unmatched_truth = len(set(truth) - used)
    return c


def csi(c: ConfusionCounts) -> Optional[float]:
    denom = c.tp + c.fn + c.fp
    return c.tp / denom if denom else None


def pss(c: ConfusionCounts) -> Optional[float]:
    if c.tp + c.fn == 0 or c.fp + c.tn == 0:
        return None
    # hit rate minus false-alarm rate over a common denominator (exact for integer counts)
    pos, neg = c.tp + c.fn, c.fp + c.tn
    return (c.tp * neg - c.fp * pos) / (pos * neg)


@dataclass(frozen=True)
class RIRule:
    """How an ensemble becomes a yes/no RI forecast.

    ``majority``: at least half the members; ``any``: at least one member;
    ``probability``: member fraction at least ``threshold``.
    """

    kind: str = "majority"
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in ("majority", "any", "probability"):
            raise ValueError(f"unknown RI rule {self.kind!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def decide(self, fraction: float) -> bool:
        if self.kind == "any":
            return fraction > 0.0
        if self.kind == "majority":
            return fraction >= 0.5
        return fraction >= self.threshold

    @classmethod
    def parse(cls, text: str) -> "RIRule":
        text = text.strip()
        if text.startswith("probability"):
            inner = text[len("probability"):].strip("():= ")
            return cls("probability", float(inner) if inner else 0.5)
        return cls(text)

    def __str__(self):
        return f"probability({self.threshold})" if self.kind == "probability" else self.kind


@dataclass
class RITable:
    by_lead: Dict[int, ConfusionCounts] = field(default_factory=dict)
    events: List[RIEvent] = field(default_factory=list)
    skipped: int = 0

    @property
    def overall(self) -> ConfusionCounts:
        total = ConfusionCounts()
        for c in self.by_lead.values():
            total = total + c
        return total

    def scores(self) -> Dict[int, dict]:
        return {lead: {"csi": csi(c), "pss": pss(c), "counts": c} for lead, c in self.by_lead.items()}


def _member_values(rows: List[ForecastRow]) -> Dict[int, Optional[float]]:
    return {r.member: r.point.vmax_kt for r in rows}


def forecast_ri_event(fs: ForecastSet, obs: ObservedStore, sid: str, init: datetime, lead_h: int,
                      rule: RIRule = RIRule()) -> Optional[RIEvent]:
    """RI forecast for the window ending at ``lead_h``, or ``None`` if not computable.

    The window-start wind of each member comes from the same member at
    ``lead_h - 24``; a single-member start is shared by all end members.
    At lead 0 a model without an analysis row starts from the observed
    initial wind.
    """
    start_lead = lead_h - RI_WINDOW_H
    if start_lead < 0:
        return None
    end = _member_values(fs.members(sid, init, lead_h))
    start = _member_values(fs.members(sid, init, start_lead))
    if not start and start_lead == 0:
        p0 = obs.point(sid, init)
        if p0 is not None:
            start = {0: p0.vmax_kt}
    if not end or not start:
        return None
    deltas = []
    for m, v1 in sorted(end.items()):
        v0 = start.get(m, start[min(start)] if len(start) == 1 else None)
        if v0 is None or v1 is None:
            continue
        deltas.append(v1 - v0)
    if not deltas:
        return None
    fraction = sum(is_ri(d) for d in deltas) / len(deltas)
    window_start = init + timedelta(hours=start_lead)
    mean_dv = sum(deltas) / len(deltas)
    return RIEvent(sid, window_start, window_start + timedelta(hours=RI_WINDOW_H), mean_dv,
                   rule.decide(fraction), init, lead_h, fraction)


def truth_ri_events(obs: ObservedStore) -> Dict[Tuple[str, datetime], RIEvent]:
    out = {}
    for storm in obs:
        for e in label_ri([(p.valid_time, p.vmax_kt) for p in storm.points], storm.sid):
            out[(e.sid, e.window_start)] = e
    return out


def ri_by_lead(model_fs: ForecastSet, obs: ObservedStore, keys: Sequence[VerificationKey],
               rule: RIRule = RIRule(), truth: Optional[Dict] = None) -> RITable:
    """Per-lead RI contingency table; a window is credited to the lead at its end."""
    truth = truth if truth is not None else truth_ri_events(obs)
    table = RITable()
    by_lead: Dict[int, ConfusionCounts] = defaultdict(ConfusionCounts)
    for key in keys:
        by_lead[key.lead_h]  # every lead on the grid gets a (possibly empty) cell
        if key.lead_h < RI_WINDOW_H:
            continue
        window_start = key.valid_time - timedelta(hours=RI_WINDOW_H)
        obs_event = truth.get((key.sid, window_start))
        event = forecast_ri_event(model_fs, obs, key.sid, key.init_time, key.lead_h, rule)
        if obs_event is None or event is None:
            table.skipped += 1
            continue
        table.events.append(event)
        by_lead[key.lead_h] = by_lead[key.lead_h] + confusion([event], [obs_event])
    table.by_lead = dict(sorted(by_lead.items()))
    return table
