"""Deterministic per-key scoring and per-lead aggregation."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import DegenerateMean
from .geodesy import EARTH, EarthModel, decompose_track_error, haversine_km, spherical_mean
from .track_model import TrackPoint, VerificationKey

REDUCTIONS = ("mean", "control")


@dataclass(frozen=True)
class MetricRecord:
    key: Optional[VerificationKey]
    model: str
    dpe_km: float
    cte_km: Optional[float]
    ate_km: Optional[float]
    ae_vmax_kt: Optional[float]
    ae_pmin_hpa: Optional[float]
    filled: bool = False
    # observed targets, kept for the variance term of R^2
    obs_vmax_kt: Optional[float] = None
    obs_pmin_hpa: Optional[float] = None


def _mean_defined(values: Iterable[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def representative(members: Sequence[TrackPoint], reduction: str = "mean") -> TrackPoint:
    """Collapse an ensemble to one state: control member or ensemble mean."""
    if reduction not in REDUCTIONS:
        raise ValueError(f"unknown reduction {reduction!r}")
    if len(members) == 1 or reduction == "control":
        return members[0]
    try:
        position = spherical_mean([m.position for m in members])
    except DegenerateMean:
        position = members[0].position
    return TrackPoint(position, _mean_defined(m.vmax_kt for m in members),
                      _mean_defined(m.pmin_hpa for m in members), members[0].valid_time)


def _abs_diff(a: Optional[float], b: Optional[float]) -> Optional[float]:
    return None if a is None or b is None else abs(a - b)


def score_key(fcst_members: Sequence[TrackPoint], obs_now: TrackPoint, obs_prev: Optional[TrackPoint] = None,
              *, key: Optional[VerificationKey] = None, model: str = "", filled: bool = False,
              reduction: str = "mean", earth: EarthModel = EARTH) -> MetricRecord:
    """Score one verification key.

    Ensembles are reduced to a single representative first (spherical mean
    position, arithmetic mean intensity, or member 0 with
    ``reduction="control"``).  Cross/along-track errors need ``obs_prev``,
    the observed state 12 h before verification.
    """
    if not fcst_members:
        raise ValueError("no forecast members")
    rep = representative(list(fcst_members), reduction)
    if obs_prev is not None:
        dec = decompose_track_error(obs_prev.position, obs_now.position, rep.position, earth)
        dpe, cte, ate = dec.dpe_km, dec.cte_km, dec.ate_km
    else:
        dpe, cte, ate = haversine_km(rep.position, obs_now.position, earth), None, None
    return MetricRecord(key, model, dpe, cte, ate,
                        _abs_diff(rep.vmax_kt, obs_now.vmax_kt), _abs_diff(rep.pmin_hpa, obs_now.pmin_hpa),
                        filled, obs_now.vmax_kt, obs_now.pmin_hpa)


@dataclass(frozen=True)
class Summary:
    """Aggregate of one error field over a record subset.

    ``r2`` is only populated for intensity fields; ``bias`` only for the
    signed track components.
    """

    n: int
    n_excluded: int
    mae: Optional[float]
    rmse: Optional[float]
    r2: Optional[float] = None
    bias: Optional[float] = None


FIELDS = ("dpe", "cte", "ate", "vmax", "pmin")
_ATTR = {"dpe": "dpe_km", "cte": "cte_km", "ate": "ate_km", "vmax": "ae_vmax_kt", "pmin": "ae_pmin_hpa"}
_TARGET = {"vmax": "obs_vmax_kt", "pmin": "obs_pmin_hpa"}


def summarize(records: Sequence[MetricRecord], name: str) -> Summary:
    attr = _ATTR[name]
    pairs = [(getattr(r, attr), getattr(r, _TARGET[name]) if name in _TARGET else None) for r in records]
    defined = [(e, t) for e, t in pairs if e is not None]
    n = len(defined)
    excluded = len(pairs) - n
    if n == 0:
        return Summary(0, excluded, None, None)
    errs = [e for e, _ in defined]
    mae = math.fsum(abs(e) for e in errs) / n
    mse = math.fsum(e * e for e in errs) / n
    rmse = math.sqrt(mse)
    r2 = bias = None
    if name in _TARGET:
        targets = [t for _, t in defined]
        mean_t = math.fsum(targets) / n
        var = math.fsum((t - mean_t) ** 2 for t in targets) / n
        r2 = 1.0 - mse / var if var >= 1e-12 else None
    elif name in ("cte", "ate"):
        bias = math.fsum(errs) / n
    return Summary(n, excluded, mae, rmse, r2, bias)


def aggregate(records: Sequence[MetricRecord], by_lead: bool = True) -> Dict[Optional[int], Dict[str, Summary]]:
    """MAE, RMSE and R^2 per lead (or overall, keyed ``None``).

    Undefined cross/along-track values and missing intensities are excluded
    field by field; ``n_excluded`` reports how many were dropped.
    """
    if not records:
        raise ValueError("no records to aggregate")
    groups: Dict[Optional[int], List[MetricRecord]] = defaultdict(list)
    for r in records:
        groups[r.key.lead_h if by_lead and r.key is not None else None].append(r)
    return {lead: {f: summarize(recs, f) for f in FIELDS}
            for lead, recs in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0] or 0))}
