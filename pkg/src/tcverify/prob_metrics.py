"""Ensemble scores: fair CRPS for scalars and tracks, Brier skill score."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ZeroReferenceScore
from .geodesy import EARTH, EarthModel, GeoPoint, haversine_km, haversine_km_array

# Fair track CRPS values in (-CLAMP_TOL, 0) are rounding noise and reported as 0.
CLAMP_TOL_KM = 1e-6


def fair_crps(values: Sequence[float], y: float) -> float:
    """Fair (finite-ensemble unbiased) CRPS of an ensemble against ``y``.

    A single member reduces to the absolute error.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ValueError("empty ensemble")
    if np.isnan(x).any() or np.isnan(y):
        raise ValueError("NaN in ensemble or observation")
    if n == 1:
        return float(abs(x[0] - y))
    skill = np.abs(x - y).sum() / n
    # sum_ij |x_i - x_j| from sorted values: 2 * sum_k (2k - n + 1) x_(k)
    xs = np.sort(x)
    pair_sum = 2.0 * np.dot(2.0 * np.arange(n) - n + 1.0, xs)
    return float(skill - pair_sum / (2.0 * n * (n - 1)))


def track_crps_raw(positions: Sequence[GeoPoint], y: GeoPoint, earth: EarthModel = EARTH) -> float:
    """Fair track CRPS with great-circle distances, before clamping."""
    n = len(positions)
    if n == 0:
        raise ValueError("empty ensemble")
    if n == 1:
        return haversine_km(positions[0], y, earth)
    lat = np.array([p.lat for p in positions])
    lon = np.array([p.lon for p in positions])
    skill = haversine_km_array(lat, lon, y.lat, y.lon, earth.radius_km).sum() / n
    spread = haversine_km_array(lat[:, None], lon[:, None], lat[None, :], lon[None, :], earth.radius_km).sum()
    return float(skill - spread / (2.0 * n * (n - 1)))


def track_crps(positions: Sequence[GeoPoint], y: GeoPoint, earth: EarthModel = EARTH) -> float:
    value = track_crps_raw(positions, y, earth)
    if -CLAMP_TOL_KM < value < 0.0:
        return 0.0
    return value


def brier_score(probs: Sequence[float], outcomes: Sequence[int]) -> float:
    p = np.asarray(probs, dtype=float)
    o = np.asarray(outcomes, dtype=float)
    if p.shape != o.shape or p.size == 0:
        raise ValueError("probabilities and outcomes must be nonempty and equal length")
    if ((p < 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - o) ** 2))


def brier_skill(forecast_probs: Sequence[float], outcomes: Sequence[int],
                reference_probs: Sequence[float]) -> float:
    """1 - BS_forecast / BS_reference.

    Both scores zero gives 0; a zero reference with a nonzero forecast
    score raises :class:`ZeroReferenceScore`.
    """
    bs_f = brier_score(forecast_probs, outcomes)
    bs_r = brier_score(reference_probs, outcomes)
    if bs_r == 0.0:
        if bs_f == 0.0:
            return 0.0
        raise ZeroReferenceScore(f"reference Brier score is 0, forecast {bs_f}")
    return 1.0 - bs_f / bs_r


def ensemble_event_prob(values: Sequence[float], threshold: float, direction: str = ">=") -> float:
    """Fraction of members at or beyond ``threshold`` (``direction`` is '>=' or '<=')."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("empty ensemble")
    if direction == ">=":
        hits = x >= threshold
    elif direction == "<=":
        hits = x <= threshold
    else:
        raise ValueError(f"direction must be '>=' or '<=', got {direction!r}")
    return float(hits.mean())
