"""Spherical geometry used by the track metrics.

All distances are great-circle distances on a sphere of radius
``EarthModel.radius_km``; positions are degrees with longitude kept in
[0, 360).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateMean, DegenerateSegment

EARTH_RADIUS_KM = 6371.0


def wrap_lon(lon: float) -> float:
    """Wrap a longitude into [0, 360)."""
    out = lon % 360.0
    # -1e-20 % 360.0 rounds to 360.0
    return 0.0 if out >= 360.0 else out + 0.0


def wrap_dlon(dlon: float) -> float:
    """Wrap a longitude difference into (-180, 180]."""
    out = (dlon + 180.0) % 360.0 - 180.0
    return 180.0 if out == -180.0 else out + 0.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat = float(self.lat)
        lon = float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite position ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat + 0.0)
        object.__setattr__(self, "lon", wrap_lon(lon))

    def reflected(self) -> "GeoPoint":
        """Mirror image across the equator."""
        return GeoPoint(-self.lat, self.lon)


@dataclass(frozen=True)
class EarthModel:
    radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if not self.radius_km > 0:
            raise ValueError("radius_km must be positive")


EARTH = EarthModel()


@dataclass(frozen=True)
class TrackErrorDecomposition:
    """Direct, cross-track and along-track error in km.

    ``cte_km`` and ``ate_km`` are ``None`` when the observed motion segment
    is degenerate.
    """

    dpe_km: float
    cte_km: Optional[float]
    ate_km: Optional[float]


def haversine_km(a: GeoPoint, b: GeoPoint, earth: EarthModel = EARTH) -> float:
    if a == b:
        return 0.0
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    # |dlon| folded to [0, 180] keeps the result exactly symmetric in (a, b)
    adl = abs(a.lon - b.lon)
    dlam = math.radians(360.0 - adl if adl > 180.0 else adl)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * earth.radius_km * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_array(lat1, lon1, lat2, lon2, radius_km: float = EARTH_RADIUS_KM) -> np.ndarray:
    """Vectorised haversine over broadcastable degree arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * radius_km * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from ``a`` toward ``b``, clockwise from north, in [0, 360)."""
    if a == b:
        raise DegenerateSegment(f"bearing undefined between identical points {a}")
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(wrap_dlon(b.lon - a.lon))
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return wrap_lon(math.degrees(math.atan2(y, x)))


def destination_point(origin: GeoPoint, bearing_deg: float, distance_km: float,
                      earth: EarthModel = EARTH) -> GeoPoint:
    """Point reached by travelling ``distance_km`` along a great circle."""
    if distance_km == 0:
        return origin
    delta = distance_km / earth.radius_km
    theta = math.radians(bearing_deg)
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    y = math.sin(theta) * math.sin(delta) * math.cos(phi1)
    x = math.cos(delta) - math.sin(phi1) * sin_phi2
    lam2 = lam1 + math.atan2(y, x)
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def decompose_track_error(obs_prev: GeoPoint, obs_now: GeoPoint, fcst: GeoPoint,
                          earth: EarthModel = EARTH, *, sh_flip: bool = False) -> TrackErrorDecomposition:
    """Split the forecast position error into cross- and along-track parts.

    The reference direction is the observed motion from ``obs_prev`` (12 h
    before verification) to ``obs_now``.  Cross-track error is the signed
    perpendicular distance from ``fcst`` to that great circle, positive to
    the right of the motion.  With ``sh_flip`` the sign is reversed when
    ``obs_now`` lies south of the equator.  Along-track error is the signed
    distance from ``obs_now`` to the foot of the perpendicular, positive
    when the foot lies ahead of ``obs_now``.

    A stationary observed segment leaves the cross/along components
    undefined (``None``); the direct positional error is still returned.
    """
    dpe = haversine_km(fcst, obs_now, earth)
    if fcst == obs_now:
        return TrackErrorDecomposition(0.0, 0.0, 0.0) if obs_prev != obs_now else \
            TrackErrorDecomposition(0.0, None, None)
    if obs_prev == obs_now:
        return TrackErrorDecomposition(dpe, None, None)

    r = earth.radius_km
    d12 = haversine_km(obs_prev, obs_now, earth) / r
    if fcst == obs_prev:
        xt, along = 0.0, 0.0
    else:
        d13 = haversine_km(obs_prev, fcst, earth) / r
        dtheta = math.radians(initial_bearing_deg(obs_prev, fcst) - initial_bearing_deg(obs_prev, obs_now))
        xt = math.asin(max(-1.0, min(1.0, math.sin(d13) * math.sin(dtheta))))
        along = math.atan2(math.sin(d13) * math.cos(dtheta), math.cos(d13))
    cte = xt * r
    if sh_flip and obs_now.lat < 0.0:
        cte = -cte
    ate = (along - d12) * r
    return TrackErrorDecomposition(dpe, cte + 0.0, ate + 0.0)


def _unit_vector(p: GeoPoint) -> np.ndarray:
    phi = math.radians(p.lat)
    lam = math.radians(p.lon)
    return np.array([math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)])


def spherical_mean(points: Sequence[GeoPoint] | Iterable[GeoPoint]) -> GeoPoint:
    """Chordal mean position: average of unit vectors, renormalized."""
    pts = list(points)
    if not pts:
        raise ValueError("spherical_mean of an empty list")
    first = pts[0]
    if all(p == first for p in pts):
        return first
    v = np.sum([_unit_vector(p) for p in pts], axis=0) / len(pts)
    norm = float(np.linalg.norm(v))
    if norm < 1e-9:
        raise DegenerateMean(f"mean vector norm {norm:.3e} of {len(pts)} points")
    x, y, z = v / norm
    lat = math.degrees(math.asin(max(-1.0, min(1.0, z))))
    lon = math.degrees(math.atan2(y, x))
    return GeoPoint(lat, lon)
