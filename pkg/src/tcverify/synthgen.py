"""Synthetic storms and forecast ensembles with known error statistics.

Observed storms move at constant speed along a great circle and follow a
piecewise-linear wind profile.  Forecast members are the truth plus
independent noise: an isotropic Gaussian position offset (applied as a
random-bearing great-circle displacement) and Gaussian intensity errors.
Noise standard deviations may grow linearly with lead time.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .geodesy import GeoPoint, destination_point
from .rng import keyed_generator
from .track_model import (BASINS, INIT_HOURS, PMIN_RANGE_HPA, ForecastRow, ForecastSet, ObservedStorm,
                          ObservedStore, TrackPoint, parse_time, write_forecasts, write_observed)


@dataclass
class SynthSpec:
    n_storms: int = 3
    lifetime_steps: int = 28
    bearing_deg: float = 300.0
    speed_kmh: float = 20.0
    # (hour since genesis, vmax kt) knots; constant beyond the ends
    intensity_profile: List[Tuple[float, float]] = field(default_factory=lambda: [(0.0, 40.0)])
    # (start hour, gain kt): extra linear gain over the following 24 h, held afterwards
    ri_segments: List[Tuple[float, float]] = field(default_factory=list)
    track_noise_km: float = 0.0
    track_noise_growth_km_per_h: float = 0.0
    intensity_noise_kt: float = 0.0
    intensity_noise_growth_kt_per_h: float = 0.0
    pressure_noise_hpa: float = 0.0
    ensemble_size: int = 1
    seed: int = 0
    model: str = "SYNTH"
    start_time: str = "2023-08-01T00:00:00Z"
    storm_interval_h: int = 24
    start_lat: float = 15.0
    start_lon: float = 320.0
    storm_spacing_deg: float = 12.0
    basin: str = "NA"
    max_lead_h: int = 120
    include_lead0: bool = True

    def __post_init__(self):
        self.intensity_profile = [tuple(map(float, k)) for k in self.intensity_profile]
        self.ri_segments = [tuple(map(float, k)) for k in self.ri_segments]
        sigmas = (self.track_noise_km, self.track_noise_growth_km_per_h, self.intensity_noise_kt,
                  self.intensity_noise_growth_kt_per_h, self.pressure_noise_hpa)
        if min(sigmas) < 0:
            raise ValueError("noise parameters must be >= 0")
        if self.lifetime_steps < 5:
            raise ValueError("lifetime_steps must be >= 5")
        if self.n_storms < 1 or self.ensemble_size < 1:
            raise ValueError("n_storms and ensemble_size must be >= 1")
        if self.basin not in BASINS:
            raise ValueError(f"unknown basin {self.basin!r}")
        if self.storm_interval_h % 6 or self.max_lead_h % 6:
            raise ValueError("storm_interval_h and max_lead_h must be multiples of 6")
        if not self.intensity_profile:
            raise ValueError("intensity_profile needs at least one knot")

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["intensity_profile"] = [list(k) for k in self.intensity_profile]
        d["ri_segments"] = [list(k) for k in self.ri_segments]
        return d


def vmax_at(spec: SynthSpec, hour: float) -> float:
    knots = sorted(spec.intensity_profile)
    hours = [k[0] for k in knots]
    winds = [k[1] for k in knots]
    v = float(np.interp(hour, hours, winds))
    for start, gain in spec.ri_segments:
        v += gain * min(1.0, max(0.0, (hour - start) / 24.0))
    return max(0.0, v)


def pmin_from_vmax(vmax_kt: float) -> float:
    """Linear wind-pressure relation, only meant to keep pmin plausible."""
    lo, hi = PMIN_RANGE_HPA
    return min(hi, max(lo, 1012.0 - 0.75 * vmax_kt))


def _truth_storm(spec: SynthSpec, i: int) -> ObservedStorm:
    start = parse_time(spec.start_time) + timedelta(hours=i * spec.storm_interval_h)
    origin = GeoPoint(spec.start_lat + 2.0 * (i % 5), spec.start_lon - spec.storm_spacing_deg * i)
    points = []
    for k in range(spec.lifetime_steps):
        hour = 6.0 * k
        pos = destination_point(origin, spec.bearing_deg, spec.speed_kmh * hour)
        v = vmax_at(spec, hour)
        points.append(TrackPoint(pos, v, pmin_from_vmax(v), start + timedelta(hours=hour)))
    return ObservedStorm(f"SYN{i:03d}", spec.basin, tuple(points))


def _perturb(truth: TrackPoint, noise: np.ndarray, lead_h: int, spec: SynthSpec) -> TrackPoint:
    sigma_track = spec.track_noise_km + spec.track_noise_growth_km_per_h * lead_h
    sigma_int = spec.intensity_noise_kt + spec.intensity_noise_growth_kt_per_h * lead_h
    dx, dy = sigma_track * noise[0], sigma_track * noise[1]
    dist = math.hypot(dx, dy)
    position = truth.position
    if dist > 0:
        position = destination_point(truth.position, math.degrees(math.atan2(dx, dy)), dist)
    vmax = max(0.0, truth.vmax_kt + sigma_int * noise[2])
    lo, hi = PMIN_RANGE_HPA
    pmin = min(hi, max(lo, truth.pmin_hpa + spec.pressure_noise_hpa * noise[3]))
    return TrackPoint(position, vmax, pmin, truth.valid_time)


def generate(spec: SynthSpec) -> Tuple[ObservedStore, ForecastSet]:
    """Observed store and one forecast set; fully determined by ``spec``."""
    storms = [_truth_storm(spec, i) for i in range(spec.n_storms)]
    rows = []
    first_lead = 0 if spec.include_lead0 else 6
    for storm in storms:
        for p0 in storm.points:
            t0 = p0.valid_time
            if t0.hour not in INIT_HOURS:
                continue
            for lead in range(first_lead, spec.max_lead_h + 1, 6):
                truth = storm.at(t0 + timedelta(hours=lead))
                if truth is None:
                    break
                noise = keyed_generator(spec.seed, "synth", storm.sid, t0, lead).standard_normal(
                    (spec.ensemble_size, 4))
                for m in range(spec.ensemble_size):
                    rows.append(ForecastRow(spec.model, storm.sid, t0, lead, m,
                                            _perturb(truth, noise[m], lead, spec)))
    return ObservedStore(storms), ForecastSet(spec.model, rows)


def write_world(spec: SynthSpec, out_dir) -> Tuple[Path, Path]:
    """Write ``obs.csv`` and ``forecasts/<model>.csv`` in the canonical schemas."""
    out = Path(out_dir)
    (out / "forecasts").mkdir(parents=True, exist_ok=True)
    obs, fs = generate(spec)
    obs_path = out / "obs.csv"
    fc_path = out / "forecasts" / f"{spec.model}.csv"
    write_observed(obs, obs_path)
    write_forecasts(fs, fc_path)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return obs_path, fc_path


def generate_many(specs: Sequence[SynthSpec]) -> Tuple[ObservedStore, List[ForecastSet]]:
    """Several models over the truth of the first spec (storm layout must agree)."""
    obs, first = generate(specs[0])
    sets = [first]
    for s in specs[1:]:
        other_obs, fs = generate(s)
        if other_obs != obs:
            raise ValueError(f"spec for {s.model} describes a different observed world")
        sets.append(fs)
    return obs, sets
