"""Naive reference forecasts: persistence and mean tendency by lead and basin (MT-LB)."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyClimatology, MissingCell
from .geodesy import GeoPoint, wrap_dlon
from .rng import keyed_generator
from .track_model import (PMIN_RANGE_HPA, ForecastRow, ForecastSet, ObservedStore, TrackPoint,
                          VerificationKey, format_float, format_time)

log = logging.getLogger(__name__)

PERSISTENCE = "PERSISTENCE"
MTLB = "MTLB"
MTLB_ENS = "MTLB_ENS"
CLIM_YEARS = (1980, 2022)
TENDENCY_FIELDS = ("dlat", "dlon", "dvmax", "dpmin")


@dataclass
class ClimatologyCell:
    """Tendency samples for one (basin, lead); rows are cases, columns TENDENCY_FIELDS.

    Missing intensity tendencies are NaN.  Samples are kept in a canonical
    order so that ensemble draws are reproducible.
    """

    samples: np.ndarray

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def counts(self) -> np.ndarray:
        return np.sum(~np.isnan(self.samples), axis=0)

    @property
    def mean(self) -> np.ndarray:
        counts = self.counts
        sums = np.nansum(self.samples, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


class ClimatologyTable:
    def __init__(self, entries: Dict[Tuple[str, int], ClimatologyCell]):
        self.entries = dict(sorted(entries.items()))

    def __contains__(self, key):
        return key in self.entries

    def __getitem__(self, key) -> ClimatologyCell:
        return self.entries[key]

    def __len__(self):
        return len(self.entries)

    def to_csv(self, path, samples_path=None) -> None:
        """Write ``basin,lead_h,stat,dlat,dlon,dvmax,dpmin,n`` plus an optional samples sidecar."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["basin", "lead_h", "stat", *TENDENCY_FIELDS, "n"])
            for (basin, lead), cell in self.entries.items():
                mean = [None if np.isnan(v) else float(v) for v in cell.mean]
                w.writerow([basin, lead, "mean", *map(format_float, mean), cell.n])
                w.writerow([basin, lead, "count", *(int(c) for c in cell.counts), cell.n])
        if samples_path is not None:
            with open(samples_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["basin", "lead_h", "case", *TENDENCY_FIELDS])
                for (basin, lead), cell in self.entries.items():
                    for i, sample in enumerate(cell.samples):
                        values = [None if np.isnan(v) else float(v) for v in sample]
                        w.writerow([basin, lead, i, *map(format_float, values)])

    @classmethod
    def from_csv(cls, samples_path) -> "ClimatologyTable":
        """Rebuild a table from a samples sidecar file."""
        cells: Dict[Tuple[str, int], list] = defaultdict(list)
        with open(samples_path, newline="") as fh:
            for row in csv.DictReader(fh):
                values = [float(row[f]) if row[f] != "" else np.nan for f in TENDENCY_FIELDS]
                cells[(row["basin"], int(row["lead_h"]))].append((int(row["case"]), values))
        return cls({k: ClimatologyCell(np.array([v for _, v in sorted(rows)], dtype=float))
                    for k, rows in cells.items()})


def samples_sidecar(path) -> Path:
    """Sidecar filename used alongside a climatology CSV."""
    path = Path(path)
    return path.with_name(path.stem + "_samples" + path.suffix)


def build_climatology(obs: ObservedStore, years: Tuple[int, int] = CLIM_YEARS,
                      leads: Sequence[int] = tuple(range(6, 121, 6))) -> ClimatologyTable:
    """Collect observed tendencies over every (t0, t0+L) pair with t0 in ``years``."""
    cells: Dict[Tuple[str, int], list] = defaultdict(list)
    for storm in obs:
        for p0 in storm.points:
            if not years[0] <= p0.valid_time.year <= years[1]:
                continue
            for lead in leads:
                p1 = storm.at(p0.valid_time + timedelta(hours=lead))
                if p1 is None:
                    continue
                cells[(storm.basin, lead)].append([
                    p1.position.lat - p0.position.lat,
                    wrap_dlon(p1.position.lon - p0.position.lon),
                    np.nan if p0.vmax_kt is None or p1.vmax_kt is None else p1.vmax_kt - p0.vmax_kt,
                    np.nan if p0.pmin_hpa is None or p1.pmin_hpa is None else p1.pmin_hpa - p0.pmin_hpa,
                ])
    if not cells:
        raise EmptyClimatology(f"no tendency samples for years {years[0]}-{years[1]}")
    return ClimatologyTable({k: ClimatologyCell(np.array(v, dtype=float)) for k, v in cells.items()})


def apply_tendency(p0: TrackPoint, delta: Sequence[float], valid_time) -> TrackPoint:
    """Initial state plus a (dlat, dlon, dvmax, dpmin) tendency, clipped to physical bounds."""
    dlat, dlon, dvmax, dpmin = (float(d) for d in delta)
    lat = min(90.0, max(-90.0, p0.position.lat + dlat))
    position = GeoPoint(lat, p0.position.lon + dlon)
    vmax = None if p0.vmax_kt is None or np.isnan(dvmax) else max(0.0, p0.vmax_kt + dvmax)
    if p0.pmin_hpa is None or np.isnan(dpmin):
        pmin = None
    else:
        pmin = min(PMIN_RANGE_HPA[1], max(PMIN_RANGE_HPA[0], p0.pmin_hpa + dpmin))
    return TrackPoint(position, vmax, pmin, valid_time)


def _initial_state(obs: ObservedStore, key: VerificationKey) -> TrackPoint:
    p0 = obs.point(key.sid, key.init_time)
    if p0 is None:
        raise KeyError(f"no observation for {key.sid} at {format_time(key.init_time)}")
    return p0


def persistence_row(obs: ObservedStore, key: VerificationKey, model: str = PERSISTENCE,
                    filled: bool = False) -> ForecastRow:
    p0 = _initial_state(obs, key)
    return ForecastRow(model, key.sid, key.init_time, key.lead_h, 0, p0.moved(key.valid_time), filled)


def persistence_forecast(obs: ObservedStore, keys: Iterable[VerificationKey]) -> ForecastSet:
    """Hold the t0 state constant at every lead."""
    return ForecastSet(PERSISTENCE, [persistence_row(obs, k) for k in keys])


def mtlb_forecast(obs: ObservedStore, clim: ClimatologyTable, keys: Iterable[VerificationKey],
                  mode: str = "deterministic", n_members: int = 50, seed: int = 0,
                  on_missing: str = "raise", model: Optional[str] = None) -> ForecastSet:
    """Mean-tendency (deterministic) or sampled-tendency (ensemble) climatology forecast.

    Ensemble members draw one historical case each, so the four tendencies of
    a member come from the same storm.  Draws use a generator keyed by
    (seed, sid, t0, lead, member).  With ``on_missing="persistence"`` keys
    whose (basin, lead) cell is absent get a persistence row and are counted
    in ``diagnostics["mtlb_fallback"]``; otherwise :class:`MissingCell` is raised.
    """
    if mode not in ("deterministic", "ensemble"):
        raise ValueError(f"unknown MT-LB mode {mode!r}")
    if on_missing not in ("raise", "persistence"):
        raise ValueError(f"unknown on_missing {on_missing!r}")
    model = model or (MTLB if mode == "deterministic" else MTLB_ENS)
    rows: List[ForecastRow] = []
    fallback = 0
    for key in keys:
        p0 = _initial_state(obs, key)
        cell_key = (obs.basin(key.sid), key.lead_h)
        if cell_key not in clim:
            if on_missing == "raise":
                raise MissingCell(f"no climatology cell for basin {cell_key[0]} lead {cell_key[1]} h")
            fallback += 1
            rows.append(persistence_row(obs, key, model))
            continue
        cell = clim[cell_key]
        if mode == "deterministic":
            rows.append(ForecastRow(model, key.sid, key.init_time, key.lead_h, 0,
                                    apply_tendency(p0, cell.mean, key.valid_time)))
            continue
        for m in range(n_members):
            case = int(keyed_generator(seed, key.sid, key.init_time, key.lead_h, m).integers(cell.n))
            rows.append(ForecastRow(model, key.sid, key.init_time, key.lead_h, m,
                                    apply_tendency(p0, cell.samples[case], key.valid_time)))
    if fallback:
        log.info("%s: %d keys fell back to persistence (no climatology cell)", model, fallback)
    return ForecastSet(model, rows, diagnostics={"mtlb_fallback": fallback})


def persistence_fill(model_fs: ForecastSet, obs: ObservedStore,
                     keys: Sequence[VerificationKey]) -> Tuple[ForecastSet, Dict[int, float]]:
    """Add a flagged persistence row for every key the model does not cover.

    Returns the filled set and the fill fraction per lead.  Rows the model
    provided are passed through untouched.
    """
    rows = list(model_fs)
    filled: Dict[int, int] = defaultdict(int)
    total: Dict[int, int] = defaultdict(int)
    for key in keys:
        total[key.lead_h] += 1
        if not model_fs.covers(key.sid, key.init_time, key.lead_h):
            filled[key.lead_h] += 1
            rows.append(persistence_row(obs, key, model_fs.model, filled=True))
    fractions = {lead: filled[lead] / n for lead, n in sorted(total.items())}
    out = ForecastSet(model_fs.model, rows, provenance=model_fs.provenance,
                      diagnostics={**model_fs.diagnostics, "filled_rows": sum(filled.values())})
    return out, fractions
