"""Track data model and CSV ingestion.

Canonical units are knots for maximum sustained wind, hPa for central
pressure and degrees for position.  Missing intensity values are ``None``.
All timestamps are timezone-aware UTC ``datetime`` objects on the
six-hourly synoptic grid.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import EmptyStore, SchemaError
from .geodesy import GeoPoint

log = logging.getLogger(__name__)

SYNOPTIC_HOURS = (0, 6, 12, 18)
INIT_HOURS = (0, 12)
BASINS = ("NA", "EP", "WP", "NI", "SI", "SP", "SA")
KT_PER_MS = 1.9438445
PMIN_RANGE_HPA = (800.0, 1100.0)
MAX_LEAD_H = 168
PROTOCOL_MAX_LEAD_H = 120
DEFAULT_LEADS = tuple(range(6, 121, 6))

OBSERVED_COLUMNS = ("sid", "time", "lat", "lon", "vmax_kt", "pmin_hpa", "basin")
FORECAST_COLUMNS = ("model", "sid", "init_time", "valid_time", "lead_h", "member",
                    "lat", "lon", "vmax_kt", "pmin_hpa")

TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(TIME_FORMAT)


def format_float(x: Optional[float]) -> str:
    """Shortest round-trip text for a float; ``None`` becomes an empty field."""
    if x is None:
        return ""
    x = float(x)
    if x == 0.0:
        x = 0.0
    return repr(x)


def is_synoptic(dt: datetime) -> bool:
    return dt.minute == 0 and dt.second == 0 and dt.microsecond == 0 and dt.hour in SYNOPTIC_HOURS


def hours_between(t0: datetime, t1: datetime) -> float:
    return (t1 - t0).total_seconds() / 3600.0


@dataclass(frozen=True)
class TrackPoint:
    position: GeoPoint
    vmax_kt: Optional[float]
    pmin_hpa: Optional[float]
    valid_time: datetime

    def __post_init__(self):
        if not is_synoptic(self.valid_time):
            raise ValueError(f"valid_time {self.valid_time} is not on the 6-hourly synoptic grid")
        if self.vmax_kt is not None:
            if not math.isfinite(self.vmax_kt) or self.vmax_kt < 0:
                raise ValueError(f"vmax_kt {self.vmax_kt} must be finite and >= 0")
        if self.pmin_hpa is not None:
            lo, hi = PMIN_RANGE_HPA
            if not (math.isfinite(self.pmin_hpa) and lo <= self.pmin_hpa <= hi):
                raise ValueError(f"pmin_hpa {self.pmin_hpa} outside [{lo}, {hi}]")

    def moved(self, valid_time: datetime) -> "TrackPoint":
        """Same state stamped at another valid time."""
        return TrackPoint(self.position, self.vmax_kt, self.pmin_hpa, valid_time)


@dataclass(frozen=True)
class ObservedStorm:
    sid: str
    basin: str
    points: Tuple[TrackPoint, ...]
    _by_time: Mapping[datetime, TrackPoint] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sid:
            raise ValueError("empty storm id")
        if self.basin not in BASINS:
            raise ValueError(f"unknown basin {self.basin!r}")
        pts = tuple(self.points)
        for a, b in zip(pts, pts[1:]):
            if b.valid_time <= a.valid_time:
                raise ValueError(f"{self.sid}: points not strictly increasing at {b.valid_time}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_by_time", {p.valid_time: p for p in pts})

    def at(self, time: datetime) -> Optional[TrackPoint]:
        return self._by_time.get(time)

    @property
    def gaps(self) -> List[Tuple[datetime, datetime]]:
        """Consecutive point pairs more than 6 h apart (never interpolated)."""
        return [(a.valid_time, b.valid_time) for a, b in zip(self.points, self.points[1:])
                if b.valid_time - a.valid_time > timedelta(hours=6)]


class ObservedStore:
    """Immutable best-track archive keyed by storm id."""

    def __init__(self, storms: Iterable[ObservedStorm], year_range: Optional[Tuple[int, int]] = None,
                 diagnostics: Optional[dict] = None):
        table: Dict[str, ObservedStorm] = {}
        for storm in storms:
            if storm.sid in table:
                raise ValueError(f"duplicate storm id {storm.sid}")
            table[storm.sid] = storm
        self._storms = MappingProxyType(dict(sorted(table.items())))
        years = [p.valid_time.year for s in table.values() for p in s.points]
        if year_range is None:
            year_range = (min(years), max(years)) if years else (0, 0)
        elif years and (min(years) < year_range[0] or max(years) > year_range[1]):
            raise ValueError(f"observations fall outside year_range {year_range}")
        self.year_range = tuple(year_range)
        self.diagnostics = MappingProxyType(dict(diagnostics or {}))

    @property
    def storms(self) -> Mapping[str, ObservedStorm]:
        return self._storms

    def __len__(self):
        return len(self._storms)

    def __iter__(self) -> Iterator[ObservedStorm]:
        return iter(self._storms.values())

    def __eq__(self, other):
        if not isinstance(other, ObservedStore):
            return NotImplemented
        return dict(self._storms) == dict(other._storms) and self.year_range == other.year_range

    def point(self, sid: str, time: datetime) -> Optional[TrackPoint]:
        storm = self._storms.get(sid)
        return storm.at(time) if storm is not None else None

    def basin(self, sid: str) -> str:
        return self._storms[sid].basin


@dataclass(frozen=True, order=True)
class VerificationKey:
    sid: str
    init_time: datetime
    lead_h: int

    @property
    def valid_time(self) -> datetime:
        return self.init_time + timedelta(hours=self.lead_h)


@dataclass(frozen=True)
class ForecastRow:
    model: str
    sid: str
    init_time: datetime
    lead_h: int
    member: int
    point: TrackPoint
    filled: bool = False

    def __post_init__(self):
        if self.lead_h < 0 or self.lead_h % 6 or self.lead_h > MAX_LEAD_H:
            raise ValueError(f"lead_h {self.lead_h} must be a multiple of 6 in [0, {MAX_LEAD_H}]")
        if self.member < 0:
            raise ValueError(f"member {self.member} must be >= 0")
        if self.point.valid_time != self.init_time + timedelta(hours=self.lead_h):
            raise ValueError("valid_time != init_time + lead_h")

    @property
    def key(self) -> Tuple[str, datetime, int, int]:
        return (self.sid, self.init_time, self.lead_h, self.member)

    @property
    def protocol_eligible(self) -> bool:
        return self.init_time.hour in INIT_HOURS


class ForecastSet:
    """All forecast rows of one model, indexed by (sid, init, lead, member)."""

    def __init__(self, model: str, rows: Iterable[ForecastRow] = (), provenance: str = "derived",
                 diagnostics: Optional[dict] = None):
        self.model = model
        self.provenance = provenance
        table: Dict[Tuple[str, datetime, int, int], ForecastRow] = {}
        for row in rows:
            if row.key in table:
                raise ValueError(f"duplicate forecast key {row.key}")
            table[row.key] = row
        self._rows = dict(sorted(table.items()))
        self._by_lead: Dict[Tuple[str, datetime, int], List[ForecastRow]] = defaultdict(list)
        for (sid, init, lead, _), row in self._rows.items():
            self._by_lead[(sid, init, lead)].append(row)
        self._by_lead = dict(self._by_lead)
        self.diagnostics = dict(diagnostics or {})

    def __len__(self):
        return len(self._rows)

    def __iter__(self) -> Iterator[ForecastRow]:
        return iter(self._rows.values())

    def __eq__(self, other):
        if not isinstance(other, ForecastSet):
            return NotImplemented
        return self.model == other.model and self._rows == other._rows

    def __repr__(self):
        return f"ForecastSet(model={self.model!r}, rows={len(self)})"

    @property
    def rows(self) -> List[ForecastRow]:
        return list(self._rows.values())

    def row(self, sid: str, init_time: datetime, lead_h: int, member: int) -> Optional[ForecastRow]:
        return self._rows.get((sid, init_time, lead_h, member))

    def members(self, sid: str, init_time: datetime, lead_h: int) -> List[ForecastRow]:
        return list(self._by_lead.get((sid, init_time, lead_h), ()))

    def covers(self, sid: str, init_time: datetime, lead_h: int) -> bool:
        return (sid, init_time, lead_h) in self._by_lead

    def covered_keys(self) -> List[Tuple[str, datetime, int]]:
        return list(self._by_lead)

    def tracks(self) -> List[Tuple[str, datetime]]:
        """Distinct (sid, init_time) pairs in canonical order."""
        return sorted({(sid, init) for sid, init, _ in self._by_lead})

    @property
    def ensemble_size(self) -> Dict[Tuple[str, datetime], int]:
        members: Dict[Tuple[str, datetime], set] = defaultdict(set)
        for sid, init, _, m in self._rows:
            members[(sid, init)].add(m)
        return {k: len(v) for k, v in sorted(members.items())}


def _open_rows(path: Path, required: Sequence[str], alternatives: Mapping[str, str]):
    """Yield (line_number, row dict) after checking the header."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise SchemaError("missing header", path=path)
        header = [h.strip() for h in header]
        reader.fieldnames = header
        for col in required:
            if col in header:
                continue
            alt = alternatives.get(col)
            if alt is not None and alt in header:
                continue
            raise SchemaError(f"missing required column '{col}'", path=path, column=col)
        for row in reader:
            yield reader.line_num, {k: (v.strip() if isinstance(v, str) else v) for k, v in row.items()}


_UNIT_ALTERNATIVES = {"vmax_kt": "vmax_ms", "pmin_hpa": "pmin_pa"}


def _float(row, col, path, line, required=True) -> Optional[float]:
    text = row.get(col)
    if text is None or text == "":
        if required:
            raise SchemaError("empty required value", path=path, row=line, column=col)
        return None
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"not a number: {text!r}", path=path, row=line, column=col) from None
    if not math.isfinite(value):
        raise SchemaError(f"non-finite value {text!r}", path=path, row=line, column=col)
    return value


def _int(row, col, path, line) -> int:
    text = row.get(col) or ""
    try:
        return int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            value = math.nan
        if value.is_integer():
            return int(value)
        raise SchemaError(f"not an integer: {text!r}", path=path, row=line, column=col) from None


def _time(row, col, path, line) -> datetime:
    text = row.get(col) or ""
    try:
        return parse_time(text)
    except ValueError:
        raise SchemaError(f"bad ISO 8601 timestamp {text!r}", path=path, row=line, column=col) from None


def _intensity(row, path, line) -> Tuple[Optional[float], Optional[float]]:
    if "vmax_kt" in row:
        vmax = _float(row, "vmax_kt", path, line, required=False)
    else:
        vmax = _float(row, "vmax_ms", path, line, required=False)
        vmax = None if vmax is None else vmax * KT_PER_MS
    if "pmin_hpa" in row:
        pmin = _float(row, "pmin_hpa", path, line, required=False)
    else:
        pmin = _float(row, "pmin_pa", path, line, required=False)
        pmin = None if pmin is None else pmin / 100.0
    return vmax, pmin


def _position(row, path, line) -> GeoPoint:
    lat = _float(row, "lat", path, line)
    lon = _float(row, "lon", path, line)
    if not -180.0 <= lon < 360.0:
        raise SchemaError(f"longitude {lon} outside [-180, 360)", path=path, row=line, column="lon")
    try:
        return GeoPoint(lat, lon)
    except ValueError as exc:
        raise SchemaError(str(exc), path=path, row=line, column="lat") from None


def _track_point(position, vmax, pmin, valid_time, path, line) -> TrackPoint:
    try:
        return TrackPoint(position, vmax, pmin, valid_time)
    except ValueError as exc:
        raise SchemaError(str(exc), path=path, row=line) from None


def load_observed(path, year_filter: Optional[Tuple[int, int]] = None) -> ObservedStore:
    """Load a best-track CSV, keeping only 6-hourly synoptic rows."""
    path = Path(path)
    by_sid: Dict[str, list] = defaultdict(list)
    dropped_off_synoptic = 0
    dropped_year = 0
    for line, row in _open_rows(path, OBSERVED_COLUMNS, _UNIT_ALTERNATIVES):
        sid = row.get("sid") or ""
        if not sid:
            raise SchemaError("empty storm id", path=path, row=line, column="sid")
        time = _time(row, "time", path, line)
        basin = row.get("basin") or ""
        if basin not in BASINS:
            raise SchemaError(f"unknown basin {basin!r}", path=path, row=line, column="basin")
        position = _position(row, path, line)
        vmax, pmin = _intensity(row, path, line)
        if not is_synoptic(time):
            dropped_off_synoptic += 1
            continue
        if year_filter is not None and not year_filter[0] <= time.year <= year_filter[1]:
            dropped_year += 1
            continue
        by_sid[sid].append((time, line, basin, _track_point(position, vmax, pmin, time, path, line)))

    storms = []
    for sid, entries in by_sid.items():
        entries.sort(key=lambda e: (e[0], e[1]))
        for a, b in zip(entries, entries[1:]):
            if a[0] == b[0]:
                raise SchemaError(f"duplicate observation for {sid} at {format_time(b[0])}", path=path, row=b[1])
        storms.append(ObservedStorm(sid, entries[0][2], tuple(e[3] for e in entries)))
    if not storms:
        raise EmptyStore(f"{path}: no storms after filtering")
    if dropped_off_synoptic:
        log.info("%s: dropped %d off-synoptic rows", path, dropped_off_synoptic)
    return ObservedStore(storms, year_range=year_filter,
                         diagnostics={"dropped_off_synoptic": dropped_off_synoptic, "dropped_year": dropped_year})


def _forecast_files(path: Path) -> List[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix == ".csv")
    return [path]


def _read_forecast_rows(path: Path):
    """Parse forecast CSV(s); returns (rows by model, diagnostics by model)."""
    raw: Dict[str, Dict[tuple, tuple]] = defaultdict(dict)
    diag: Dict[str, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for file in _forecast_files(path):
        for line, row in _open_rows(file, FORECAST_COLUMNS, _UNIT_ALTERNATIVES):
            model = row.get("model") or ""
            if not model:
                raise SchemaError("empty model name", path=file, row=line, column="model")
            sid = row.get("sid") or ""
            if not sid:
                raise SchemaError("empty storm id", path=file, row=line, column="sid")
            init = _time(row, "init_time", file, line)
            valid = _time(row, "valid_time", file, line)
            lead = _int(row, "lead_h", file, line)
            member = _int(row, "member", file, line)
            if member < 0:
                raise SchemaError(f"negative member {member}", path=file, row=line, column="member")
            position = _position(row, file, line)
            vmax, pmin = _intensity(row, file, line)
            d = diag[model]
            d["rows_read"] += 1
            if vmax is not None:
                d["vmax_present"] += 1
            if pmin is not None:
                d["pmin_present"] += 1
            if valid != init + timedelta(hours=lead):
                d["inconsistent_valid_time"] += 1
                continue
            if lead < 0 or lead % 6 or lead > MAX_LEAD_H:
                d["off_grid_lead"] += 1
                continue
            if not is_synoptic(valid):
                d["off_synoptic"] += 1
                continue
            point = _track_point(position, vmax, pmin, valid, file, line)
            key = (sid, init, lead, member)
            if key in raw[model]:
                d["duplicates"] += 1
            raw[model][key] = point
    return raw, diag


def _build_set(model: str, points: Dict[tuple, TrackPoint], diag: Dict[str, int]) -> ForecastSet:
    members_by_track: Dict[Tuple[str, datetime], set] = defaultdict(set)
    for sid, init, _, m in points:
        members_by_track[(sid, init)].add(m)
    renumber = {}
    renumbered = 0
    for track, ms in members_by_track.items():
        ordered = sorted(ms)
        if ordered != list(range(len(ordered))):
            renumbered += 1
        renumber[track] = {m: i for i, m in enumerate(ordered)}
    rows = []
    for (sid, init, lead, m), point in points.items():
        rows.append(ForecastRow(model, sid, init, lead, renumber[(sid, init)][m], point))
    diagnostics = dict(diag)
    diagnostics["renumbered_tracks"] = renumbered
    diagnostics["protocol_ineligible"] = sum(1 for r in rows if not r.protocol_eligible)
    if diagnostics.get("duplicates"):
        log.warning("%s: %d duplicate forecast keys (last write wins)", model, diagnostics["duplicates"])
    return ForecastSet(model, rows, diagnostics=diagnostics)


def load_forecasts(path, model: str) -> ForecastSet:
    """Load the rows of ``model`` from a forecast CSV or a directory of CSVs."""
    raw, diag = _read_forecast_rows(Path(path))
    return _build_set(model, raw.get(model, {}), diag.get(model, {}))


def load_forecast_dir(path) -> List[ForecastSet]:
    """Load every model found in a forecast CSV or directory, sorted by name."""
    raw, diag = _read_forecast_rows(Path(path))
    return [_build_set(m, raw[m], diag[m]) for m in sorted(raw)]


def write_observed(store: ObservedStore, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBSERVED_COLUMNS)
        for storm in store:
            for p in storm.points:
                w.writerow([storm.sid, format_time(p.valid_time), format_float(p.position.lat),
                            format_float(p.position.lon), format_float(p.vmax_kt),
                            format_float(p.pmin_hpa), storm.basin])


def write_forecasts(fs: ForecastSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for r in fs:
            p = r.point
            w.writerow([fs.model, r.sid, format_time(r.init_time), format_time(p.valid_time), r.lead_h,
                        r.member, format_float(p.position.lat), format_float(p.position.lon),
                        format_float(p.vmax_kt), format_float(p.pmin_hpa)])


def enumerate_keys(obs: ObservedStore, leads: Sequence[int], test_year: int) -> List[VerificationKey]:
    """All (sid, t0, L) with a 00/12Z t0 in ``test_year`` observed at t0 and t0+L."""
    if not leads:
        raise ValueError("leads must be nonempty")
    for lead in leads:
        if lead <= 0 or lead % 6:
            raise ValueError(f"lead {lead} is not a positive multiple of 6")
    keys = []
    for storm in obs:
        for p in storm.points:
            t0 = p.valid_time
            if t0.hour not in INIT_HOURS or t0.year != test_year:
                continue
            for lead in sorted(set(leads)):
                if storm.at(t0 + timedelta(hours=lead)) is not None:
                    keys.append(VerificationKey(storm.sid, t0, lead))
    return sorted(keys)


@dataclass
class CriterionResult:
    criterion: str
    passed: bool
    detail: str
    count: int

    def to_dict(self):
        return {"criterion": self.criterion, "pass": self.passed, "detail": self.detail, "count": self.count}


@dataclass
class ValidationReport:
    model: str
    criteria: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_json(self) -> str:
        return json.dumps([c.to_dict() for c in self.criteria], indent=2)


def validate_inclusion(fs: ForecastSet, obs: ObservedStore) -> ValidationReport:
    """Check a forecast set against the dataset inclusion criteria (a)-(d)."""
    results = []

    # (a) 00Z and 12Z initializations on every forecast day the storm is observed
    days: Dict[Tuple[str, object], set] = defaultdict(set)
    for sid, init in fs.tracks():
        days[(sid, init.date())].add(init.hour)
    expected = covered = 0
    for (sid, day), hours in days.items():
        for hour in INIT_HOURS:
            slot = datetime(day.year, day.month, day.day, hour, tzinfo=timezone.utc)
            if sid in obs.storms and obs.point(sid, slot) is None and hour not in hours:
                continue
            expected += 1
            covered += hour in hours
    frac = covered / expected if expected else 0.0
    results.append(CriterionResult("a_two_inits_per_day", expected > 0 and covered == expected,
                                   f"00Z/12Z init coverage fraction {frac:.4f}", expected - covered))

    # (b) leads through 120 h or to the end of the observed record
    short = 0
    max_lead: Dict[Tuple[str, datetime], int] = defaultdict(int)
    for sid, init, lead in fs.covered_keys():
        max_lead[(sid, init)] = max(max_lead[(sid, init)], lead)
    for (sid, init), reach in max_lead.items():
        need = PROTOCOL_MAX_LEAD_H
        storm = obs.storms.get(sid)
        if storm is not None and storm.points:
            remaining = int(hours_between(init, storm.points[-1].valid_time))
            need = max(0, min(need, remaining))
        short += reach < need
    results.append(CriterionResult("b_lead_coverage", bool(max_lead) and short == 0,
                                   f"{short} of {len(max_lead)} tracks stop before 120 h or storm end", short))

    # (c) contiguous 6-hourly lead grid
    leads_by_track: Dict[Tuple[str, datetime], set] = defaultdict(set)
    for sid, init, lead in fs.covered_keys():
        leads_by_track[(sid, init)].add(lead)
    gappy = sum(1 for ls in leads_by_track.values()
                if set(range(min(ls), max(ls) + 1, 6)) != ls)
    rejected = fs.diagnostics.get("off_grid_lead", 0) + fs.diagnostics.get("off_synoptic", 0)
    results.append(CriterionResult("c_six_hourly", gappy == 0 and rejected == 0,
                                   f"{gappy} tracks with lead gaps; {rejected} off-grid rows rejected",
                                   gappy + rejected))

    # (d) lat/lon/pmin/vmax all provided
    absent = []
    rows = fs.rows
    if not rows:
        absent = ["lat", "lon", "pmin", "vmax"]
    else:
        if all(r.point.pmin_hpa is None for r in rows):
            absent.append("pmin")
        if all(r.point.vmax_kt is None for r in rows):
            absent.append("vmax")
    detail = "missing: " + ",".join(absent) if absent else "lat, lon, pmin, vmax present"
    results.append(CriterionResult("d_track_variables", not absent, detail, len(absent)))
    return ValidationReport(fs.model, results)
