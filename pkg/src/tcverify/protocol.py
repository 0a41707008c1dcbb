"""FAIR and RAW evaluation over the verification-key grid."""
from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .baselines import (CLIM_YEARS, MTLB, MTLB_ENS, PERSISTENCE, ClimatologyTable, build_climatology,
                        mtlb_forecast, persistence_fill, persistence_forecast)
from .det_metrics import FIELDS, MetricRecord, aggregate, score_key
from .errors import EmptyClimatology, NoKeys
from .geodesy import EARTH, EarthModel
from .prob_metrics import CLAMP_TOL_KM, fair_crps, track_crps_raw
from .ri_metrics import RIRule, RITable, csi, pss, ri_by_lead, truth_ri_events
from .track_model import (DEFAULT_LEADS, ForecastSet, ObservedStore, VerificationKey, enumerate_keys,
                          format_float, format_time)

log = logging.getLogger(__name__)

BASELINE_NAMES = (PERSISTENCE, MTLB, MTLB_ENS)

DET_COLUMNS = ("model", "sid", "init_time", "lead_h", "dpe_km", "cte_km", "ate_km",
               "ae_vmax_kt", "ae_pmin_hpa", "filled")
PROB_COLUMNS = ("model", "sid", "init_time", "lead_h", "crps_track_km", "crps_vmax_kt",
                "crps_pmin_hpa", "n_members", "filled")
RI_EVENT_COLUMNS = ("model", "sid", "init_time", "window_start", "lead_h", "dvmax_kt", "label")
RI_SCORE_COLUMNS = ("model", "lead_h", "tp", "fp", "fn", "tn", "csi", "pss")
COVERAGE_COLUMNS = ("model", "lead_h", "covered", "total", "fraction", "provenance")
SUMMARY_COLUMNS = ("model", "lead_h", "field", "n", "n_excluded", "mae", "rmse", "r2", "bias")


@dataclass
class EvalConfig:
    mode: str = "fair"
    leads: Tuple[int, ...] = DEFAULT_LEADS
    test_year: int = 2023
    ensemble_reduction: str = "mean"
    ri_rule: str = "majority"
    seed: int = 0
    mtlb_members: int = 50
    clim_years: Tuple[int, int] = CLIM_YEARS

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in ("fair", "raw"):
            raise ValueError(f"mode must be fair or raw, got {self.mode!r}")
        self.leads = tuple(sorted(set(int(x) for x in self.leads)))
        if not self.leads or any(x % 6 or not 6 <= x <= 120 for x in self.leads):
            raise ValueError("leads must be multiples of 6 in [6, 120]")
        if self.test_year < 1980:
            raise ValueError("test_year must be >= 1980")
        if self.ensemble_reduction not in ("mean", "control"):
            raise ValueError("ensemble_reduction must be mean or control")
        RIRule.parse(self.ri_rule)
        self.clim_years = tuple(self.clim_years)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["leads"] = list(self.leads)
        d["clim_years"] = list(self.clim_years)
        return d


@dataclass(frozen=True)
class ProbRecord:
    key: VerificationKey
    model: str
    crps_track_km: float
    crps_vmax_kt: Optional[float]
    crps_pmin_hpa: Optional[float]
    n_members: int
    filled: bool = False


@dataclass(frozen=True)
class CoverageRow:
    model: str
    lead_h: int
    covered: int
    total: int
    provenance: str = "derived"

    @property
    def fraction(self) -> float:
        return self.covered / self.total if self.total else 0.0


@dataclass
class CoverageReport:
    rows: List[CoverageRow] = field(default_factory=list)

    def fraction(self, model: str, lead: int) -> float:
        for r in self.rows:
            if r.model == model and r.lead_h == lead:
                return r.fraction
        raise KeyError((model, lead))


@dataclass
class EvalResult:
    config: EvalConfig
    models: List[str]
    det_records: List[MetricRecord]
    prob_records: List[ProbRecord]
    ri: Dict[str, RITable]
    coverage: CoverageReport
    n_keys_by_lead: Dict[int, int]
    diagnostics: dict = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)


def coverage(models: Sequence[ForecastSet], keys: Sequence[VerificationKey]) -> CoverageReport:
    """Fraction of verification pairs each model covers with at least one row, per lead."""
    total: Dict[int, int] = defaultdict(int)
    for k in keys:
        total[k.lead_h] += 1
    rows = []
    for fs in models:
        covered: Dict[int, int] = defaultdict(int)
        for k in keys:
            if fs.covers(k.sid, k.init_time, k.lead_h):
                covered[k.lead_h] += 1
        rows.extend(CoverageRow(fs.model, lead, covered[lead], n, fs.provenance) for lead, n in sorted(total.items()))
    return CoverageReport(rows)


def _intensity_crps(values, y) -> Optional[float]:
    vals = [v for v in values if v is not None]
    if not vals or y is None:
        return None
    return fair_crps(vals, y)


def _score_chunk(fs: ForecastSet, obs: ObservedStore, keys: Sequence[VerificationKey], reduction: str,
                 earth: EarthModel):
    det, prob = [], []
    clamped = 0
    for key in keys:
        rows = fs.members(key.sid, key.init_time, key.lead_h)
        if not rows:
            continue
        points = [r.point for r in rows]
        filled = any(r.filled for r in rows)
        obs_now = obs.point(key.sid, key.valid_time)
        obs_prev = obs.point(key.sid, key.valid_time - timedelta(hours=12))
        det.append(score_key(points, obs_now, obs_prev, key=key, model=fs.model, filled=filled,
                             reduction=reduction, earth=earth))
        crps_track = track_crps_raw([p.position for p in points], obs_now.position, earth)
        if -CLAMP_TOL_KM < crps_track < 0.0:
            crps_track = 0.0
            clamped += 1
        prob.append(ProbRecord(key, fs.model, crps_track,
                               _intensity_crps([p.vmax_kt for p in points], obs_now.vmax_kt),
                               _intensity_crps([p.pmin_hpa for p in points], obs_now.pmin_hpa),
                               len(points), filled))
    return det, prob, clamped


def _chunks(seq, n):
    size = max(1, -(-len(seq) // max(1, n)))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def default_jobs() -> int:
    return os.cpu_count() or 1


def run_eval(obs: ObservedStore, models: Sequence[ForecastSet], cfg: EvalConfig,
             clim: Optional[ClimatologyTable] = None, jobs: int = 1, earth: EarthModel = EARTH,
             include_baselines: bool = True) -> EvalResult:
    """Score every model and baseline on the verification-key grid.

    FAIR mode fills uncovered keys with flagged persistence rows so every
    model is averaged over the same pairs; RAW mode scores only the keys a
    model covers.  Baselines go through exactly the same path.  Output does
    not depend on ``jobs``.
    """
    keys = enumerate_keys(obs, cfg.leads, cfg.test_year)
    if not keys:
        raise NoKeys(f"no verification keys for test year {cfg.test_year}")
    names = [fs.model for fs in models]
    clash = sorted(set(names) & set(BASELINE_NAMES))
    if clash or len(set(names)) != len(names):
        raise ValueError(f"model names must be unique and not reserved: {clash or names}")

    diagnostics: dict = {"notes": []}
    sets: List[ForecastSet] = []
    if include_baselines:
        sets.append(persistence_forecast(obs, keys))
        if clim is None:
            try:
                clim = build_climatology(obs, cfg.clim_years, cfg.leads)
            except EmptyClimatology:
                diagnostics["notes"].append(
                    f"no observations in {cfg.clim_years[0]}-{cfg.clim_years[1]}; MT-LB baselines omitted")
        if clim is not None:
            det = mtlb_forecast(obs, clim, keys, "deterministic", on_missing="persistence")
            ens = mtlb_forecast(obs, clim, keys, "ensemble", n_members=cfg.mtlb_members, seed=cfg.seed,
                                on_missing="persistence")
            diagnostics["mtlb_fallback_keys"] = det.diagnostics["mtlb_fallback"]
            sets.extend([det, ens])
    sets.extend(models)

    cov = coverage(sets, keys)
    rule = RIRule.parse(cfg.ri_rule)
    truth = truth_ri_events(obs)
    det_records: List[MetricRecord] = []
    prob_records: List[ProbRecord] = []
    ri_tables: Dict[str, RITable] = {}
    fill: Dict[str, Dict[int, float]] = {}
    clamped = 0
    key_chunks = _chunks(keys, jobs)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for fs in sets:
            if cfg.mode == "fair":
                scored, fractions = persistence_fill(fs, obs, keys)
                fill[fs.model] = fractions
            else:
                scored = fs
            parts = list(pool.map(lambda ks: _score_chunk(scored, obs, ks, cfg.ensemble_reduction, earth),
                                  key_chunks))
            for det, prob, c in parts:
                det_records.extend(det)
                prob_records.extend(prob)
                clamped += c
            ri_tables[fs.model] = ri_by_lead(scored, obs, keys, rule, truth)

    order = {fs.model: i for i, fs in enumerate(sets)}
    sort_key = lambda r: (order[r.model], r.key)  # noqa: E731
    det_records.sort(key=sort_key)
    prob_records.sort(key=sort_key)
    n_keys: Dict[int, int] = defaultdict(int)
    for k in keys:
        n_keys[k.lead_h] += 1
    diagnostics["crps_track_clamped"] = clamped
    if cfg.mode == "fair":
        diagnostics["fill_fraction"] = {m: {str(l): f for l, f in fr.items()} for m, fr in fill.items()}
    return EvalResult(cfg, [fs.model for fs in sets], det_records, prob_records, ri_tables, cov,
                      dict(sorted(n_keys.items())), diagnostics, {fs.model: fs.provenance for fs in sets})


def _flag(b: bool) -> str:
    return "true" if b else "false"


def _key_cells(key: VerificationKey):
    return [key.sid, format_time(key.init_time), key.lead_h]


def det_rows(result: EvalResult):
    for r in result.det_records:
        yield [r.model, *_key_cells(r.key), format_float(r.dpe_km), format_float(r.cte_km),
               format_float(r.ate_km), format_float(r.ae_vmax_kt), format_float(r.ae_pmin_hpa), _flag(r.filled)]


def prob_rows(result: EvalResult):
    for r in result.prob_records:
        yield [r.model, *_key_cells(r.key), format_float(r.crps_track_km), format_float(r.crps_vmax_kt),
               format_float(r.crps_pmin_hpa), r.n_members, _flag(r.filled)]


def ri_event_rows(result: EvalResult):
    for model in result.models:
        for e in result.ri[model].events:
            yield [model, e.sid, format_time(e.init_time), format_time(e.window_start), e.lead_h,
                   format_float(e.dvmax_kt), _flag(e.label)]


def ri_score_rows(result: EvalResult):
    for model in result.models:
        table = result.ri[model]
        cells = list(table.by_lead.items()) + [("all", table.overall)]
        for lead, c in cells:
            yield [model, lead, c.tp, c.fp, c.fn, c.tn, format_float(csi(c)), format_float(pss(c))]


def summary_rows(result: EvalResult):
    by_model: Dict[str, List[MetricRecord]] = defaultdict(list)
    for r in result.det_records:
        by_model[r.model].append(r)
    for model in result.models:
        recs = by_model.get(model)
        if not recs:
            continue
        for lead, fields in aggregate(recs, by_lead=True).items():
            for name in FIELDS:
                s = fields[name]
                yield [model, lead, name, s.n, s.n_excluded, format_float(s.mae), format_float(s.rmse),
                       format_float(s.r2), format_float(s.bias)]


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_bundle(result: EvalResult, out_dir, inputs: Optional[Dict[str, str]] = None,
                 extra: Optional[dict] = None) -> Path:
    """Write the result bundle; identical results give byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "records_det.csv", DET_COLUMNS, det_rows(result))
    _write_csv(out / "records_prob.csv", PROB_COLUMNS, prob_rows(result))
    _write_csv(out / "ri_events.csv", RI_EVENT_COLUMNS, ri_event_rows(result))
    _write_csv(out / "ri_scores.csv", RI_SCORE_COLUMNS, ri_score_rows(result))
    _write_csv(out / "coverage.csv", COVERAGE_COLUMNS,
               ([r.model, r.lead_h, r.covered, r.total, format_float(r.fraction), r.provenance]
                for r in result.coverage.rows))
    _write_csv(out / "summary_det.csv", SUMMARY_COLUMNS, summary_rows(result))
    config = {
        "version": __version__,
        "config": result.config.to_dict(),
        "models": [{"name": m, "provenance": result.provenance.get(m, "derived")} for m in result.models],
        "keys_by_lead": {str(k): v for k, v in result.n_keys_by_lead.items()},
        "inputs": dict(sorted((inputs or {}).items())),
        "diagnostics": result.diagnostics,
    }
    if extra:
        config.update(extra)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return out


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def load_bundle_tables(path) -> dict:
    """Parse a bundle directory back into typed row dicts."""
    path = Path(path)
    tables = {}
    with open(path / "records_det.csv", newline="") as fh:
        tables["det"] = [{**r, "lead_h": int(r["lead_h"]), "filled": r["filled"] == "true",
                          **{c: _opt_float(r[c]) for c in DET_COLUMNS[4:9]}}
                         for r in csv.DictReader(fh)]
    with open(path / "records_prob.csv", newline="") as fh:
        tables["prob"] = [{**r, "lead_h": int(r["lead_h"]), "filled": r["filled"] == "true",
                           "n_members": int(r["n_members"]),
                           **{c: _opt_float(r[c]) for c in PROB_COLUMNS[4:7]}}
                          for r in csv.DictReader(fh)]
    with open(path / "ri_scores.csv", newline="") as fh:
        tables["ri"] = [{**r, **{c: int(r[c]) for c in ("tp", "fp", "fn", "tn")},
                         "csi": _opt_float(r["csi"]), "pss": _opt_float(r["pss"])}
                        for r in csv.DictReader(fh) if r["lead_h"] != "all"]
        for r in tables["ri"]:
            r["lead_h"] = int(r["lead_h"])
    config = json.loads((path / "config.json").read_text())
    tables["models"] = [m["name"] for m in config["models"]]
    tables["leads"] = config["config"]["leads"]
    tables["keys_by_lead"] = {int(k): v for k, v in config["keys_by_lead"].items()}
    return tables


def result_tables(result: EvalResult) -> dict:
    """In-memory equivalent of :func:`load_bundle_tables`."""
    det = [{"model": r.model, "sid": r.key.sid, "init_time": format_time(r.key.init_time),
            "lead_h": r.key.lead_h, "dpe_km": r.dpe_km, "cte_km": r.cte_km, "ate_km": r.ate_km,
            "ae_vmax_kt": r.ae_vmax_kt, "ae_pmin_hpa": r.ae_pmin_hpa, "filled": r.filled}
           for r in result.det_records]
    prob = [{"model": r.model, "sid": r.key.sid, "init_time": format_time(r.key.init_time),
             "lead_h": r.key.lead_h, "crps_track_km": r.crps_track_km, "crps_vmax_kt": r.crps_vmax_kt,
             "crps_pmin_hpa": r.crps_pmin_hpa, "n_members": r.n_members, "filled": r.filled}
            for r in result.prob_records]
    ri = []
    for model in result.models:
        for lead, c in result.ri[model].by_lead.items():
            ri.append({"model": model, "lead_h": lead, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
                       "csi": csi(c), "pss": pss(c)})
    return {"det": det, "prob": prob, "ri": ri, "models": list(result.models),
            "leads": list(result.config.leads), "keys_by_lead": dict(result.n_keys_by_lead)}
