"""``tcverify`` command-line entry point.

Exit codes: 0 success, 1 validation or data error, 2 usage error.
Diagnostics go to standard error; data goes to files or standard output.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .baselines import (CLIM_YEARS, PERSISTENCE, ClimatologyTable, build_climatology, mtlb_forecast,
                        persistence_fill, persistence_forecast, samples_sidecar)
from .errors import TCVerifyError
from .matching import MatchPolicy, match_tracks, relabel
from .protocol import (COVERAGE_COLUMNS, EvalConfig, RI_EVENT_COLUMNS, RI_SCORE_COLUMNS, coverage,
                       default_jobs, load_bundle_tables, run_eval, write_bundle)
from .ri_metrics import RIRule, csi, pss, ri_by_lead, truth_ri_events
from .scorecard import METRICS, build_scorecard, metric_spec, render_lead_chart, render_svg
from .synthgen import SynthSpec, write_world
from .track_model import (DEFAULT_LEADS, enumerate_keys, format_float, format_time, load_forecast_dir,
                          load_observed, validate_inclusion, write_forecasts)

log = logging.getLogger("tcverify")


class UsageError(Exception):
    pass


def parse_leads(text: str) -> List[int]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 6
            if step <= 0:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lead specification {text!r}; use 6:120:6 or 24,48") from None


def parse_years(text: str):
    try:
        lo, hi = (int(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad year range {text!r}; use 1980:2022") from None
    return (lo, hi)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcverify",
                                description="Tropical cyclone track and intensity forecast verification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def grid(sp):
        sp.add_argument("--leads", type=parse_leads, default=list(DEFAULT_LEADS),
                        help="lead hours, 6:120:6 or comma list (default 6:120:6)")
        sp.add_argument("--test-year", type=int, default=2023, help="verification year (default 2023)")

    v = sub.add_parser("validate", help="check forecasts against the inclusion criteria")
    v.add_argument("--truth", required=True, type=Path, help="observed-track CSV")
    v.add_argument("--forecasts", required=True, type=Path, help="forecast CSV or directory of CSVs")
    v.add_argument("--out", type=Path, help="write the JSON report here instead of standard output")

    b = sub.add_parser("baseline", help="build persistence or MT-LB baseline forecasts")
    b.add_argument("kind", choices=("persistence", "mtlb"), help="baseline type")
    b.add_argument("--truth", required=True, type=Path, help="observed-track CSV")
    grid(b)
    b.add_argument("--out", required=True, type=Path, help="forecast CSV to write")
    b.add_argument("--clim-years", type=parse_years, default=CLIM_YEARS,
                   help="climatology years, inclusive (default 1980:2022)")
    b.add_argument("--baseline-clim", type=Path, help="existing climatology CSV (with _samples sidecar)")
    b.add_argument("--clim-out", type=Path, help="write the climatology CSV and samples sidecar here")
    b.add_argument("--ensemble", action="store_true", help="sampled MT-LB ensemble instead of mean tendency")
    b.add_argument("--members", type=_positive_int, default=50, help="MT-LB ensemble size (default 50)")
    b.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    e = sub.add_parser("evaluate", help="score models and baselines, write a result bundle")
    e.add_argument("--truth", required=True, type=Path, help="observed-track CSV")
    e.add_argument("--forecasts", required=True, type=Path, help="forecast CSV or directory of CSVs")
    e.add_argument("--mode", choices=("fair", "raw"), default="fair",
                   help="fair: persistence-fill missing keys; raw: covered keys only (default fair)")
    grid(e)
    e.add_argument("--baseline-clim", type=Path, help="climatology CSV for MT-LB (built from truth if absent)")
    e.add_argument("--clim-years", type=parse_years, default=CLIM_YEARS,
                   help="years used when building the climatology (default 1980:2022)")
    e.add_argument("--out", required=True, type=Path, help="result bundle directory")
    e.add_argument("--seed", type=int, default=0, help="random seed for MT-LB sampling (default 0)")
    e.add_argument("--jobs", type=_positive_int, default=None,
                   help="worker threads (default: available CPUs); results do not depend on it")
    e.add_argument("--reduction", choices=("mean", "control"), default="mean",
                   help="ensemble to deterministic reduction (default mean)")
    e.add_argument("--ri-rule", default="majority",
                   help="ensemble RI decision: majority, any or probability(P) (default majority)")
    e.add_argument("--mtlb-members", type=_positive_int, default=50, help="MT-LB ensemble size (default 50)")
    e.add_argument("--match", action="store_true",
                   help="treat forecast sids as provisional ids and match them to observed storms")
    e.add_argument("--match-km", type=float, default=300.0, help="matching distance threshold (default 300)")
    e.add_argument("--provider", action="append", default=[], metavar="MODEL",
                   help="mark MODEL as provider-supplied tracks (repeatable)")

    r = sub.add_parser("ri", help="rapid-intensification contingency scores by lead")
    r.add_argument("--truth", required=True, type=Path, help="observed-track CSV")
    r.add_argument("--forecasts", required=True, type=Path, help="forecast CSV or directory of CSVs")
    r.add_argument("--mode", choices=("fair", "raw"), default="fair", help="fill protocol (default fair)")
    grid(r)
    r.add_argument("--ri-rule", default="majority", help="majority, any or probability(P) (default majority)")
    r.add_argument("--out", required=True, type=Path, help="directory for ri_events.csv and ri_scores.csv")

    s = sub.add_parser("scorecard", help="percent-difference scorecards and lead charts from a bundle")
    s.add_argument("--results", required=True, type=Path, help="result bundle directory")
    s.add_argument("--metric", default="dpe",
                   help=f"one of {', '.join(METRICS)} (case-insensitive) or 'all' (default dpe)")
    s.add_argument("--baseline", default=PERSISTENCE, help=f"baseline model (default {PERSISTENCE})")
    s.add_argument("--out", required=True, type=Path, help="output directory")

    c = sub.add_parser("coverage", help="fraction of verification pairs covered per model and lead")
    c.add_argument("--truth", required=True, type=Path, help="observed-track CSV")
    c.add_argument("--forecasts", required=True, type=Path, help="forecast CSV or directory of CSVs")
    grid(c)
    c.add_argument("--out", type=Path, help="coverage CSV (default standard output)")

    y = sub.add_parser("synth", help="generate a synthetic observed world and forecasts")
    y.add_argument("--spec", required=True, type=Path, help="JSON synthetic world specification")
    y.add_argument("--out", required=True, type=Path, help="output directory")
    return p


def _require(path: Optional[Path], flag: str, directory_ok: bool = True) -> None:
    if path is None:
        return
    if not path.exists():
        raise UsageError(f"{flag}: {path} does not exist")
    if path.is_dir() and not directory_ok:
        raise UsageError(f"{flag}: {path} is a directory")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_digests(truth: Path, forecasts: Path, clim: Optional[Path]) -> Dict[str, str]:
    out = {f"truth/{truth.name}": _digest(truth)}
    files = sorted(forecasts.glob("*.csv")) if forecasts.is_dir() else [forecasts]
    for f in files:
        out[f"forecasts/{f.name}"] = _digest(f)
    if clim is not None:
        out[f"clim/{clim.name}"] = _digest(clim)
        side = samples_sidecar(clim)
        if side.exists():
            out[f"clim/{side.name}"] = _digest(side)
    return out


def _load_clim(path: Path) -> ClimatologyTable:
    side = samples_sidecar(path)
    if not side.exists():
        raise UsageError(f"--baseline-clim: samples sidecar {side} not found")
    return ClimatologyTable.from_csv(side)


def _write_csv(path: Optional[Path], header, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_validate(args) -> int:
    _require(args.truth, "--truth", directory_ok=False)
    _require(args.forecasts, "--forecasts")
    obs = load_observed(args.truth)
    reports = [validate_inclusion(fs, obs) for fs in load_forecast_dir(args.forecasts)]
    payload = json.dumps({r.model: json.loads(r.to_json()) for r in reports}, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(payload + "\n")
    else:
        print(payload)
    failed = [r.model for r in reports if not r.passed]
    for model in failed:
        log.error("%s: inclusion criteria failed", model)
    return 1 if failed or not reports else 0


def cmd_baseline(args) -> int:
    _require(args.truth, "--truth", directory_ok=False)
    _require(args.baseline_clim, "--baseline-clim", directory_ok=False)
    obs = load_observed(args.truth)
    keys = enumerate_keys(obs, args.leads, args.test_year)
    if args.kind == "persistence":
        fs = persistence_forecast(obs, keys)
    else:
        clim = _load_clim(args.baseline_clim) if args.baseline_clim else \
            build_climatology(obs, args.clim_years, args.leads)
        if args.clim_out:
            clim.to_csv(args.clim_out, samples_sidecar(args.clim_out))
        fs = mtlb_forecast(obs, clim, keys, "ensemble" if args.ensemble else "deterministic",
                           n_members=args.members, seed=args.seed, on_missing="persistence")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_forecasts(fs, args.out)
    log.info("wrote %d rows for %d keys to %s", len(fs), len(keys), args.out)
    return 0


def _load_models(args):
    models = load_forecast_dir(args.forecasts)
    if not models:
        raise UsageError(f"--forecasts: no forecast rows found in {args.forecasts}")
    return models


def cmd_evaluate(args) -> int:
    _require(args.truth, "--truth", directory_ok=False)
    _require(args.forecasts, "--forecasts")
    _require(args.baseline_clim, "--baseline-clim", directory_ok=False)
    try:
        RIRule.parse(args.ri_rule)
    except ValueError as exc:
        raise UsageError(f"--ri-rule: {exc}") from None
    cfg = EvalConfig(mode=args.mode, leads=tuple(args.leads), test_year=args.test_year,
                     ensemble_reduction=args.reduction, ri_rule=args.ri_rule, seed=args.seed,
                     mtlb_members=args.mtlb_members, clim_years=args.clim_years)
    obs = load_observed(args.truth)
    models = _load_models(args)
    extra = {}
    if args.match:
        policy = MatchPolicy(max_init_distance_km=args.match_km)
        matched = []
        audits = {}
        for fs in models:
            result = match_tracks(fs, obs, policy)
            audits[fs.model] = json.loads(result.to_json())
            matched.append(relabel(fs, result))
        models = matched
        extra["match_policy"] = {"max_init_distance_km": policy.max_init_distance_km,
                                 "require_init_time_exact": policy.require_init_time_exact}
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "matching.json").write_text(json.dumps(audits, indent=2, sort_keys=True) + "\n")
    for fs in models:
        if fs.model in args.provider:
            fs.provenance = "provider"
    clim = _load_clim(args.baseline_clim) if args.baseline_clim else None
    result = run_eval(obs, models, cfg, clim=clim, jobs=args.jobs or default_jobs())
    write_bundle(result, args.out, _input_digests(args.truth, args.forecasts, args.baseline_clim), extra)
    log.info("wrote bundle for %d models to %s", len(result.models), args.out)
    return 0


def cmd_ri(args) -> int:
    _require(args.truth, "--truth", directory_ok=False)
    _require(args.forecasts, "--forecasts")
    try:
        rule = RIRule.parse(args.ri_rule)
    except ValueError as exc:
        raise UsageError(f"--ri-rule: {exc}") from None
    obs = load_observed(args.truth)
    keys = enumerate_keys(obs, args.leads, args.test_year)
    truth = truth_ri_events(obs)
    events, scores = [], []
    for fs in _load_models(args):
        scored = persistence_fill(fs, obs, keys)[0] if args.mode == "fair" else fs
        table = ri_by_lead(scored, obs, keys, rule, truth)
        for e in table.events:
            events.append([fs.model, e.sid, format_time(e.init_time), format_time(e.window_start), e.lead_h,
                           format_float(e.dvmax_kt), "true" if e.label else "false"])
        for lead, cc in list(table.by_lead.items()) + [("all", table.overall)]:
            scores.append([fs.model, lead, cc.tp, cc.fp, cc.fn, cc.tn, format_float(csi(cc)), format_float(pss(cc))])
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "ri_events.csv", RI_EVENT_COLUMNS, events)
    _write_csv(args.out / "ri_scores.csv", RI_SCORE_COLUMNS, scores)
    return 0


def cmd_scorecard(args) -> int:
    _require(args.results, "--results")
    if not (args.results / "config.json").exists():
        raise UsageError(f"--results: {args.results} is not a result bundle (no config.json)")
    if args.metric.lower() == "all":
        metrics = list(METRICS)
    else:
        try:
            metrics = [metric_spec(args.metric).name]
        except ValueError as exc:
            raise UsageError(f"--metric: {exc}") from None
    tables = load_bundle_tables(args.results)
    args.out.mkdir(parents=True, exist_ok=True)
    for metric in metrics:
        card = build_scorecard(tables, metric, args.baseline)
        stem = metric.lower()
        card.to_csv(args.out / f"scorecard_{stem}.csv")
        render_svg(card, args.out / f"scorecard_{stem}.svg")
        render_lead_chart(tables, metric, tables["models"], args.out / f"leadchart_{stem}.svg")
    return 0


def cmd_coverage(args) -> int:
    _require(args.truth, "--truth", directory_ok=False)
    _require(args.forecasts, "--forecasts")
    obs = load_observed(args.truth)
    keys = enumerate_keys(obs, args.leads, args.test_year)
    report = coverage(_load_models(args), keys)
    _write_csv(args.out, COVERAGE_COLUMNS,
               ([r.model, r.lead_h, r.covered, r.total, format_float(r.fraction), r.provenance]
                for r in report.rows))
    return 0


def cmd_synth(args) -> int:
    _require(args.spec, "--spec", directory_ok=False)
    try:
        spec = SynthSpec.from_json(args.spec)
    except (TypeError, json.JSONDecodeError) as exc:
        raise TCVerifyError(f"{args.spec}: invalid synthetic spec: {exc}") from None
    write_world(spec, args.out)
    return 0


COMMANDS = {"validate": cmd_validate, "baseline": cmd_baseline, "evaluate": cmd_evaluate, "ri": cmd_ri,
            "scorecard": cmd_scorecard, "coverage": cmd_coverage, "synth": cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="tcverify: %(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tcverify: error: {exc}", file=sys.stderr)
        return 2
    except (TCVerifyError, ValueError, KeyError, OSError) as exc:
        print(f"tcverify: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
