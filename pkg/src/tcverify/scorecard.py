"""Per-lead scorecards and SVG rendering.

Scorecards are built from result-bundle tables (see
:func:`tcverify.protocol.load_bundle_tables`), so a card computed from an
in-memory result and one computed from the CSV files are identical.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .baselines import MTLB, MTLB_ENS, PERSISTENCE
from .errors import UnknownBaseline
from .track_model import format_float


@dataclass(frozen=True)
class MetricSpec:
    name: str
    table: str
    column: str
    units: str
    higher_is_better: bool = False


METRICS: Dict[str, MetricSpec] = {m.name: m for m in (
    MetricSpec("DPE", "det", "dpe_km", "km"),
    MetricSpec("CRPS_track", "prob", "crps_track_km", "km"),
    MetricSpec("AE_pmin", "det", "ae_pmin_hpa", "hPa"),
    MetricSpec("CRPS_pmin", "prob", "crps_pmin_hpa", "hPa"),
    MetricSpec("AE_vmax", "det", "ae_vmax_kt", "kt"),
    MetricSpec("CRPS_vmax", "prob", "crps_vmax_kt", "kt"),
    MetricSpec("CSI", "ri", "csi", "", higher_is_better=True),
    MetricSpec("PSS", "ri", "pss", "", higher_is_better=True),
)}


def metric_spec(name: str) -> MetricSpec:
    for key, spec in METRICS.items():
        if key.lower() == name.lower():
            return spec
    raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")


@dataclass(frozen=True)
class Cell:
    value: Optional[float]
    pct_diff: Optional[float]
    n: int


@dataclass
class Scorecard:
    metric: str
    baseline: str
    models: List[str]
    leads: List[int]
    cells: Dict[Tuple[str, int], Cell] = field(default_factory=dict)

    @property
    def spec(self) -> MetricSpec:
        return METRICS[self.metric]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "lead_h", "value", "pct_diff", "n"])
            for model in self.models:
                for lead in self.leads:
                    c = self.cells[(model, lead)]
                    w.writerow([model, lead, format_float(c.value), format_float(c.pct_diff), c.n])


def per_lead_means(tables: dict, spec: MetricSpec) -> Dict[Tuple[str, int], Tuple[Optional[float], int]]:
    """(model, lead) -> (mean value, sample count) for one metric."""
    out = {}
    if spec.table == "ri":
        for r in tables["ri"]:
            n = r["tp"] + r["fp"] + r["fn"] + r["tn"]
            out[(r["model"], r["lead_h"])] = (r[spec.column], n)
        return out
    acc: Dict[Tuple[str, int], List[float]] = defaultdict(list)
    for r in tables[spec.table]:
        v = r[spec.column]
        if v is not None:
            acc[(r["model"], r["lead_h"])].append(v)
    for k, vals in acc.items():
        out[k] = (math.fsum(vals) / len(vals), len(vals))
    return out


def pct_diff(value: Optional[float], base: Optional[float]) -> Optional[float]:
    if value is None or base is None or base == 0:
        return None
    return 100.0 * (value - base) / base


def build_scorecard(tables: dict, metric: str, baseline: str = PERSISTENCE) -> Scorecard:
    """Per-lead means with percent difference against ``baseline`` at the same lead."""
    spec = metric_spec(metric)
    models = list(tables["models"])
    if baseline not in models:
        raise UnknownBaseline(f"baseline {baseline!r} not among evaluated models {models}")
    leads = [int(x) for x in tables["leads"]]
    means = per_lead_means(tables, spec)
    card = Scorecard(spec.name, baseline, models, leads)
    for model in models:
        for lead in leads:
            value, n = means.get((model, lead), (None, 0))
            if n == 0:
                value = None
            base, base_n = means.get((baseline, lead), (None, 0))
            card.cells[(model, lead)] = Cell(value, pct_diff(value, base if base_n else None), n)
    return card


# rendering ----------------------------------------------------------------

COLOR_CLAMP_PCT = 50.0
_GOOD = (33, 102, 172)
_BAD = (178, 24, 43)
_UNDEFINED_FILL = "#cccccc"
_DASH = "–"


def _blend(rgb, t: float) -> str:
    r, g, b = (round(255 + (c - 255) * t) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def cell_color(pct: Optional[float], higher_is_better: bool) -> str:
    """Diverging fill: blue for improvement over the baseline, red for degradation."""
    if pct is None:
        return _UNDEFINED_FILL
    goodness = pct if higher_is_better else -pct
    t = max(-1.0, min(1.0, goodness / COLOR_CLAMP_PCT))
    return _blend(_GOOD, t) if t >= 0 else _blend(_BAD, -t)


def _fmt_value(v: Optional[float], spec: MetricSpec) -> str:
    if v is None:
        return _DASH
    return f"{v:.2f}" if spec.higher_is_better else f"{v:.1f}"


def render_svg(card: Scorecard, path) -> Path:
    """Heatmap: rows are models, columns leads; byte-stable for identical input."""
    if not card.models or not card.leads:
        raise ValueError("empty scorecard")
    spec = card.spec
    label_w, cell_w, cell_h, top = 170, 52, 24, 56
    width = label_w + cell_w * len(card.leads) + 10
    height = top + cell_h * len(card.models) + 30
    units = f" ({spec.units})" if spec.units else ""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<title>{escape(card.metric)} scorecard, baseline {escape(card.baseline)}</title>',
        f'<text x="10" y="18" font-size="14" font-weight="bold">{escape(card.metric)}{escape(units)}: '
        f'% difference vs {escape(card.baseline)}</text>',
    ]
    for j, lead in enumerate(card.leads):
        x = label_w + j * cell_w + cell_w / 2
        out.append(f'<text x="{x:.1f}" y="{top - 8}" text-anchor="middle">{lead}h</text>')
    for i, model in enumerate(card.models):
        y = top + i * cell_h
        out.append(f'<text x="{label_w - 6}" y="{y + cell_h / 2 + 4:.1f}" text-anchor="end">{escape(model)}</text>')
        for j, lead in enumerate(card.leads):
            c = card.cells[(model, lead)]
            x = label_w + j * cell_w
            fill = _UNDEFINED_FILL if c.value is None else cell_color(c.pct_diff, spec.higher_is_better)
            if c.value is not None and c.pct_diff is None:
                fill = "#ffffff"
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" '
                       f'stroke="#ffffff" stroke-width="1"/>')
            out.append(f'<text x="{x + cell_w / 2:.1f}" y="{y + cell_h / 2 + 4:.1f}" text-anchor="middle">'
                       f'{_fmt_value(c.value, spec)}</text>')
    legend_y = top + cell_h * len(card.models) + 18
    out.append(f'<text x="10" y="{legend_y}">blue = better than baseline, red = worse '
               f'(clamped at ±{COLOR_CLAMP_PCT:.0f}%)</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22", "#17becf")


def line_style(model: str, index: int) -> Tuple[str, str]:
    """(stroke colour, dash pattern) for a model curve."""
    if model == PERSISTENCE:
        return "#000000", "6,4"
    if model in (MTLB, MTLB_ENS):
        return "#00bcd4", "6,4"
    return _PALETTE[index % len(_PALETTE)], ""


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * exp >= v:
            return m * exp
    return 10 * exp


def render_lead_chart(tables: dict, metric: str, models: Sequence[str], path) -> Path:
    """Per-lead mean curves with baselines dashed and case counts on the right axis."""
    if not models:
        raise ValueError("no models to plot")
    spec = metric_spec(metric)
    means = per_lead_means(tables, spec)
    leads = [int(x) for x in tables["leads"]]
    counts = {int(k): v for k, v in tables.get("keys_by_lead", {}).items()}
    legend_rows = -(-len(models) // 4)
    left, right, top = 70, 70, 40
    w, pw, ph = 720, 720 - left - right, 290
    h = top + ph + 56 + 14 * legend_rows
    values = [means[(m, l)][0] for m in models for l in leads
              if (m, l) in means and means[(m, l)][0] is not None]
    ymin = min([0.0] + values)
    ymax = _nice_max(max(values)) if values and max(values) > 0 else 1.0
    if ymin < 0:
        ymin = -_nice_max(-ymin)
    cmax = _nice_max(max(counts.values())) if counts else 1.0
    lo, hi = min(leads), max(leads)
    # half a slot of padding on each side keeps the count bars inside the frame
    slot = pw / len(leads)
    inner = pw - slot

    def sx(lead):
        return left + slot / 2 + ((lead - lo) / (hi - lo) * inner if hi > lo else inner / 2)

    def sy(v):
        return top + ph - (v - ymin) / (ymax - ymin) * ph

    units = f" ({spec.units})" if spec.units else ""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        f'font-family="sans-serif" font-size="11">',
        f'<title>{escape(spec.name)} by lead</title>',
        f'<text x="{left}" y="22" font-size="14" font-weight="bold">{escape(spec.name)}{escape(units)} by lead time</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>',
    ]
    bar_w = max(2.0, slot * 0.5)
    for lead in leads:
        c = counts.get(lead, 0)
        bh = c / cmax * ph
        out.append(f'<rect x="{sx(lead) - bar_w / 2:.2f}" y="{top + ph - bh:.2f}" width="{bar_w:.2f}" '
                   f'height="{bh:.2f}" fill="#e0e0e0"/>')
    for k in range(5):
        v = ymin + (ymax - ymin) * k / 4
        y = sy(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#000000"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
        cv = cmax * k / 4
        yc = top + ph - cv / cmax * ph
        out.append(f'<text x="{left + pw + 7}" y="{yc + 4:.2f}" fill="#777777">{cv:g}</text>')
    for lead in leads:
        if lead % 24 == 0 or len(leads) <= 6:
            out.append(f'<text x="{sx(lead):.2f}" y="{top + ph + 16}" text-anchor="middle">{lead}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{top + ph + 34}" text-anchor="middle">lead time (h)</text>')
    out.append(f'<text x="{w - 14}" y="{top + ph / 2:.1f}" fill="#777777" text-anchor="middle" '
               f'transform="rotate(90 {w - 14} {top + ph / 2:.1f})">verification cases</text>')
    for idx, model in enumerate(models):
        colour, dash = line_style(model, idx)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        segment: List[str] = []
        segments = []
        for lead in leads:
            v = means.get((model, lead), (None, 0))[0]
            if v is None:
                if segment:
                    segments.append(segment)
                segment = []
                continue
            segment.append(f"{sx(lead):.2f},{sy(v):.2f}")
        if segment:
            segments.append(segment)
        for seg in segments:
            if len(seg) == 1:
                x, y = seg[0].split(",")
                out.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="{colour}"/>')
            else:
                out.append(f'<polyline points="{" ".join(seg)}" fill="none" stroke="{colour}" '
                           f'stroke-width="2"{dash_attr}/>')
        lx = left + (idx % 4) * 150
        ly = top + ph + 58 + (idx // 4) * 14
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" stroke="{colour}" '
                   f'stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly}">{escape(model)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
