import csv
import os
import xml.etree.ElementTree as ET
from collections import defaultdict
from pathlib import Path

import pytest

from tcverify.errors import UnknownBaseline
from tcverify.scorecard import (build_scorecard, cell_color, line_style, metric_spec, pct_diff,
                                render_lead_chart, render_svg)

GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("TCVERIFY_REGEN_GOLDEN") == "1"


def check_golden(produced: Path, name: str):
    target = GOLDEN / name
    if REGEN:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(produced.read_bytes())
    assert produced.read_bytes() == target.read_bytes(), f"{name} differs from golden copy"


def det(model, lead, dpe, vmax=None, sid="S", init="2023-09-01T00:00:00Z"):
    return {"model": model, "sid": sid, "init_time": init, "lead_h": lead, "dpe_km": dpe, "cte_km": None,
            "ate_km": None, "ae_vmax_kt": vmax, "ae_pmin_hpa": None, "filled": False}


@pytest.fixture
def tables():
    rows = []
    for lead, base in ((24, 100.0), (48, 200.0), (72, 300.0)):
        rows += [det("PERSISTENCE", lead, base, 10.0), det("PERSISTENCE", lead, base + 20, 12.0, sid="T")]
        rows += [det("MTLB", lead, base * 0.9, 9.0), det("MTLB", lead, base * 0.9, 9.0, sid="T")]
        rows += [det("GOOD", lead, base * 0.4, 20.0), det("GOOD", lead, base * 0.6, None, sid="T")]
    ri = [{"model": m, "lead_h": lead, "tp": tp, "fp": 1, "fn": 1, "tn": 5, "csi": tp / (tp + 2), "pss": None}
          for m, tp in (("PERSISTENCE", 0), ("MTLB", 1), ("GOOD", 3)) for lead in (24, 48, 72)]
    ri[0]["csi"] = None
    return {"det": rows, "prob": [], "ri": ri, "models": ["PERSISTENCE", "MTLB", "GOOD"],
            "leads": [24, 48, 72], "keys_by_lead": {24: 2, 48: 2, 72: 2}}


def test_values_and_pct(tables):
    card = build_scorecard(tables, "dpe")
    c = card.cells[("GOOD", 48)]
    assert c.value == 100.0 and c.n == 2
    assert c.pct_diff == pytest.approx(100 * (100 - 210) / 210)
    assert card.cells[("PERSISTENCE", 24)].pct_diff == 0.0


def test_missing_values_excluded(tables):
    card = build_scorecard(tables, "AE_vmax")
    assert card.cells[("GOOD", 24)].n == 1 and card.cells[("GOOD", 24)].value == 20.0


def test_undefined_cells(tables):
    card = build_scorecard(tables, "csi")
    assert card.cells[("PERSISTENCE", 24)].value is None
    assert card.cells[("GOOD", 24)].pct_diff is None  # baseline undefined
    assert card.cells[("GOOD", 48)].pct_diff is None  # baseline CSI is 0
    empty = build_scorecard(tables, "CRPS_track")
    assert all(c.value is None and c.n == 0 for c in empty.cells.values())


def test_unknown(tables):
    with pytest.raises(UnknownBaseline):
        build_scorecard(tables, "dpe", "CLIPER")
    with pytest.raises(ValueError):
        metric_spec("bias")


def test_colors():
    assert cell_color(None, False) == "#cccccc"
    assert cell_color(0.0, False) == "#ffffff"
    assert cell_color(-50.0, False) == cell_color(-80.0, False) == cell_color(50.0, True) == "#2166ac"
    assert cell_color(50.0, False) == "#b2182b"
    assert pct_diff(5.0, 0.0) is None


def test_line_styles():
    assert line_style("PERSISTENCE", 0) == ("#000000", "6,4")
    assert line_style("MTLB", 1)[1] == line_style("MTLB_ENS", 2)[1] == "6,4"
    assert line_style("GOOD", 2)[1] == ""


def test_svg_golden(tables, tmp_path):
    for metric in ("DPE", "CSI"):
        card = build_scorecard(tables, metric)
        out = render_svg(card, tmp_path / f"card_{metric}.svg")
        ET.parse(out)
        check_golden(out, f"hand_scorecard_{metric.lower()}.svg")
    chart = render_lead_chart(tables, "DPE", tables["models"], tmp_path / "chart.svg")
    ET.parse(chart)
    check_golden(chart, "hand_leadchart_dpe.svg")


def test_svg_content(tables, tmp_path):
    text = render_svg(build_scorecard(tables, "CSI"), tmp_path / "c.svg").read_text()
    assert "#cccccc" in text and "–" in text
    chart = render_lead_chart(tables, "DPE", tables["models"], tmp_path / "l.svg").read_text()
    assert 'stroke-dasharray="6,4"' in chart and "#00bcd4" in chart


def test_csv_matches_spreadsheet_oracle(tables, tmp_path):
    card = build_scorecard(tables, "dpe")
    card.to_csv(tmp_path / "card.csv")
    sums, ns = defaultdict(float), defaultdict(int)
    for r in tables["det"]:
        sums[(r["model"], r["lead_h"])] += r["dpe_km"]
        ns[(r["model"], r["lead_h"])] += 1
    with open(tmp_path / "card.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    for row in rows:
        k = (row["model"], int(row["lead_h"]))
        mean = sums[k] / ns[k]
        base = sums[("PERSISTENCE", k[1])] / ns[("PERSISTENCE", k[1])]
        assert float(row["value"]) == pytest.approx(mean, rel=1e-12)
        assert float(row["pct_diff"]) == pytest.approx(100 * (mean - base) / base, rel=1e-12, abs=1e-12)
        assert int(row["n"]) == ns[k]


def test_pct_example_and_self_baseline():
    tables = {"det": [det("B", 24, 10.0), det("M", 24, 8.0)], "prob": [], "ri": [], "models": ["B", "M"],
              "leads": [24, 48], "keys_by_lead": {24: 1}}
    card = build_scorecard(tables, "DPE", "B")
    assert card.cells[("M", 24)].pct_diff == pytest.approx(-20.0)
    assert card.cells[("B", 24)].pct_diff == 0.0
    assert card.cells[("M", 48)] == card.cells[("M", 48)].__class__(None, None, 0)
    assert metric_spec("csi").higher_is_better and not metric_spec("dpe").higher_is_better
