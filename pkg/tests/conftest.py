from datetime import datetime, timedelta, timezone

import pytest

from tcverify.geodesy import GeoPoint
from tcverify.track_model import ObservedStorm, ObservedStore, TrackPoint

UTC = timezone.utc


def utc(*args):
    return datetime(*args, tzinfo=UTC)


def make_storm(sid, start, positions, vmax=None, pmin=None, basin="NA", step_h=6, skip=()):
    """Storm with one point per position every ``step_h`` hours; indices in ``skip`` are left out."""
    n = len(positions)
    vmax = vmax if vmax is not None else [50.0] * n
    pmin = pmin if pmin is not None else [990.0] * n
    pts = []
    for i, (lat, lon) in enumerate(positions):
        if i in skip:
            continue
        pts.append(TrackPoint(GeoPoint(lat, lon), vmax[i], pmin[i], start + timedelta(hours=step_h * i)))
    return ObservedStorm(sid, basin, tuple(pts))


def straight_storm(sid, start, n, lat=20.0, lon0=280.0, dlon=0.5, **kw):
    return make_storm(sid, start, [(lat, lon0 + dlon * i) for i in range(n)], **kw)


@pytest.fixture
def t0():
    return utc(2023, 9, 1)


@pytest.fixture
def small_store(t0):
    """Two 2023 storms, 6-hourly for 5 days, plus one 2020 storm for climatology."""
    a = straight_storm("A", t0, 21, vmax=[40.0 + 2 * i for i in range(21)],
                       pmin=[1000.0 - 2 * i for i in range(21)])
    b = make_storm("B", t0 + timedelta(hours=12), [(-15.0 - 0.2 * i, 160.0 - 0.4 * i) for i in range(17)],
                   basin="SP")
    c = straight_storm("C", utc(2020, 8, 1), 21, lat=15.0, vmax=[30.0 + 3 * i for i in range(21)])
    return ObservedStore([a, b, c])


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary
_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, title = marker.args
    _, ok = _ACCEPTANCE.get(number, (title, True))
    _ACCEPTANCE[number] = (title, ok and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
