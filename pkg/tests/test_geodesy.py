import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcverify.errors import DegenerateMean, DegenerateSegment
from tcverify.geodesy import (EARTH, EarthModel, GeoPoint, decompose_track_error, destination_point,
                              haversine_km, haversine_km_array, initial_bearing_deg, spherical_mean,
                              wrap_dlon, wrap_lon)

QUARTER = math.pi * 6371.0 / 2.0

lats = st.floats(-89.0, 89.0)
lons = st.floats(-180.0, 359.999)
points = st.builds(GeoPoint, lats, lons)


def _vec(p):
    phi, lam = math.radians(p.lat), math.radians(p.lon)
    return np.array([math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)])


def bearing_oracle(a, b):
    """Azimuth from the tangent of the a->b great circle in the local north/east frame."""
    va, vb = _vec(a), _vec(b)
    tangent = vb - np.dot(va, vb) * va
    east = np.array([-math.sin(math.radians(a.lon)), math.cos(math.radians(a.lon)), 0.0])
    north = np.cross(va, east)
    return math.degrees(math.atan2(np.dot(tangent, east), np.dot(tangent, north))) % 360.0


def decomposition_oracle(prev, now, fcst, r=6371.0):
    """Cross/along-track error by vector projection onto the motion great circle."""
    a, b, p = _vec(prev), _vec(now), _vec(fcst)
    n = np.cross(a, b)
    n /= np.linalg.norm(n)
    cte = -math.asin(np.dot(p, n)) * r  # +n is left of a->b motion
    foot = p - np.dot(p, n) * n
    foot /= np.linalg.norm(foot)
    along = math.atan2(np.dot(np.cross(a, foot), n), np.dot(a, foot))
    seg = math.atan2(np.dot(np.cross(a, b), n), np.dot(a, b))
    return cte, (along - seg) * r


class TestGeoPoint:
    def test_wraps_negative_longitude(self):
        assert GeoPoint(0, -170).lon == 190.0
        assert GeoPoint(0, 360).lon == 0.0
        assert GeoPoint(0, -1e-20).lon == 0.0

    @pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (math.nan, 0), (0, math.inf)])
    def test_rejects_invalid(self, lat, lon):
        with pytest.raises(ValueError):
            GeoPoint(lat, lon)

    def test_wrap_helpers(self):
        assert wrap_lon(-90) == 270
        assert wrap_dlon(358) == -2
        assert wrap_dlon(-180) == 180

    def test_earth_model_positive(self):
        with pytest.raises(ValueError):
            EarthModel(0)


class TestHaversine:
    def test_identical(self):
        assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0

    @pytest.mark.parametrize("b", [GeoPoint(0, 90), GeoPoint(90, 0)])
    def test_quarter_circumference(self, b):
        assert haversine_km(GeoPoint(0, 0), b) == pytest.approx(10007.543, abs=1e-3)
        assert haversine_km(GeoPoint(0, 0), b) == pytest.approx(QUARTER, abs=1e-9)

    def test_radius_scales(self):
        assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 90), EarthModel(1.0)) == pytest.approx(math.pi / 2)

    @given(points, points)
    def test_symmetric(self, a, b):
        assert haversine_km(a, b) == haversine_km(b, a)

    @given(points, points, points)
    def test_triangle(self, a, b, c):
        assert haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6

    @given(lats, st.floats(-180, 180), points)
    def test_wrap_invariance(self, lat, lon, b):
        assert abs(haversine_km(GeoPoint(lat, lon), b) - haversine_km(GeoPoint(lat, lon + 360.0), b)) <= 1e-9

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(3)
        la = rng.uniform(-80, 80, 200)
        lo = rng.uniform(0, 360, 200)
        lb = rng.uniform(-80, 80, 200)
        lob = rng.uniform(0, 360, 200)
        arr = haversine_km_array(la, lo, lb, lob)
        scalar = [haversine_km(GeoPoint(*x), GeoPoint(*y)) for x, y in zip(zip(la, lo), zip(lb, lob))]
        np.testing.assert_allclose(arr, scalar, rtol=0, atol=1e-8)


class TestBearing:
    def test_east(self):
        assert initial_bearing_deg(GeoPoint(0, 0), GeoPoint(0, 10)) == pytest.approx(90.0)

    def test_north(self):
        assert initial_bearing_deg(GeoPoint(0, 0), GeoPoint(10, 0)) == pytest.approx(0.0)

    def test_against_vector_oracle(self):
        a, b = GeoPoint(10, 10), GeoPoint(10, 20)
        expected = bearing_oracle(a, b)
        assert expected == pytest.approx(89.1296, abs=1e-3)
        assert initial_bearing_deg(a, b) == pytest.approx(expected, abs=1e-9)

    @settings(max_examples=200)
    @given(points, points)
    def test_random_against_oracle(self, a, b):
        if haversine_km(a, b) < 1.0 or haversine_km(a, b) > 19000:
            return
        got = initial_bearing_deg(a, b)
        diff = (got - bearing_oracle(a, b) + 180) % 360 - 180
        assert abs(diff) < 1e-6

    def test_degenerate(self):
        with pytest.raises(DegenerateSegment):
            initial_bearing_deg(GeoPoint(5, 5), GeoPoint(5, 365))


class TestDecomposition:
    prev, now = GeoPoint(0, 0), GeoPoint(0, 1)

    def test_perfect(self):
        d = decompose_track_error(self.prev, self.now, GeoPoint(0, 1))
        assert (d.dpe_km, d.cte_km, d.ate_km) == (0.0, 0.0, 0.0)

    def test_north_of_eastward_motion_is_left(self):
        half_deg = math.radians(0.5) * 6371.0
        d = decompose_track_error(self.prev, self.now, GeoPoint(0.5, 1))
        cte, ate = decomposition_oracle(self.prev, self.now, GeoPoint(0.5, 1))
        assert cte == pytest.approx(-55.597, abs=1e-3) and ate == pytest.approx(0.0, abs=1e-9)
        assert d.dpe_km == pytest.approx(half_deg, abs=1e-9)
        assert d.cte_km == pytest.approx(-55.597, abs=0.5)
        assert d.ate_km == pytest.approx(0.0, abs=0.5)

    def test_ahead(self):
        d = decompose_track_error(self.prev, self.now, GeoPoint(0, 1.5))
        assert d.dpe_km == pytest.approx(55.597, abs=0.5)
        assert d.cte_km == pytest.approx(0.0, abs=0.5)
        assert d.ate_km == pytest.approx(55.597, abs=0.5)

    def test_behind_is_negative(self):
        d = decompose_track_error(self.prev, self.now, GeoPoint(0, 0.25))
        assert d.ate_km == pytest.approx(-0.75 * 111.19493, abs=1e-3)

    def test_stationary_segment_undefined(self):
        d = decompose_track_error(GeoPoint(10, 10), GeoPoint(10, 10), GeoPoint(11, 10))
        assert d.cte_km is None and d.ate_km is None
        assert d.dpe_km == pytest.approx(111.195, abs=1e-3)

    def test_forecast_at_previous_position(self):
        d = decompose_track_error(self.prev, self.now, self.prev)
        assert d.cte_km == 0.0
        assert d.ate_km == pytest.approx(-111.19493, abs=1e-4)

    def test_random_against_vector_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            prev = GeoPoint(rng.uniform(-60, 60), rng.uniform(0, 360))
            now = destination_point(prev, rng.uniform(0, 360), rng.uniform(50, 800))
            fcst = destination_point(now, rng.uniform(0, 360), rng.uniform(1, 1500))
            d = decompose_track_error(prev, now, fcst)
            cte, ate = decomposition_oracle(prev, now, fcst)
            assert d.cte_km == pytest.approx(cte, abs=1e-6)
            assert d.ate_km == pytest.approx(ate, abs=1e-6)

    def test_along_track_displacement_has_no_cross_track(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            prev = GeoPoint(rng.uniform(-60, 60), rng.uniform(0, 360))
            brg = rng.uniform(0, 360)
            now = destination_point(prev, brg, 200.0)
            fcst = destination_point(prev, brg, rng.uniform(10, 600))
            assert abs(decompose_track_error(prev, now, fcst).cte_km) < 1e-6

    def test_wrap_invariance(self):
        a = decompose_track_error(GeoPoint(15, -170.5), GeoPoint(15.5, -171), GeoPoint(16, -170))
        b = decompose_track_error(GeoPoint(15, 189.5), GeoPoint(15.5, 189), GeoPoint(16, 190))
        for x, y in zip((a.dpe_km, a.cte_km, a.ate_km), (b.dpe_km, b.cte_km, b.ate_km)):
            assert abs(x - y) <= 1e-9

    def test_sh_flip_option(self):
        prev, now, f = GeoPoint(20, 140), GeoPoint(20.5, 139), GeoPoint(21, 139.5)
        plain = decompose_track_error(prev.reflected(), now.reflected(), f.reflected())
        flipped = decompose_track_error(prev.reflected(), now.reflected(), f.reflected(), sh_flip=True)
        assert flipped.cte_km == -plain.cte_km
        nh = decompose_track_error(prev, now, f, sh_flip=True)
        assert flipped.cte_km == pytest.approx(nh.cte_km, abs=1e-9)


class TestSphericalMean:
    def test_singleton(self):
        assert spherical_mean([GeoPoint(10, 20)]) == GeoPoint(10, 20)

    def test_symmetric_pair(self):
        m = spherical_mean([GeoPoint(0, 0), GeoPoint(0, 10)])
        assert m.lat == pytest.approx(0.0, abs=1e-12)
        assert m.lon == pytest.approx(5.0, abs=1e-12)

    def test_across_dateline(self):
        m = spherical_mean([GeoPoint(0, 179), GeoPoint(0, -179)])
        assert m.lon == pytest.approx(180.0, abs=1e-9)

    def test_antipodal(self):
        with pytest.raises(DegenerateMean):
            spherical_mean([GeoPoint(0, 0), GeoPoint(0, 180)])

    def test_empty(self):
        with pytest.raises(ValueError):
            spherical_mean([])


def test_destination_round_trip():
    o = GeoPoint(25, 300)
    p = destination_point(o, 45.0, 500.0)
    assert haversine_km(o, p) == pytest.approx(500.0, rel=1e-12)
    assert initial_bearing_deg(o, p) == pytest.approx(45.0, abs=1e-9)
    assert destination_point(o, 10.0, 0.0) is o


def test_equator_counts_as_northern_for_sign_flip():
    prev, now, f = GeoPoint(-0.5, 10), GeoPoint(0.0, 10.5), GeoPoint(0.3, 10.2)
    assert decompose_track_error(prev, now, f, sh_flip=True).cte_km == decompose_track_error(prev, now, f).cte_km
