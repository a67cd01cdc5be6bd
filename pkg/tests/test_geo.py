import math

import numpy as np
import pytest

from app.errors import InvalidInputError
from app.geo import enu_to_geodetic, geodetic_to_ecef, geodetic_to_enu, wrap_angle, wrap_angles
from app.schemas import EnuOrigin, EnuPoint, GeoPoint

ORIGIN = EnuOrigin.from_lla(60.45, 22.28, 0.0)


def test_origin_maps_to_zero():
    p = geodetic_to_enu(ORIGIN.origin, ORIGIN)
    assert abs(p.e) < 1e-6 and abs(p.n) < 1e-6 and abs(p.u) < 1e-6


def test_small_latitude_offset_is_northward():
    p = geodetic_to_enu(GeoPoint(lat=60.45001, lon=22.28), ORIGIN)
    assert p.n == pytest.approx(1.1142, abs=5e-4)
    assert abs(p.e) < 1e-6


def test_small_longitude_offset_is_eastward():
    p = geodetic_to_enu(GeoPoint(lat=60.45, lon=22.28001), ORIGIN)
    assert p.e == pytest.approx(0.5504, abs=2e-3)
    assert abs(p.n) < 1e-3


def test_round_trip_within_a_few_kilometres():
    for e, n, u in [(0.0, 0.0, 0.0), (1200.0, -350.0, 12.0), (-2500.0, 4000.0, -3.5)]:
        geo = enu_to_geodetic(EnuPoint(e=e, n=n, u=u), ORIGIN)
        back = geodetic_to_enu(geo, ORIGIN)
        assert back.e == pytest.approx(e, abs=1e-4)
        assert back.n == pytest.approx(n, abs=1e-4)
        assert back.u == pytest.approx(u, abs=1e-4)


def test_ecef_equator_prime_meridian():
    xyz = geodetic_to_ecef(0.0, 0.0, 0.0)
    assert xyz[0] == pytest.approx(6378137.0)
    assert abs(xyz[1]) < 1e-9 and abs(xyz[2]) < 1e-9


def test_out_of_range_latitude_raises():
    bad = GeoPoint.model_construct(lat=95.0, lon=0.0, alt=0.0)
    with pytest.raises(InvalidInputError):
        geodetic_to_enu(bad, ORIGIN)


class TestWrapAngle:
    def test_pi_stays_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)

    def test_minus_pi_maps_to_pi(self):
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_three_half_pi(self):
        assert wrap_angle(1.5 * math.pi) == pytest.approx(-0.5 * math.pi)

    def test_vectorised_matches_scalar(self):
        values = np.array([-7.0, -math.pi, -1.0, 0.0, 2.5, math.pi, 9.0])
        expected = [wrap_angle(float(v)) for v in values]
        assert wrap_angles(values) == pytest.approx(expected)

    def test_full_turns_do_not_change_the_result(self):
        rng = np.random.default_rng(2)
        for a, k in zip(rng.uniform(-3.0, 3.0, 200), rng.integers(-5, 6, 200)):
            assert wrap_angle(a + 2.0 * math.pi * k) == pytest.approx(wrap_angle(a), abs=1e-12)
