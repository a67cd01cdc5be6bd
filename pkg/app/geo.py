"""WGS-84 geodetic <-> local ENU conversions and heading arithmetic."""

import math

import numpy as np

from .errors import InvalidInputError
from .schemas import EnuOrigin, EnuPoint, GeoPoint

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_B = WGS84_A * (1.0 - WGS84_F)


def _check_range(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise InvalidInputError(f"geodetic point out of range: lat={lat}, lon={lon}")


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sin_lat = math.sin(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    return np.array([
        (n + alt) * math.cos(lat) * math.cos(lon),
        (n + alt) * math.cos(lat) * math.sin(lon),
        (n * (1.0 - WGS84_E2) + alt) * sin_lat,
    ])


def ecef_to_geodetic(xyz: np.ndarray) -> tuple:
    """Iterative inverse; converges to sub-micrometre in a handful of passes."""
    x, y, z = (float(c) for c in xyz)
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    alt = 0.0
    for _ in range(10):
        sin_lat = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
        if abs(math.cos(lat)) > 1e-12:
            alt = p / math.cos(lat) - n
        else:
            alt = abs(z) - WGS84_B
        new_lat = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
        if abs(new_lat - lat) < 1e-15:
            lat = new_lat
            break
        lat = new_lat
    return math.degrees(lat), math.degrees(lon), alt


def _enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def geodetic_to_enu(p: GeoPoint, origin: EnuOrigin) -> EnuPoint:
    """ENU coordinates of `p` relative to `origin` through the full ECEF chain."""
    o = origin.origin
    _check_range(p.lat, p.lon)
    _check_range(o.lat, o.lon)
    d = geodetic_to_ecef(p.lat, p.lon, p.alt) - geodetic_to_ecef(o.lat, o.lon, o.alt)
    return EnuPoint.from_array(_enu_rotation(o.lat, o.lon) @ d)


def enu_to_geodetic(p: EnuPoint, origin: EnuOrigin) -> GeoPoint:
    o = origin.origin
    xyz = geodetic_to_ecef(o.lat, o.lon, o.alt) + _enu_rotation(o.lat, o.lon).T @ p.as_array()
    lat, lon, alt = ecef_to_geodetic(xyz)
    return GeoPoint(lat=lat, lon=lon, alt=alt)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised wrap_angle."""
    w = a - 2.0 * np.pi * np.floor((a + np.pi) / (2.0 * np.pi))
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)
