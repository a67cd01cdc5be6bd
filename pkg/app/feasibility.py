"""
Building-footprint feasibility map.

Every building interior is forbidden except the whitelisted (UWB-instrumented)
buildings. Absolute fixes are gated against the map by rejecting them or by
projecting them to the nearest admissible boundary.
"""

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from shapely.geometry import LinearRing, Polygon

from .errors import ConfigurationError, ContractViolationError, MapFormatError
from .geo import geodetic_to_enu
from .logging_config import get_logger
from .schemas import AbsoluteFix, EnuOrigin, EnuPoint, GateDecision, GatePolicy, GateVerdict, GeoPoint

logger = get_logger(__name__)

BOUNDARY_EPS = 1e-9
PROJECTION_NUDGE = 1e-3


class BuildingPolygon(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: str
    ring: Tuple[GeoPoint, ...]
    ring_enu: np.ndarray  # (k, 2), closure implicit

    @property
    def orientation(self) -> float:
        """+1 for counter-clockwise rings, -1 for clockwise."""
        return 1.0 if signed_area(self.ring_enu) > 0 else -1.0


class FeasibilityMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    polygons: Tuple[BuildingPolygon, ...]
    allowed_ids: frozenset

    @property
    def ids(self) -> List[str]:
        return [p.id for p in self.polygons]


class BoundaryPoint(BaseModel):
    """Closest boundary location of one polygon edge to a query point."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    polygon_index: int
    edge_index: int
    point: np.ndarray
    outward_normal: np.ndarray
    distance: float


# ---------------------------------------------------------------------------
# Ring geometry
# ---------------------------------------------------------------------------

def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distances from `points` (m, 2) to segment ab and the closest points."""
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        closest = np.broadcast_to(a, points.shape)
    else:
        s = np.clip(((points - a) @ d) / dd, 0.0, 1.0)
        closest = a + s[:, None] * d
    return np.linalg.norm(points - closest, axis=1), closest


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Boundary-inclusive winding-number containment test for (m, 2) points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = points[:, 0], points[:, 1]
    winding = np.zeros(len(points), dtype=int)
    on_edge = np.zeros(len(points), dtype=bool)
    k = len(ring)
    for i in range(k):
        a = ring[i]
        b = ring[(i + 1) % k]
        dist, _ = _segment_distance(points, a, b)
        on_edge |= dist <= BOUNDARY_EPS
        cross = (b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])
        upward = (a[1] <= py) & (b[1] > py) & (cross > 0)
        downward = (a[1] > py) & (b[1] <= py) & (cross < 0)
        winding += upward.astype(int) - downward.astype(int)
    return on_edge | (winding != 0)


def _validate_ring(poly_id: str, ring: List[GeoPoint]) -> List[GeoPoint]:
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if len(ring) < 3:
        raise MapFormatError(f"building {poly_id} has fewer than 3 vertices")
    coords = [(p.lon, p.lat) for p in ring]
    if not LinearRing(coords).is_simple or not Polygon(coords).is_valid:
        raise MapFormatError(f"building {poly_id} ring is self-intersecting")
    return ring


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _rings_from_geojson(doc: Dict) -> List[Tuple[str, List[GeoPoint]]]:
    rings = []
    for i, feature in enumerate(doc.get("features", [])):
        geometry = feature.get("geometry") or {}
        props = feature.get("properties") or {}
        poly_id = props.get("id", feature.get("id"))
        if geometry.get("type") != "Polygon":
            logger.warning(f"Skipping non-Polygon feature {poly_id} ({geometry.get('type')})")
            continue
        if poly_id is None:
            raise MapFormatError(f"feature {i} has no id property")
        coordinates = geometry.get("coordinates") or []
        if not coordinates:
            raise MapFormatError(f"building {poly_id} has no coordinates")
        if len(coordinates) > 1:
            logger.warning(f"Building {poly_id} has holes; treating the footprint as solid")
        try:
            ring = [GeoPoint(lat=c[1], lon=c[0]) for c in coordinates[0]]
        except (IndexError, TypeError, ValueError) as e:
            raise MapFormatError(f"building {poly_id} has malformed coordinates: {e}")
        rings.append((str(poly_id), ring))
    return rings


def _rings_from_overpass(doc: Dict) -> List[Tuple[str, List[GeoPoint]]]:
    rings = []
    for element in doc.get("elements", []):
        if element.get("type") != "way":
            continue
        geometry = element.get("geometry")
        if not geometry:
            raise MapFormatError(f"way {element.get('id')} carries no geometry (use 'out geom')")
        try:
            ring = [GeoPoint(lat=g["lat"], lon=g["lon"]) for g in geometry]
        except (KeyError, TypeError, ValueError) as e:
            raise MapFormatError(f"way {element.get('id')} has malformed geometry: {e}")
        rings.append((str(element["id"]), ring))
    return rings


def load_map(doc: Dict, allowed_ids: Iterable[str], origin: EnuOrigin) -> FeasibilityMap:
    """Parse a GeoJSON FeatureCollection or an Overpass JSON export into a map."""
    if not isinstance(doc, dict):
        raise MapFormatError("map document must be a JSON object")
    if doc.get("type") == "FeatureCollection":
        raw = _rings_from_geojson(doc)
    elif "elements" in doc:
        raw = _rings_from_overpass(doc)
    else:
        raise MapFormatError("map document is neither GeoJSON FeatureCollection nor Overpass JSON")

    polygons = []
    seen = set()
    for poly_id, ring in raw:
        if poly_id in seen:
            raise MapFormatError(f"duplicate building id {poly_id}")
        seen.add(poly_id)
        ring = _validate_ring(poly_id, ring)
        enu = np.array([geodetic_to_enu(p, origin).horizontal() for p in ring])
        polygons.append(BuildingPolygon(id=poly_id, ring=tuple(ring), ring_enu=enu))

    allowed = frozenset(str(a) for a in allowed_ids)
    missing = allowed - seen
    if missing:
        raise ConfigurationError(f"allowed building ids not in map: {sorted(missing)}")

    logger.info(f"Loaded map with {len(polygons)} buildings, allowed={sorted(allowed)}")
    return FeasibilityMap(polygons=tuple(polygons), allowed_ids=allowed)


def load_map_file(path, allowed_ids: Iterable[str], origin: EnuOrigin) -> FeasibilityMap:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"map file not found: {path}")
    except json.JSONDecodeError as e:
        raise MapFormatError(f"map file {path} is not valid JSON: {e}")
    return load_map(doc, allowed_ids, origin)


def map_from_enu(rings: Dict[str, Sequence[Sequence[float]]], allowed_ids: Iterable[str] = ()) -> FeasibilityMap:
    """Build a map directly from ENU rings (tests and synthetic layouts)."""
    polygons = []
    for poly_id, ring in rings.items():
        enu = np.asarray(ring, dtype=float)
        if len(enu) < 3:
            raise MapFormatError(f"building {poly_id} has fewer than 3 vertices")
        if not LinearRing(enu).is_simple:
            raise MapFormatError(f"building {poly_id} ring is self-intersecting")
        polygons.append(BuildingPolygon(id=poly_id, ring=(), ring_enu=enu))
    allowed = frozenset(allowed_ids)
    if allowed - set(rings):
        raise ConfigurationError(f"allowed building ids not in map: {sorted(allowed - set(rings))}")
    return FeasibilityMap(polygons=tuple(polygons), allowed_ids=allowed)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def _xy(p) -> np.ndarray:
    if isinstance(p, EnuPoint):
        return p.horizontal()
    return np.asarray(p, dtype=float)[:2]


def locate(fmap: FeasibilityMap, p) -> Optional[str]:
    """Id of the building containing `p` (boundary counts as inside), or None."""
    xy = _xy(p)[None, :]
    for poly in fmap.polygons:
        if points_in_ring(xy, poly.ring_enu)[0]:
            return poly.id
    return None


def is_feasible(fmap: FeasibilityMap, p) -> bool:
    xy = _xy(p)[None, :]
    for poly in fmap.polygons:
        if poly.id not in fmap.allowed_ids and points_in_ring(xy, poly.ring_enu)[0]:
            return False
    return True


def feasible_mask(fmap: FeasibilityMap, points: np.ndarray) -> np.ndarray:
    """Vectorised is_feasible over (m, 2+) points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    mask = np.ones(len(points), dtype=bool)
    for poly in fmap.polygons:
        if poly.id in fmap.allowed_ids:
            continue
        mask &= ~points_in_ring(points, poly.ring_enu)
    return mask


def boundary_candidates(fmap: FeasibilityMap, p, polygon_indices: Optional[Iterable[int]] = None) -> List[BoundaryPoint]:
    """Closest point on every edge of the selected polygons, nearest first, ties by index."""
    xy = _xy(p)
    indices = range(len(fmap.polygons)) if polygon_indices is None else polygon_indices
    out = []
    for pi in indices:
        poly = fmap.polygons[pi]
        ring = poly.ring_enu
        k = len(ring)
        for ei in range(k):
            a, b = ring[ei], ring[(ei + 1) % k]
            dist, closest = _segment_distance(xy[None, :], a, b)
            d = b - a
            length = math.hypot(d[0], d[1])
            if length == 0.0:
                continue
            # CCW ring -> outward normal is the edge direction rotated clockwise
            normal = poly.orientation * np.array([d[1], -d[0]]) / length
            out.append(BoundaryPoint(
                polygon_index=pi, edge_index=ei, point=closest[0].copy(),
                outward_normal=normal, distance=float(dist[0]),
            ))
    out.sort(key=lambda c: (c.distance, c.polygon_index, c.edge_index))
    return out


def nearest_boundary(fmap: FeasibilityMap, p) -> Optional[BoundaryPoint]:
    candidates = boundary_candidates(fmap, p)
    return candidates[0] if candidates else None


def project_to_boundary(fmap: FeasibilityMap, p: EnuPoint) -> EnuPoint:
    """Closest boundary point of the containing building, nudged 1 mm outward."""
    if is_feasible(fmap, p):
        raise ContractViolationError(f"project_to_boundary called on feasible point {p}")
    xy = p.horizontal()
    containing = [
        i for i, poly in enumerate(fmap.polygons)
        if poly.id not in fmap.allowed_ids and points_in_ring(xy[None, :], poly.ring_enu)[0]
    ]
    for cand in boundary_candidates(fmap, p, containing):
        offset = cand.point - xy
        if cand.distance > BOUNDARY_EPS:
            # away from p; at a reflex corner this leaves through the vertex
            direction = offset / np.linalg.norm(offset)
        else:
            direction = cand.outward_normal
        target = cand.point + PROJECTION_NUDGE * direction
        if is_feasible(fmap, target):
            return EnuPoint(e=float(target[0]), n=float(target[1]), u=p.u)
    raise ContractViolationError(f"no admissible boundary found around {p}")


def gate_fix(fmap: FeasibilityMap, fix: AbsoluteFix, policy: GatePolicy) -> GateDecision:
    if is_feasible(fmap, fix.pos):
        return GateDecision(verdict=GateVerdict.ACCEPT, adjusted=fix.pos)
    if policy == GatePolicy.REJECT_ONLY:
        logger.debug(f"Rejected {fix.source.value} fix at t={fix.t:.3f} inside forbidden building")
        return GateDecision(verdict=GateVerdict.REJECT, adjusted=fix.pos)
    adjusted = project_to_boundary(fmap, fix.pos)
    logger.debug(f"Projected {fix.source.value} fix at t={fix.t:.3f} to boundary")
    return GateDecision(verdict=GateVerdict.PROJECT, adjusted=adjusted)
