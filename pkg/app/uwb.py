"""UWB trilateration: ranges to surveyed anchors -> horizontal absolute fix."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import ConfigurationError, GeometryError, OutlierError, SolverError
from .geo import geodetic_to_enu
from .logging_config import get_logger
from .schemas import MIN_SIGMA, AbsoluteFix, Anchor, EnuOrigin, EnuPoint, FixSource, GeoPoint, RangeSet

logger = get_logger(__name__)


class UwbConfig(BaseModel):
    max_range: float = Field(50.0, gt=0.0)
    residual_gate: float = Field(1.0, gt=0.0, description="max residual RMS, m")
    max_condition: float = 1e8
    max_iterations: int = Field(50, ge=1)
    step_tolerance: float = 1e-8
    fixed_height: Optional[float] = None  # None -> mean height of the used anchors
    sigma_vertical: float = Field(0.5, gt=0.0)


def select_ranges(rs: RangeSet, max_range: float) -> RangeSet:
    """Drop non-positive ranges and ranges beyond `max_range` (crude NLOS filter)."""
    kept = [r for r in rs.ranges if 0.0 < r.range <= max_range]
    return RangeSet(t=rs.t, ranges=kept)


def _residuals(xy, anchors, h, ranges, sigmas):
    diff = np.column_stack([xy[0] - anchors[:, 0], xy[1] - anchors[:, 1], h - anchors[:, 2]])
    dist = np.maximum(np.linalg.norm(diff, axis=1), 1e-12)
    r = (dist - ranges) / sigmas
    jac = diff[:, :2] / dist[:, None] / sigmas[:, None]
    return r, jac, dist


def trilaterate(
    anchors: Sequence[Anchor],
    rs: RangeSet,
    guess: Optional[EnuPoint] = None,
    cfg: Optional[UwbConfig] = None,
) -> AbsoluteFix:
    """
    Weighted nonlinear least squares over horizontal position at a fixed height.

    Gauss-Newton with Levenberg damping on cost increase. The returned sigma comes
    from the inverse normal matrix scaled by the residual variance factor.
    """
    cfg = cfg or UwbConfig()
    by_id: Dict[str, Anchor] = {a.id: a for a in anchors}
    # Sorting by anchor id makes the solve independent of input order
    usable = sorted((m for m in rs.ranges if m.anchor_id in by_id), key=lambda m: m.anchor_id)
    if len(usable) < 3:
        raise GeometryError(f"need at least 3 ranges to known anchors, got {len(usable)}")

    a = np.array([by_id[m.anchor_id].pos.as_array() for m in usable])
    ranges = np.array([m.range for m in usable], dtype=float)
    sigmas = np.maximum(np.array([m.sigma for m in usable], dtype=float), MIN_SIGMA)
    h = float(np.mean(a[:, 2])) if cfg.fixed_height is None else cfg.fixed_height

    centered = a[:, :2] - a[:, :2].mean(axis=0)
    if np.linalg.cond(centered) > cfg.max_condition:
        raise GeometryError("anchors are collinear; horizontal position unobservable")

    xy = a[:, :2].mean(axis=0) if guess is None else guess.horizontal()
    r, jac, _ = _residuals(xy, a, h, ranges, sigmas)
    cost = float(r @ r)
    lam = 0.0
    converged = False
    for _ in range(cfg.max_iterations):
        normal = jac.T @ jac
        grad = jac.T @ r
        try:
            step = -np.linalg.solve(normal + lam * np.diag(np.diag(normal)), grad)
        except np.linalg.LinAlgError:
            raise SolverError("singular normal equations in trilateration")
        candidate = xy + step
        r_new, jac_new, _ = _residuals(candidate, a, h, ranges, sigmas)
        cost_new = float(r_new @ r_new)
        if cost_new <= cost:
            xy, r, jac, cost = candidate, r_new, jac_new, cost_new
            lam = lam / 10.0 if lam > 1e-12 else 0.0
            if np.linalg.norm(step) < cfg.step_tolerance:
                converged = True
                break
        else:
            lam = 1e-3 if lam == 0.0 else lam * 10.0
            if np.linalg.norm(step) < cfg.step_tolerance:
                converged = True
                break
    if not converged:
        raise SolverError(f"trilateration did not converge in {cfg.max_iterations} iterations")

    _, _, dist = _residuals(xy, a, h, ranges, sigmas)
    rms = float(np.sqrt(np.mean((dist - ranges) ** 2)))
    if rms > cfg.residual_gate:
        raise OutlierError(f"trilateration residual RMS {rms:.3f} m exceeds gate {cfg.residual_gate} m")

    dof = len(usable) - 2
    variance_factor = max(cost / dof, 1.0) if dof > 0 else 1.0
    try:
        cov = variance_factor * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        raise SolverError("singular covariance in trilateration")
    sigma = (float(np.sqrt(cov[0, 0])), float(np.sqrt(cov[1, 1])), cfg.sigma_vertical)
    return AbsoluteFix(
        t=rs.t,
        pos=EnuPoint(e=float(xy[0]), n=float(xy[1]), u=h),
        sigma=sigma,
        source=FixSource.UWB,
    )


def load_anchors(path, origin: Optional[EnuOrigin] = None) -> List[Anchor]:
    """Anchor survey CSV with columns id,e,n,u or id,lat,lon,alt."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"anchor file not found: {path}")
    df = pd.read_csv(path, dtype={"id": str})
    if {"e", "n"}.issubset(df.columns):
        u = df["u"] if "u" in df.columns else 0.0
        df = df.assign(u=u)
        return [
            Anchor(id=str(row.id), pos=EnuPoint(e=float(row.e), n=float(row.n), u=float(row.u)))
            for row in df.itertuples(index=False)
        ]
    if {"lat", "lon"}.issubset(df.columns):
        if origin is None:
            raise ConfigurationError("geodetic anchor file needs an ENU origin")
        alt = df["alt"] if "alt" in df.columns else 0.0
        df = df.assign(alt=alt)
        return [
            Anchor(id=str(row.id), pos=geodetic_to_enu(GeoPoint(lat=float(row.lat), lon=float(row.lon), alt=float(row.alt)), origin))
            for row in df.itertuples(index=False)
        ]
    raise ConfigurationError(f"anchor file {path} needs columns id,e,n,u or id,lat,lon,alt")


def write_anchors(path, anchors: Sequence[Anchor]) -> None:
    pd.DataFrame(
        [{"id": a.id, "e": a.pos.e, "n": a.pos.n, "u": a.pos.u} for a in anchors],
        columns=["id", "e", "n", "u"],
    ).to_csv(path, index=False)
