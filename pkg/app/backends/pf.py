"""
Step-driven particle filter.

Particles move only on confirmed steps; absolute fixes reweight them by a
Gaussian likelihood, and the building map enters through the likelihood
(near-zero weight inside forbidden buildings) rather than through the gate.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..errors import NotInitializedError
from ..feasibility import FeasibilityMap, feasible_mask
from ..geo import wrap_angle, wrap_angles
from ..logging_config import get_logger
from ..schemas import MIN_SIGMA, AbsoluteFix, EstimatorOutput, StepIncrement
from .base import Backend

logger = get_logger(__name__)

UNDERFLOW = 1e-300


class PfConfig(BaseModel):
    N: int = Field(500, ge=10)
    sigma_prop_xy: float = Field(0.1, ge=0.0)
    sigma_prop_psi: float = Field(0.05, ge=0.0)
    tau: float = Field(0.5, gt=0.0, lt=1.0)
    infeasible_weight_factor: float = Field(1e-6, ge=0.0, le=1e-3)
    R: List[List[float]] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    snapshot_every: int = Field(0, ge=0, description="steps between particle snapshots, 0 = off")

    @field_validator("R")
    @classmethod
    def _positive_definite(cls, v):
        R = np.asarray(v, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R, R.T) or np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be a symmetric positive definite 3x3 matrix")
        return v


@dataclass
class ParticleSet:
    x: np.ndarray    # (N, 3) east, north, up
    psi: np.ndarray  # (N,)
    w: np.ndarray    # (N,)
    rng: np.random.Generator
    t: float = 0.0
    resets: int = 0

    @property
    def N(self) -> int:
        return len(self.w)

    def ess(self) -> float:
        return float(1.0 / np.sum(self.w ** 2))

    def _replace(self, **kw) -> "ParticleSet":
        fields = dict(x=self.x, psi=self.psi, w=self.w, rng=self.rng, t=self.t, resets=self.resets)
        fields.update(kw)
        return ParticleSet(**fields)


def _require(ps: Optional[ParticleSet]) -> None:
    if ps is None:
        raise NotInitializedError("particle filter used before the first absolute fix")


def pf_init(fix: AbsoluteFix, cfg: Optional[PfConfig] = None, seed: int = 0) -> ParticleSet:
    """Gaussian scatter around the fix (std = fix.sigma), uniform heading, equal weights."""
    cfg = cfg or PfConfig()
    rng = np.random.default_rng(seed)
    if fix.sigma is None:
        sigma = np.sqrt(np.diag(np.asarray(cfg.R, dtype=float)))
    else:
        sigma = np.asarray(fix.sigma, dtype=float)
    x = fix.pos.as_array() + rng.standard_normal((cfg.N, 3)) * sigma
    psi = wrap_angles(rng.uniform(-np.pi, np.pi, cfg.N))
    w = np.full(cfg.N, 1.0 / cfg.N)
    return ParticleSet(x=x, psi=psi, w=w, rng=rng, t=fix.t)


def pf_propagate(ps: ParticleSet, inc: StepIncrement, cfg: Optional[PfConfig] = None) -> ParticleSet:
    _require(ps)
    cfg = cfg or PfConfig()
    n = ps.N
    x = ps.x.copy()
    x[:, 0:2] += np.asarray(inc.delta_p) + ps.rng.standard_normal((n, 2)) * cfg.sigma_prop_xy
    x[:, 2] += inc.delta_z
    psi = wrap_angles(ps.psi + inc.delta_psi + ps.rng.standard_normal(n) * cfg.sigma_prop_psi)
    return ps._replace(x=x, psi=psi, t=max(ps.t, inc.t))


def _measurement_cov(fix: AbsoluteFix, cfg: PfConfig) -> np.ndarray:
    if fix.sigma is None:
        return np.asarray(cfg.R, dtype=float)
    return np.diag(np.maximum(np.asarray(fix.sigma, dtype=float), MIN_SIGMA) ** 2)


def pf_reweight(
    ps: ParticleSet,
    fix: AbsoluteFix,
    fmap: Optional[FeasibilityMap] = None,
    cfg: Optional[PfConfig] = None,
) -> ParticleSet:
    """
    w <- w * exp(-d2/2) with d2 the Mahalanobis distance to the fix, times the
    infeasible factor for particles inside forbidden buildings (skipped when
    `fmap` is None), then renormalized.
    """
    _require(ps)
    cfg = cfg or PfConfig()
    diff = ps.x - fix.pos.as_array()
    R_inv = np.linalg.inv(_measurement_cov(fix, cfg))
    d2 = np.einsum("ij,jk,ik->i", diff, R_inv, diff)
    w = ps.w * np.exp(-0.5 * d2)
    if fmap is not None:
        w = np.where(feasible_mask(fmap, ps.x), w, w * cfg.infeasible_weight_factor)
    total = float(np.sum(w))
    resets = ps.resets
    if total < UNDERFLOW or not np.isfinite(total):
        logger.warning(
            f"Particle weights underflowed at t={fix.t:.3f} ({fix.source.value} fix); resetting to uniform"
        )
        w = np.full(ps.N, 1.0 / ps.N)
        resets += 1
    else:
        w = w / total
    return ps._replace(w=w, t=max(ps.t, fix.t), resets=resets)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with one uniform offset and a stratified sweep of the CDF."""
    n = len(weights)
    positions = (np.arange(n) + rng.random()) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), n - 1)


def pf_resample_if_needed(ps: ParticleSet, cfg: Optional[PfConfig] = None) -> Tuple[ParticleSet, bool]:
    cfg = cfg or PfConfig()
    if ps.ess() >= cfg.tau * ps.N:
        return ps, False
    idx = systematic_resample(ps.w, ps.rng)
    w = np.full(ps.N, 1.0 / ps.N)
    return ps._replace(x=ps.x[idx].copy(), psi=ps.psi[idx].copy(), w=w), True


def pf_estimate(ps: ParticleSet) -> EstimatorOutput:
    """Weighted mean position, circular-mean heading, weighted position covariance."""
    _require(ps)
    mean = ps.w @ ps.x
    yaw = float(np.arctan2(ps.w @ np.sin(ps.psi), ps.w @ np.cos(ps.psi)))
    d = ps.x - mean
    cov = d.T @ (ps.w[:, None] * d)
    return EstimatorOutput.build(ps.t, mean, wrap_angle(yaw), cov)


def pf_snapshot(ps: ParticleSet) -> Dict:
    return {
        "t": ps.t,
        "ess": ps.ess(),
        "particles": [
            [float(x[0]), float(x[1]), float(x[2]), float(p), float(w)]
            for x, p, w in zip(ps.x, ps.psi, ps.w)
        ],
    }


class PfBackend(Backend):
    name = "pf"

    def __init__(self, fmap: Optional[FeasibilityMap] = None, map_constraints: bool = True,
                 cfg: Optional[PfConfig] = None, seed: int = 0):
        super().__init__(fmap, map_constraints)
        self.cfg = cfg or PfConfig()
        self.seed = seed
        self.particles: Optional[ParticleSet] = None
        self.resample_count = 0
        self._snapshots: List[Dict] = []

    @property
    def initialized(self) -> bool:
        return self.particles is not None

    def _initialize(self, fix):
        self.particles = pf_init(fix, self.cfg, self.seed)
        return pf_estimate(self.particles)

    def _on_step(self, inc):
        self.particles = pf_propagate(self.particles, inc, self.cfg)
        every = self.cfg.snapshot_every
        if every and self.stats.steps % every == 0:
            self._snapshots.append(pf_snapshot(self.particles))
        return pf_estimate(self.particles)

    def _on_fix(self, fix):
        fmap = self.fmap if self.map_constraints else None
        self.particles = pf_reweight(self.particles, fix, fmap, self.cfg)
        self.particles, resampled = pf_resample_if_needed(self.particles, self.cfg)
        self.resample_count += int(resampled)
        # The map acts through the likelihood, so every fix counts as accepted
        self.stats.accepted += 1
        return pf_estimate(self.particles)

    def debug_records(self) -> Optional[List[Dict]]:
        return self._snapshots if self.cfg.snapshot_every else None
