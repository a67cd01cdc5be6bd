"""Pydantic models for the values exchanged between pipeline stages and over HTTP."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

# Smallest standard deviation any consumer inverts; noiseless logs carry sigma = 0.
MIN_SIGMA = 1e-3


class GeoPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    lat: float = Field(..., ge=-90.0, le=90.0, description="degrees WGS-84")
    lon: float = Field(..., ge=-180.0, le=180.0, description="degrees WGS-84")
    alt: float = Field(0.0, description="meters above ellipsoid")


class EnuPoint(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    e: float
    n: float
    u: float = 0.0

    @classmethod
    def from_array(cls, xyz) -> "EnuPoint":
        xyz = np.asarray(xyz, dtype=float)
        u = float(xyz[2]) if xyz.shape[0] > 2 else 0.0
        return cls(e=float(xyz[0]), n=float(xyz[1]), u=u)

    def as_array(self) -> np.ndarray:
        return np.array([self.e, self.n, self.u], dtype=float)

    def horizontal(self) -> np.ndarray:
        return np.array([self.e, self.n], dtype=float)


class EnuOrigin(BaseModel):
    """Geodetic anchor of the local ENU frame; fixed for the lifetime of a run."""

    model_config = ConfigDict(frozen=True)

    origin: GeoPoint

    @classmethod
    def from_lla(cls, lat: float, lon: float, alt: float = 0.0) -> "EnuOrigin":
        return cls(origin=GeoPoint(lat=lat, lon=lon, alt=alt))


class FixSource(str, Enum):
    GNSS = "GNSS"
    UWB = "UWB"


class AbsoluteFix(BaseModel):
    """A GNSS- or UWB-derived ENU position with per-axis standard deviation."""

    model_config = ConfigDict(frozen=True)

    t: float
    pos: EnuPoint
    sigma: Optional[Tuple[float, float, float]] = None
    source: FixSource

    @field_validator("sigma")
    @classmethod
    def _sigma_non_negative(cls, v):
        if v is not None and any(s < 0 or not np.isfinite(s) for s in v):
            raise ValueError("sigma components must be finite and >= 0")
        return v

    def effective_sigma(self, default: float) -> np.ndarray:
        """Per-axis sigma with `default` standing in for a missing value, floored at MIN_SIGMA."""
        if self.sigma is None:
            sigma = np.full(3, default, dtype=float)
        else:
            sigma = np.asarray(self.sigma, dtype=float)
        return np.maximum(sigma, MIN_SIGMA)


class StepIncrement(BaseModel):
    """Per-step PDR output consumed identically by every back-end."""

    model_config = ConfigDict(frozen=True)

    t: float
    delta_p: Tuple[float, float] = Field(..., description="(east, north) meters")
    delta_z: float = 0.0
    delta_psi: float = Field(..., description="wrapped heading change, radians")
    step_length: float = Field(..., ge=0.0)
    psi: float = Field(..., description="absolute heading at the step, 0 = north, east positive")


class EstimatorOutput(BaseModel):
    """Timestamped fused pose, emitted in the same shape by every back-end."""

    model_config = ConfigDict(frozen=True)

    t: float
    pos: EnuPoint
    yaw: float
    cov: Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]

    @classmethod
    def build(cls, t: float, pos: np.ndarray, yaw: float, cov: np.ndarray) -> "EstimatorOutput":
        cov = np.asarray(cov, dtype=float)
        return cls(
            t=float(t),
            pos=EnuPoint.from_array(pos),
            yaw=float(yaw),
            cov=tuple(tuple(float(c) for c in row) for row in cov[:3, :3]),
        )

    def cov_array(self) -> np.ndarray:
        return np.array(self.cov, dtype=float)


class GateVerdict(str, Enum):
    ACCEPT = "Accept"
    PROJECT = "Project"
    REJECT = "Reject"


class GatePolicy(str, Enum):
    REJECT_ONLY = "RejectOnly"
    PROJECT_TO_BOUNDARY = "ProjectToBoundary"


class GateDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    verdict: GateVerdict
    adjusted: EnuPoint


class Anchor(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    pos: EnuPoint


class RangeMeasurement(BaseModel):
    model_config = ConfigDict(frozen=True)

    anchor_id: str
    range: float
    sigma: float = Field(0.1, ge=0.0)


class RangeSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    ranges: List[RangeMeasurement] = []


class BackendStats(BaseModel):
    """Counts of how each absolute fix was treated by one back-end."""

    accepted: int = 0
    projected: int = 0
    rejected: int = 0
    chi2_rejected: int = 0
    steps: int = 0
    outputs: int = 0


class MetricSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    median: float
    rmse: float
    std: float
    max: float
    n: int


class ErrorSeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: List[float]
    error: List[float]


class BackendResult(BaseModel):
    backend: str
    summary: MetricSummary
    max_jump: float
    transition_jump: Optional[float] = None


class RunRequest(BaseModel):
    """Body of POST /api/runs: one simulated scenario evaluated on several back-ends."""

    scenario: Dict
    map: Dict
    allowed_building_ids: List[str] = []
    origin: GeoPoint
    backends: List[str] = ["eskf", "fgo", "pf"]
    seed: int = 0
    map_constraints: bool = True

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "scenario": {
                    "name": "indoor",
                    "waypoints": [[5, -5], [25, -5], [25, 5], [5, 5], [5, -5]],
                    "speed": 1.25,
                    "step_length_true": 0.625,
                },
                "map": {"type": "FeatureCollection", "features": []},
                "allowed_building_ids": [],
                "origin": {"lat": 60.45, "lon": 22.28, "alt": 0.0},
                "backends": ["eskf", "fgo", "pf"],
                "seed": 7,
            }
        }
    )


class RunResponse(BaseModel):
    run_id: str
    scenario: str
    seed: int
    results: List[BackendResult]
