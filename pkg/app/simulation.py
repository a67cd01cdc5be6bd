"""
Scenario simulator.

Generates a constant-speed piecewise-linear ground-truth walk and synthesizes
the observation streams the replay path consumes: step increments (or raw IMU),
GNSS fixes with indoor outage and facade multipath, and UWB range sets with
NLOS bias inside the coverage polygon. Every stream draws from its own seeded
generator, so one sensor's configuration never shifts another's noise.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import InvalidInputError
from .feasibility import FeasibilityMap, locate, nearest_boundary, points_in_ring
from .geo import wrap_angle
from .logging_config import get_logger
from .pdr import ImuSample, PdrConfig, bandpass_gain
from .schemas import AbsoluteFix, Anchor, EnuPoint, FixSource, RangeMeasurement, RangeSet, StepIncrement

logger = get_logger(__name__)

STREAM_STEPS = 1
STREAM_GNSS = 2
STREAM_UWB = 3

TRUTH_RATE = 50.0


def _as_enu(v):
    if isinstance(v, (list, tuple)):
        return {"e": v[0], "n": v[1], "u": v[2] if len(v) > 2 else 0.0}
    return v


class MultipathSpec(BaseModel):
    facade_distance: float = Field(0.0, ge=0.0)
    bias: float = Field(0.0, ge=0.0)
    prob: float = Field(0.0, ge=0.0, le=1.0)


class GnssSpec(BaseModel):
    rate: float = Field(1.0, gt=0.0)
    sigma: float = Field(1.5, ge=0.0)
    outage_polygons: List[List[Tuple[float, float]]] = []
    multipath: MultipathSpec = MultipathSpec()


class UwbSpec(BaseModel):
    anchors: List[Anchor] = []
    rate: float = Field(2.0, gt=0.0)
    sigma: float = Field(0.15, ge=0.0)
    nlos_bias: float = Field(0.5, ge=0.0)
    nlos_prob: float = Field(0.0, ge=0.0, le=1.0)
    coverage: List[Tuple[float, float]] = []


class PdrNoiseSpec(BaseModel):
    k_error: float = Field(0.0, ge=0.0)
    heading_bias: float = 0.0
    heading_noise: float = Field(0.0, ge=0.0)


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    waypoints: List[EnuPoint]
    speed: float = Field(1.25, gt=0.0, description="m/s")
    step_length_true: float = Field(0.625, gt=0.0, description="m")
    gnss: GnssSpec = GnssSpec()
    uwb: UwbSpec = UwbSpec()
    pdr: PdrNoiseSpec = PdrNoiseSpec()
    seed: int = 0

    @field_validator("waypoints", mode="before")
    @classmethod
    def _waypoints_from_lists(cls, v):
        return [_as_enu(p) for p in v]


@dataclass
class GroundTruth:
    """Samples at TRUTH_RATE plus the analytic path they were drawn from."""

    t: np.ndarray
    pos: np.ndarray       # (n, 3)
    heading: np.ndarray   # (n,)
    vertices: np.ndarray  # (m, 3) waypoints
    cum: np.ndarray       # (m,) arc length at each waypoint
    speed: float
    source: List[str] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return float(self.cum[-1] / self.speed)

    def position_at(self, times) -> np.ndarray:
        """Exact position on the walk at `times` (clamped to the walk)."""
        s = np.clip(np.atleast_1d(np.asarray(times, dtype=float)) * self.speed, 0.0, self.cum[-1])
        return np.column_stack([np.interp(s, self.cum, self.vertices[:, i]) for i in range(3)])

    def heading_at(self, times) -> np.ndarray:
        s = np.clip(np.atleast_1d(np.asarray(times, dtype=float)) * self.speed, 0.0, self.cum[-1])
        seg = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.cum) - 2)
        d = self.vertices[seg + 1] - self.vertices[seg]
        return np.arctan2(d[:, 0], d[:, 1])


def generate_truth(spec: ScenarioSpec, rate: float = TRUTH_RATE) -> GroundTruth:
    if len(spec.waypoints) < 2:
        raise InvalidInputError("a walk needs at least 2 waypoints")
    vertices = np.array([p.as_array() for p in spec.waypoints])
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    if np.any(seg < 1e-9):
        i = int(np.argmin(seg))
        raise InvalidInputError(f"waypoints {i} and {i + 1} coincide")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    duration = cum[-1] / spec.speed

    n = int(math.floor(duration * rate + 1e-9))
    t = np.arange(n + 1) / rate
    if duration - t[-1] > 1e-9:
        t = np.append(t, duration)
    gt = GroundTruth(t=t, pos=np.empty((0, 3)), heading=np.empty(0), vertices=vertices, cum=cum, speed=spec.speed)
    gt.pos = gt.position_at(t)
    gt.pos[-1] = vertices[-1]
    gt.heading = gt.heading_at(t)
    return gt


def label_truth_sources(gt: GroundTruth, fmap: FeasibilityMap) -> GroundTruth:
    """Tag each sample "mocap" inside an allowed building and "rtk" elsewhere."""
    inside = np.zeros(len(gt.pos), dtype=bool)
    for poly in fmap.polygons:
        if poly.id in fmap.allowed_ids:
            inside |= points_in_ring(gt.pos[:, :2], poly.ring_enu)
    gt.source = ["mocap" if m else "rtk" for m in inside]
    return gt


def step_times(gt: GroundTruth, spec: ScenarioSpec) -> np.ndarray:
    dt = spec.step_length_true / spec.speed
    duration = gt.duration
    n = int(math.floor(duration / dt + 1e-9))
    times = np.arange(1, n + 1) * dt
    last = times[-1] if n else 0.0
    if duration - last > 1e-6:
        times = np.append(times, duration)
    return times


def synth_steps(gt: GroundTruth, spec: ScenarioSpec) -> List[StepIncrement]:
    """
    One increment per true step: chord displacement between consecutive step
    times, with length scaled by (1 + k_error * eta) and heading offset by the
    configured bias plus noise.
    """
    rng = np.random.default_rng([spec.seed, STREAM_STEPS])
    times = step_times(gt, spec)
    positions = gt.position_at(np.concatenate([[0.0], times]))
    out = []
    psi_prev: Optional[float] = None
    psi_true = float(gt.heading_at([0.0])[0])
    for k, t in enumerate(times):
        d = positions[k + 1] - positions[k]
        eta_len, eta_psi = rng.standard_normal(2)
        length = math.hypot(d[0], d[1])
        if length > 0.0:
            psi_true = math.atan2(d[0], d[1])
        ds = max(length * (1.0 + spec.pdr.k_error * eta_len), 0.0)
        psi = wrap_angle(psi_true + spec.pdr.heading_bias + spec.pdr.heading_noise * eta_psi)
        out.append(StepIncrement(
            t=float(t),
            delta_p=(ds * math.sin(psi), ds * math.cos(psi)),
            delta_z=float(d[2]),
            delta_psi=0.0 if psi_prev is None else wrap_angle(psi - psi_prev),
            step_length=ds,
            psi=psi,
        ))
        psi_prev = psi
    return out


def _sensor_times(duration: float, rate: float) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9))
    return np.arange(n + 1) / rate


def synth_gnss(gt: GroundTruth, spec: ScenarioSpec, fmap: FeasibilityMap) -> List[AbsoluteFix]:
    g = spec.gnss
    rng = np.random.default_rng([spec.seed, STREAM_GNSS])
    outages = [np.asarray(poly, dtype=float) for poly in g.outage_polygons]
    times = _sensor_times(gt.duration, g.rate)
    truth = gt.position_at(times)
    out = []
    for t, p in zip(times, truth):
        noise = rng.standard_normal(2) * g.sigma
        draw = rng.random()
        if locate(fmap, p) is not None:
            continue
        if any(points_in_ring(p[None, :2], ring)[0] for ring in outages):
            continue
        pos = p.copy()
        pos[:2] += noise
        mp = g.multipath
        if mp.facade_distance > 0.0 and mp.bias > 0.0 and draw < mp.prob:
            nb = nearest_boundary(fmap, p)
            if nb is not None and nb.distance <= mp.facade_distance:
                pos[:2] += mp.bias * nb.outward_normal
        out.append(AbsoluteFix(
            t=float(t), pos=EnuPoint.from_array(pos), sigma=(g.sigma, g.sigma, g.sigma), source=FixSource.GNSS,
        ))
    return out


def synth_uwb(gt: GroundTruth, spec: ScenarioSpec) -> List[RangeSet]:
    u = spec.uwb
    if not u.coverage:
        return []
    if len(u.anchors) < 3:
        raise InvalidInputError(f"UWB simulation needs at least 3 anchors, got {len(u.anchors)}")
    rng = np.random.default_rng([spec.seed, STREAM_UWB])
    coverage = np.asarray(u.coverage, dtype=float)
    anchors = np.array([a.pos.as_array() for a in u.anchors])
    times = _sensor_times(gt.duration, u.rate)
    truth = gt.position_at(times)
    inside = points_in_ring(truth[:, :2], coverage)
    out = []
    for t, p, covered in zip(times, truth, inside):
        noise = rng.standard_normal(len(anchors)) * u.sigma
        nlos = rng.random(len(anchors)) < u.nlos_prob
        if not covered:
            continue
        ranges = np.linalg.norm(anchors - p, axis=1) + noise + np.where(nlos, u.nlos_bias, 0.0)
        ranges = np.maximum(ranges, 0.0)
        out.append(RangeSet(t=float(t), ranges=[
            RangeMeasurement(anchor_id=a.id, range=float(r), sigma=u.sigma)
            for a, r in zip(u.anchors, ranges)
        ]))
    return out


def synth_imu(
    gt: GroundTruth,
    spec: ScenarioSpec,
    steps: Sequence[StepIncrement],
    cfg: Optional[PdrConfig] = None,
) -> List[ImuSample]:
    """
    Vertical acceleration whose band-passed peak-to-valley amplitude inverts the
    Weinberg relation for each step's length; the heading channel carries the
    step heading.
    """
    cfg = cfg or PdrConfig()
    if not steps:
        return []
    starts = np.concatenate([[0.0], [s.t for s in steps[:-1]]])
    ends = np.array([s.t for s in steps])
    periods = ends - starts
    nominal = spec.step_length_true / spec.speed
    gain = bandpass_gain(cfg, 1.0 / nominal)
    amplitude = np.array([((s.step_length / cfg.k_weinberg) ** 4) / (2.0 * gain) for s in steps])

    times = np.arange(int(math.floor(ends[-1] * cfg.sample_rate)) + 1) / cfg.sample_rate
    idx = np.clip(np.searchsorted(ends, times, side="left"), 0, len(steps) - 1)
    phase = 2.0 * np.pi * (times - starts[idx]) / periods[idx]
    dynamic = -amplitude[idx] * np.cos(phase)
    return [
        ImuSample(t=float(t), acc=(0.0, 0.0, cfg.gravity + float(a)), heading=steps[i].psi)
        for t, a, i in zip(times, dynamic, idx)
    ]


@dataclass
class SimulatedLogs:
    truth: GroundTruth
    steps: List[StepIncrement]
    gnss: List[AbsoluteFix]
    uwb: List[RangeSet]


def simulate(spec: ScenarioSpec, fmap: FeasibilityMap) -> SimulatedLogs:
    gt = label_truth_sources(generate_truth(spec), fmap)
    logs = SimulatedLogs(
        truth=gt,
        steps=synth_steps(gt, spec),
        gnss=synth_gnss(gt, spec, fmap),
        uwb=synth_uwb(gt, spec),
    )
    logger.info(
        f"Simulated '{spec.name}': {gt.duration:.1f} s, {len(logs.steps)} steps, "
        f"{len(logs.gnss)} GNSS fixes, {len(logs.uwb)} UWB range sets"
    )
    return logs
