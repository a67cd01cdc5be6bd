"""
Pedestrian dead reckoning front-end.

IMU samples -> band-pass filtered dynamic acceleration magnitude -> peak/valley
step events -> Weinberg step length -> world-frame step increments.
Heading is an input channel (externally estimated yaw, 0 = north, east positive).
"""

import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal

from .errors import ConfigurationError, InvalidInputError
from .geo import wrap_angle
from .logging_config import get_logger
from .schemas import StepIncrement

logger = get_logger(__name__)


class ImuSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    acc: Tuple[float, float, float]
    heading: float


class StepEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_peak: float
    t_valley: float
    A_pk: float
    A_val: float
    delta_A: float
    psi: Optional[float] = None  # heading sampled at the peak, when known


class PdrConfig(BaseModel):
    k_weinberg: float = Field(0.5, gt=0.0)
    band_low: float = Field(0.5, gt=0.0, description="Hz")
    band_high: float = Field(3.0, gt=0.0, description="Hz")
    sample_rate: float = Field(50.0, gt=0.0, description="Hz")
    filter_order: int = Field(2, ge=1, le=8)
    min_step_interval: float = Field(0.3, ge=0.0)
    peak_threshold: float = Field(0.5, ge=0.0)
    max_step_length: float = Field(2.0, gt=0.0)
    gravity: float = 9.81

    @model_validator(mode="after")
    def _band_order(self):
        if not self.band_low < self.band_high:
            raise ValueError("band_low must be below band_high")
        return self


def design_bandpass(cfg: PdrConfig) -> np.ndarray:
    """Second-order-sections Butterworth band-pass for the configured walking band."""
    if cfg.sample_rate < 2.0 * cfg.band_high or cfg.band_high >= cfg.sample_rate / 2.0:
        raise ConfigurationError(
            f"sample rate {cfg.sample_rate} Hz too low for a {cfg.band_high} Hz band edge"
        )
    return signal.butter(
        cfg.filter_order,
        [cfg.band_low, cfg.band_high],
        btype="bandpass",
        fs=cfg.sample_rate,
        output="sos",
    )


def bandpass_gain(cfg: PdrConfig, freq: float) -> float:
    """Magnitude response of the step band-pass at `freq` Hz."""
    _, h = signal.sosfreqz(design_bandpass(cfg), worN=[freq], fs=cfg.sample_rate)
    return float(abs(h[0]))


def _dynamic_magnitude(samples: Sequence[ImuSample], cfg: PdrConfig) -> np.ndarray:
    acc = np.array([s.acc for s in samples], dtype=float).reshape(-1, 3)
    return np.linalg.norm(acc, axis=1) - cfg.gravity


def bandpass(samples: Sequence[ImuSample], cfg: PdrConfig) -> List[Tuple[float, float]]:
    """Causal band-pass of |acc| - g; returns (t, filtered) pairs."""
    samples = list(samples)
    if not samples:
        return []
    sos = design_bandpass(cfg)
    filtered = signal.sosfilt(sos, _dynamic_magnitude(samples, cfg))
    return [(s.t, float(v)) for s, v in zip(samples, filtered)]


class _PeakValleyDetector:
    """Streaming peak -> following valley pairing with a one-sample look-ahead."""

    def __init__(self, cfg: PdrConfig):
        self.cfg = cfg
        self._prev: Optional[Tuple[float, float, Optional[float]]] = None
        self._cur: Optional[Tuple[float, float, Optional[float]]] = None
        self._peak: Optional[Tuple[float, float, Optional[float]]] = None
        self._last_peak_t = -math.inf

    def push(self, t: float, value: float, psi: Optional[float] = None) -> Optional[StepEvent]:
        sample = (t, value, psi)
        event = None
        if self._prev is not None and self._cur is not None:
            pv, cv, nv = self._prev[1], self._cur[1], value
            if pv < cv >= nv:
                self._on_local_max(self._cur)
            elif pv > cv <= nv and self._peak is not None:
                event = self._on_local_min(self._cur)
        self._prev, self._cur = self._cur, sample
        return event

    def _on_local_max(self, s):
        t, v, _ = s
        if v <= self.cfg.peak_threshold:
            return
        if t - self._last_peak_t < self.cfg.min_step_interval:
            return
        if self._peak is None or v > self._peak[1]:
            self._peak = s

    def _on_local_min(self, s) -> Optional[StepEvent]:
        t_pk, a_pk, psi = self._peak
        t_val, a_val, _ = s
        self._peak = None
        if a_pk - a_val <= 0:
            return None
        self._last_peak_t = t_pk
        return StepEvent(
            t_peak=t_pk, t_valley=t_val, A_pk=a_pk, A_val=a_val,
            delta_A=a_pk - a_val, psi=psi,
        )


def detect_steps(filtered: Iterable[Tuple[float, float]], cfg: PdrConfig) -> List[StepEvent]:
    detector = _PeakValleyDetector(cfg)
    events = []
    for t, v in filtered:
        ev = detector.push(t, v)
        if ev is not None:
            events.append(ev)
    return events


def step_length(ev: StepEvent, cfg: PdrConfig) -> float:
    """Weinberg relation k * dA^(1/4), clamped to [0, max_step_length]."""
    if not ev.delta_A > 0:
        raise InvalidInputError(f"step event has non-positive amplitude {ev.delta_A}")
    return min(max(cfg.k_weinberg * ev.delta_A ** 0.25, 0.0), cfg.max_step_length)


def make_increment(ev: StepEvent, psi: float, psi_prev: float, cfg: PdrConfig) -> StepIncrement:
    ds = step_length(ev, cfg)
    return StepIncrement(
        t=ev.t_peak,
        delta_p=(ds * math.sin(psi), ds * math.cos(psi)),
        delta_z=0.0,
        delta_psi=wrap_angle(psi - psi_prev),
        step_length=ds,
        psi=wrap_angle(psi),
    )


def calibrate_k(known_distance: float, events: Sequence[StepEvent]) -> float:
    """Gain that makes the events replay to exactly `known_distance`."""
    if not events:
        raise InvalidInputError("calibration needs step events")
    if len(events) < 10:
        raise InvalidInputError(f"calibration needs at least 10 steps, got {len(events)}")
    if not known_distance > 0:
        raise InvalidInputError("calibration distance must be positive")
    if any(not ev.delta_A > 0 for ev in events):
        raise InvalidInputError("calibration events must have positive amplitude")
    return known_distance / math.fsum(ev.delta_A ** 0.25 for ev in events)


class PdrFrontend:
    """Stateful IMU stream -> StepIncrement processor. One instance per stream."""

    def __init__(self, cfg: Optional[PdrConfig] = None):
        self.cfg = cfg or PdrConfig()
        self._sos = design_bandpass(self.cfg)
        self._zi = np.zeros((self._sos.shape[0], 2))
        self._detector = _PeakValleyDetector(self.cfg)
        self._last_t: Optional[float] = None
        self._psi_prev: Optional[float] = None

    def push(self, sample: ImuSample) -> Optional[StepIncrement]:
        if self._last_t is not None and sample.t <= self._last_t:
            raise InvalidInputError(
                f"IMU timestamps must increase: {sample.t} after {self._last_t}"
            )
        self._last_t = sample.t
        x = float(np.linalg.norm(sample.acc)) - self.cfg.gravity
        y, self._zi = signal.sosfilt(self._sos, [x], zi=self._zi)
        ev = self._detector.push(sample.t, float(y[0]), sample.heading)
        if ev is None:
            return None
        psi = ev.psi if ev.psi is not None else sample.heading
        psi_prev = psi if self._psi_prev is None else self._psi_prev
        self._psi_prev = psi
        return make_increment(ev, psi, psi_prev, self.cfg)

    def process(self, samples: Iterable[ImuSample]) -> List[StepIncrement]:
        out = []
        for s in samples:
            inc = self.push(s)
            if inc is not None:
                out.append(inc)
        logger.info(f"PDR front-end produced {len(out)} steps")
        return out
