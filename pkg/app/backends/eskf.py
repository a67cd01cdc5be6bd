"""
PDR-driven error-state Kalman filter.

Nominal state (p, v, q) with a 9-dim error state [dp, dv, dtheta]. Step
displacements drive the prediction directly, so the error transition is the
identity; absolute fixes update position through H = [I3 0 0].
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.transform import Rotation

from ..errors import NotInitializedError
from ..feasibility import FeasibilityMap, gate_fix
from ..geo import wrap_angle
from ..logging_config import get_logger
from ..schemas import (
    AbsoluteFix,
    EstimatorOutput,
    FixSource,
    GateDecision,
    GatePolicy,
    GateVerdict,
    StepIncrement,
)
from .base import Backend

logger = get_logger(__name__)

H = np.hstack([np.eye(3), np.zeros((3, 6))])


class EskfConfig(BaseModel):
    sigma_step_xy: float = Field(0.15, gt=0.0, description="m per sqrt(m) walked")
    sigma_theta: float = Field(0.02, gt=0.0, description="rad per step")
    sigma_v: float = Field(0.1, gt=0.0, description="m/s")
    gate_chi2: float = Field(13.8, gt=0.0)
    sigma_gnss: float = Field(1.5, gt=0.0)
    sigma_uwb: float = Field(0.15, gt=0.0)
    prior_velocity_var: float = Field(1.0, gt=0.0)
    prior_attitude_var: float = Field(0.1, gt=0.0)


@dataclass
class EskfState:
    p_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_est: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))  # x, y, z, w
    P: np.ndarray = field(default_factory=lambda: np.eye(9))
    t: float = 0.0
    initialized: bool = False
    chi2_rejections: int = 0

    def copy(self) -> "EskfState":
        return EskfState(
            p_est=self.p_est.copy(),
            v_est=self.v_est.copy(),
            q_est=self.q_est.copy(),
            P=self.P.copy(),
            t=self.t,
            initialized=self.initialized,
            chi2_rejections=self.chi2_rejections,
        )


def heading_quaternion(psi: float) -> np.ndarray:
    """
    Attitude quaternion (x, y, z, w) of a level body whose x axis points along
    compass heading `psi` (0 = North, clockwise positive). ENU yaw is measured
    counter-clockwise from East, so the rotation about Up is pi/2 - psi.
    """
    return Rotation.from_euler("z", math.pi / 2.0 - psi).as_quat()


def quaternion_heading(q: np.ndarray) -> float:
    """Compass heading of an attitude quaternion; inverse of heading_quaternion."""
    yaw = Rotation.from_quat(q).as_euler("ZYX")[0]
    return wrap_angle(math.pi / 2.0 - float(yaw))


def _sensor_sigma(fix: AbsoluteFix, cfg: EskfConfig) -> np.ndarray:
    default = cfg.sigma_gnss if fix.source == FixSource.GNSS else cfg.sigma_uwb
    return fix.effective_sigma(default)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _require(s: EskfState) -> None:
    if not s.initialized:
        raise NotInitializedError("ESKF used before the first absolute fix")


def eskf_init(fix: AbsoluteFix, cfg: Optional[EskfConfig] = None) -> EskfState:
    cfg = cfg or EskfConfig()
    sigma = _sensor_sigma(fix, cfg)
    P = np.diag(np.concatenate([
        sigma ** 2,
        np.full(3, cfg.prior_velocity_var),
        np.full(3, cfg.prior_attitude_var),
    ]))
    return EskfState(p_est=fix.pos.as_array(), q_est=heading_quaternion(0.0), P=P, t=fix.t, initialized=True)


def eskf_predict(
    s: EskfState,
    inc: StepIncrement,
    q_pdr: np.ndarray,
    cfg: Optional[EskfConfig] = None,
) -> EskfState:
    """p += dp, q <- q_pdr, P <- P + LQL' (F is the identity)."""
    _require(s)
    cfg = cfg or EskfConfig()
    out = s.copy()
    dp = np.array([inc.delta_p[0], inc.delta_p[1], inc.delta_z])
    out.p_est = s.p_est + dp
    q = np.asarray(q_pdr, dtype=float)
    out.q_est = q / np.linalg.norm(q)

    dt = max(inc.t - s.t, 0.0)
    step = float(np.hypot(inc.delta_p[0], inc.delta_p[1]))
    Q = np.zeros(9)
    Q[0:2] = cfg.sigma_step_xy ** 2 * step
    Q[3:6] = cfg.sigma_v ** 2 * dt
    Q[8] = cfg.sigma_theta ** 2
    out.P = _symmetrize(s.P + np.diag(Q))
    out.t = max(inc.t, s.t)
    return out


def eskf_update(
    s: EskfState,
    fix: AbsoluteFix,
    fmap: Optional[FeasibilityMap] = None,
    cfg: Optional[EskfConfig] = None,
) -> Tuple[EskfState, GateDecision]:
    """
    Gate the fix against the map (projecting infeasible fixes to the boundary),
    then run a Joseph-form position update unless the innovation fails the
    chi-square gate. Pass `fmap=None` to skip map gating.
    """
    _require(s)
    cfg = cfg or EskfConfig()
    if fmap is None:
        decision = GateDecision(verdict=GateVerdict.ACCEPT, adjusted=fix.pos)
    else:
        decision = gate_fix(fmap, fix, GatePolicy.PROJECT_TO_BOUNDARY)
    out = s.copy()
    out.t = max(fix.t, s.t)
    if decision.verdict == GateVerdict.REJECT:
        return out, decision

    z = decision.adjusted.as_array()
    R = np.diag(_sensor_sigma(fix, cfg) ** 2)
    innovation = z - s.p_est
    S = H @ s.P @ H.T + R
    S_inv = np.linalg.inv(S)
    chi2 = float(innovation @ S_inv @ innovation)
    if chi2 > cfg.gate_chi2:
        out.chi2_rejections += 1
        logger.debug(f"ESKF chi-square gate rejected fix at t={fix.t:.3f} (chi2={chi2:.2f})")
        return out, decision

    K = s.P @ H.T @ S_inv
    dx = K @ innovation
    out.p_est = s.p_est + dx[0:3]
    out.v_est = s.v_est + dx[3:6]
    q = (Rotation.from_rotvec(dx[6:9]) * Rotation.from_quat(s.q_est)).as_quat()
    out.q_est = q / np.linalg.norm(q)

    I_KH = np.eye(9) - K @ H
    out.P = _symmetrize(I_KH @ s.P @ I_KH.T + K @ R @ K.T)
    return out, decision


def eskf_estimate(s: EskfState) -> EstimatorOutput:
    _require(s)
    return EstimatorOutput.build(s.t, s.p_est, quaternion_heading(s.q_est), s.P[0:3, 0:3])


class EskfBackend(Backend):
    name = "eskf"

    def __init__(self, fmap: Optional[FeasibilityMap] = None, map_constraints: bool = True,
                 cfg: Optional[EskfConfig] = None):
        super().__init__(fmap, map_constraints)
        self.cfg = cfg or EskfConfig()
        self.state = EskfState()

    @property
    def initialized(self) -> bool:
        return self.state.initialized

    def _initialize(self, fix):
        self.state = eskf_init(fix, self.cfg)
        return eskf_estimate(self.state)

    def _on_step(self, inc):
        self.state = eskf_predict(self.state, inc, heading_quaternion(inc.psi), self.cfg)
        return eskf_estimate(self.state)

    def _on_fix(self, fix):
        before = self.state.chi2_rejections
        fmap = self.fmap if self.map_constraints else None
        self.state, decision = eskf_update(self.state, fix, fmap, self.cfg)
        if self.state.chi2_rejections > before:
            self.stats.chi2_rejected += 1
        else:
            self._count(decision)
        return eskf_estimate(self.state)
