"""
Sliding-window factor graph over step-indexed poses [x, y, z, psi].

Factors are linear in the world frame (between = component-wise difference with
wrapped heading), solved by dense Gauss-Newton over the window.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import ContractViolationError, NotInitializedError, SolverError
from ..feasibility import FeasibilityMap, gate_fix
from ..geo import wrap_angle, wrap_angles
from ..logging_config import get_logger
from ..schemas import AbsoluteFix, EstimatorOutput, FixSource, GateDecision, GatePolicy, GateVerdict, StepIncrement
from .base import Backend

logger = get_logger(__name__)

# Squared Cholesky pivot ratio below which the window counts as under-constrained
MIN_PIVOT_RATIO = 1e-12


class FgoConfig(BaseModel):
    window: int = Field(50, ge=2, description="max nodes kept after pruning")
    sigma_pdr_xy: float = Field(0.1, gt=0.0)
    sigma_pdr_z: float = Field(0.05, gt=0.0)
    sigma_pdr_psi: float = Field(0.05, gt=0.0)
    sigma_weak_xy: float = Field(0.5, gt=0.0)
    sigma_weak_psi: float = Field(0.3, gt=0.0)
    sigma_prior_psi: float = Field(1.0, gt=0.0)
    sigma_gnss: float = Field(1.5, gt=0.0)
    sigma_uwb: float = Field(0.15, gt=0.0)
    max_iterations: int = Field(25, ge=1)
    cost_tolerance: float = 1e-9
    step_tolerance: float = 1e-8
    dump_graph: bool = False


class FactorKind(str, Enum):
    PRIOR = "Prior"
    BETWEEN = "Between"
    POSITION = "Position"
    WEAK_ANCHOR = "WeakAnchor"


@dataclass
class PoseNode:
    T: np.ndarray
    step_index: int
    t: float


@dataclass
class Factor:
    kind: FactorKind
    nodes: Tuple[int, ...]  # step indices
    measurement: np.ndarray
    sqrt_info: np.ndarray


@dataclass
class FgoWindow:
    cfg: FgoConfig
    nodes: List[PoseNode] = field(default_factory=list)
    factors: List[Factor] = field(default_factory=list)
    rejected: int = 0
    last_cost: float = 0.0
    iterations: int = 0

    @property
    def W(self) -> int:
        return self.cfg.window

    def node(self, step_index: int) -> PoseNode:
        for n in self.nodes:
            if n.step_index == step_index:
                return n
        raise ContractViolationError(f"factor references pruned node {step_index}")


def _fix_sigma(fix: AbsoluteFix, cfg: FgoConfig) -> np.ndarray:
    return fix.effective_sigma(cfg.sigma_gnss if fix.source == FixSource.GNSS else cfg.sigma_uwb)


def fgo_init(fix: AbsoluteFix, cfg: Optional[FgoConfig] = None, psi0: float = 0.0) -> FgoWindow:
    cfg = cfg or FgoConfig()
    T0 = np.append(fix.pos.as_array(), wrap_angle(psi0))
    w = FgoWindow(cfg=cfg)
    w.nodes.append(PoseNode(T=T0, step_index=0, t=fix.t))
    sqrt_info = np.append(1.0 / _fix_sigma(fix, cfg), 1.0 / cfg.sigma_prior_psi)
    w.factors.append(Factor(FactorKind.PRIOR, (0,), T0.copy(), sqrt_info))
    return w


def fgo_add_step(w: FgoWindow, inc: StepIncrement) -> FgoWindow:
    if not w.nodes:
        raise NotInitializedError("FGO window has no nodes before the first absolute fix")
    cfg = w.cfg
    last = w.nodes[-1]
    du = np.array([inc.delta_p[0], inc.delta_p[1], inc.delta_z, inc.delta_psi])
    guess = last.T + du
    guess[3] = wrap_angle(guess[3])
    k = last.step_index + 1
    w.nodes.append(PoseNode(T=guess, step_index=k, t=inc.t))
    sqrt_info = 1.0 / np.array([cfg.sigma_pdr_xy, cfg.sigma_pdr_xy, cfg.sigma_pdr_z, cfg.sigma_pdr_psi])
    w.factors.append(Factor(FactorKind.BETWEEN, (last.step_index, k), du, sqrt_info))
    return w


def fgo_add_fix(
    w: FgoWindow,
    fix: AbsoluteFix,
    fmap: Optional[FeasibilityMap] = None,
) -> Tuple[FgoWindow, GateDecision]:
    """Attach a Position factor to the latest node unless the map gate rejects the fix."""
    if not w.nodes:
        raise NotInitializedError("FGO window has no nodes before the first absolute fix")
    if fmap is None:
        decision = GateDecision(verdict=GateVerdict.ACCEPT, adjusted=fix.pos)
    else:
        decision = gate_fix(fmap, fix, GatePolicy.REJECT_ONLY)
    if decision.verdict == GateVerdict.REJECT:
        w.rejected += 1
        return w, decision
    latest = w.nodes[-1].step_index
    w.factors.append(Factor(
        FactorKind.POSITION, (latest,), fix.pos.as_array(), 1.0 / _fix_sigma(fix, w.cfg),
    ))
    return w, decision


def _linearize(factors: List[Factor], X: np.ndarray, index: Dict[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Whitened residual vector and Jacobian over the stacked node states."""
    rows = sum(len(f.measurement) for f in factors)
    r = np.zeros(rows)
    J = np.zeros((rows, X.size))
    row = 0
    for f in factors:
        m = len(f.measurement)
        if f.kind == FactorKind.BETWEEN:
            i, j = index[f.nodes[0]], index[f.nodes[1]]
            res = X[j] - X[i] - f.measurement
            res[3] = wrap_angle(res[3])
            J[row:row + 4, 4 * i:4 * i + 4] = -np.eye(4)
            J[row:row + 4, 4 * j:4 * j + 4] = np.eye(4)
        else:
            i = index[f.nodes[0]]
            res = X[i, :m] - f.measurement
            if m == 4:
                res[3] = wrap_angle(res[3])
            J[row:row + m, 4 * i:4 * i + m] = np.eye(m)
        r[row:row + m] = res * f.sqrt_info
        J[row:row + m] *= f.sqrt_info[:, None]
        row += m
    return r, J


def _cost(factors, X, index) -> float:
    r, _ = _linearize(factors, X, index)
    return float(r @ r)


def _factorize(H: np.ndarray, n_nodes: int):
    if H.size == 0 or not np.all(np.isfinite(H)):
        raise SolverError(f"singular normal equations over a {n_nodes}-node window")
    try:
        factor = cho_factor(H)
    except LinAlgError:
        raise SolverError(f"singular normal equations over a {n_nodes}-node window")
    pivots = np.diag(factor[0]) ** 2
    if pivots.min() < MIN_PIVOT_RATIO * pivots.max():
        raise SolverError(f"ill-conditioned normal equations over a {n_nodes}-node window")
    return factor


def fgo_optimize(w: FgoWindow) -> EstimatorOutput:
    """
    Gauss-Newton over every node of the window. A step is only taken if it does
    not increase the cost (halving it otherwise), so the accepted iterates are
    monotone. Returns the latest node's pose with its marginal position covariance.
    """
    if not w.nodes:
        raise NotInitializedError("FGO window has no nodes before the first absolute fix")
    cfg = w.cfg
    index = {n.step_index: i for i, n in enumerate(w.nodes)}
    X = np.array([n.T for n in w.nodes], dtype=float)

    r, J = _linearize(w.factors, X, index)
    cost = float(r @ r)
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        factor = _factorize(J.T @ J, len(w.nodes))
        dx = -cho_solve(factor, J.T @ r).reshape(-1, 4)

        alpha = 1.0
        accepted = False
        while alpha > 1e-6:
            candidate = X + alpha * dx
            candidate[:, 3] = wrap_angles(candidate[:, 3])
            new_cost = _cost(w.factors, candidate, index)
            if new_cost <= cost:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        decrease = cost - new_cost
        X = candidate
        cost = new_cost
        r, J = _linearize(w.factors, X, index)
        if decrease < cfg.cost_tolerance or alpha * np.linalg.norm(dx) < cfg.step_tolerance:
            break

    for node, T in zip(w.nodes, X):
        node.T = T.copy()
    w.last_cost = cost
    w.iterations = iterations

    factor = _factorize(J.T @ J, len(w.nodes))
    k = 4 * (len(w.nodes) - 1)
    # only the latest pose block of the inverse is needed
    cols = cho_solve(factor, np.eye(4 * len(w.nodes))[:, k:k + 3])
    latest = w.nodes[-1]
    return EstimatorOutput.build(latest.t, latest.T[:3], latest.T[3], cols[k:k + 3, :])


def fgo_prune(w: FgoWindow) -> FgoWindow:
    """Drop nodes beyond the window and pin the new oldest node with one weak anchor."""
    excess = len(w.nodes) - w.W
    if excess <= 0:
        return w
    dropped = {n.step_index for n in w.nodes[:excess]}
    w.nodes = w.nodes[excess:]
    oldest = w.nodes[0]
    w.factors = [
        f for f in w.factors
        if f.kind != FactorKind.WEAK_ANCHOR and not dropped.intersection(f.nodes)
    ]
    cfg = w.cfg
    sqrt_info = 1.0 / np.array([cfg.sigma_weak_xy, cfg.sigma_weak_xy, cfg.sigma_weak_xy, cfg.sigma_weak_psi])
    w.factors.append(Factor(FactorKind.WEAK_ANCHOR, (oldest.step_index,), oldest.T.copy(), sqrt_info))
    logger.debug(f"FGO pruned {excess} node(s); oldest is now step {oldest.step_index}")
    return w


def fgo_set_heading(w: FgoWindow, psi: float) -> FgoWindow:
    """Re-seed the heading of a single-node window (and its prior) once PDR heading is known."""
    if len(w.nodes) != 1:
        raise ContractViolationError("heading can only be re-seeded before the first step")
    w.nodes[0].T[3] = wrap_angle(psi)
    for f in w.factors:
        if f.kind == FactorKind.PRIOR:
            f.measurement[3] = wrap_angle(psi)
    return w


def fgo_dump(w: FgoWindow) -> Dict:
    """JSON-ready snapshot of the window for debugging."""
    return {
        "nodes": [
            {"step_index": n.step_index, "t": n.t, "T": [float(v) for v in n.T]}
            for n in w.nodes
        ],
        "factors": [
            {
                "kind": f.kind.value,
                "nodes": list(f.nodes),
                "measurement": [float(v) for v in f.measurement],
                "sqrt_info": [float(v) for v in f.sqrt_info],
            }
            for f in w.factors
        ],
        "cost": w.last_cost,
        "iterations": w.iterations,
        "rejected": w.rejected,
    }


class FgoBackend(Backend):
    """Optimizes once per confirmed step; fixes only add factors."""

    name = "fgo"

    def __init__(self, fmap: Optional[FeasibilityMap] = None, map_constraints: bool = True,
                 cfg: Optional[FgoConfig] = None):
        super().__init__(fmap, map_constraints)
        self.cfg = cfg or FgoConfig()
        self.window: Optional[FgoWindow] = None
        self._latest: Optional[EstimatorOutput] = None
        self._dumps: List[Dict] = []

    @property
    def initialized(self) -> bool:
        return self.window is not None

    def _initialize(self, fix):
        self.window = fgo_init(fix, self.cfg)
        self._latest = fgo_optimize(self.window)
        return self._latest

    def _on_step(self, inc):
        w = self.window
        if len(w.nodes) == 1 and w.nodes[0].step_index == 0:
            fgo_set_heading(w, inc.psi - inc.delta_psi)
        fgo_add_step(w, inc)
        if len(w.nodes) > w.W:
            fgo_prune(w)
        self._latest = fgo_optimize(w)
        if self.cfg.dump_graph:
            self._dumps.append({"t": inc.t, **fgo_dump(w)})
        return self._latest

    def _on_fix(self, fix):
        _, decision = fgo_add_fix(self.window, fix, self.fmap if self.map_constraints else None)
        self._count(decision)
        return self._latest

    def debug_records(self) -> Optional[List[Dict]]:
        return self._dumps if self.cfg.dump_graph else None
