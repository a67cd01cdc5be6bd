"""Event interface shared by every estimator back-end."""

from typing import Dict, List, Optional

from ..feasibility import FeasibilityMap, is_feasible
from ..logging_config import get_logger
from ..schemas import AbsoluteFix, BackendStats, EstimatorOutput, GateDecision, GateVerdict, StepIncrement

logger = get_logger(__name__)


class Backend:
    """
    Consumes the merged step/fix stream of one trajectory.

    No output is produced until the first admissible absolute fix; after that
    every event yields exactly one EstimatorOutput stamped with the event time.
    With map constraints on, a fix inside a forbidden building cannot initialize.
    """

    name = "base"

    def __init__(self, fmap: Optional[FeasibilityMap] = None, map_constraints: bool = True):
        self.fmap = fmap
        self.map_constraints = map_constraints and fmap is not None
        self.stats = BackendStats()

    @property
    def initialized(self) -> bool:
        raise NotImplementedError

    def _initialize(self, fix: AbsoluteFix) -> EstimatorOutput:
        raise NotImplementedError

    def _on_step(self, inc: StepIncrement) -> EstimatorOutput:
        raise NotImplementedError

    def _on_fix(self, fix: AbsoluteFix) -> EstimatorOutput:
        raise NotImplementedError

    def _count(self, decision: GateDecision) -> None:
        if decision.verdict == GateVerdict.ACCEPT:
            self.stats.accepted += 1
        elif decision.verdict == GateVerdict.PROJECT:
            self.stats.projected += 1
        else:
            self.stats.rejected += 1

    def _emit(self, out: EstimatorOutput, t: float) -> EstimatorOutput:
        self.stats.outputs += 1
        if out.t != t:
            out = out.model_copy(update={"t": float(t)})
        return out

    def debug_records(self) -> Optional[List[Dict]]:
        """Optional per-backend debug snapshots written next to the outputs."""
        return None

    def process_step(self, inc: StepIncrement) -> Optional[EstimatorOutput]:
        self.stats.steps += 1
        if not self.initialized:
            return None
        return self._emit(self._on_step(inc), inc.t)

    def process_fix(self, fix: AbsoluteFix) -> Optional[EstimatorOutput]:
        if self.initialized:
            return self._emit(self._on_fix(fix), fix.t)
        if self.map_constraints and not is_feasible(self.fmap, fix.pos):
            self.stats.rejected += 1
            logger.debug(f"{self.name}: fix at t={fix.t:.3f} is infeasible, still waiting to initialize")
            return None
        self.stats.accepted += 1
        out = self._initialize(fix)
        logger.info(f"{self.name}: initialized at t={fix.t:.3f} from {fix.source.value} fix")
        return self._emit(out, fix.t)
