"""PDR-only baseline: anchored once by the first absolute fix, then integrates steps."""

from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ..feasibility import FeasibilityMap
from ..geo import wrap_angle
from ..schemas import EstimatorOutput
from .base import Backend


class DeadReckoningConfig(BaseModel):
    sigma_step_xy: float = Field(0.15, gt=0.0)
    sigma_init: float = Field(1.0, gt=0.0)


class DeadReckoningBackend(Backend):
    name = "pdr"

    def __init__(self, fmap: Optional[FeasibilityMap] = None, map_constraints: bool = True,
                 cfg: Optional[DeadReckoningConfig] = None):
        super().__init__(fmap, map_constraints)
        self.cfg = cfg or DeadReckoningConfig()
        self.p: Optional[np.ndarray] = None
        self.yaw = 0.0
        self.cov = np.zeros((3, 3))
        self.t = 0.0

    @property
    def initialized(self) -> bool:
        return self.p is not None

    def _estimate(self):
        return EstimatorOutput.build(self.t, self.p, self.yaw, self.cov)

    def _initialize(self, fix):
        self.p = fix.pos.as_array()
        self.cov = np.diag(fix.effective_sigma(self.cfg.sigma_init) ** 2)
        self.t = fix.t
        return self._estimate()

    def _on_step(self, inc):
        self.p = self.p + np.array([inc.delta_p[0], inc.delta_p[1], inc.delta_z])
        self.yaw = wrap_angle(inc.psi)
        grow = self.cfg.sigma_step_xy ** 2 * float(np.hypot(*inc.delta_p))
        self.cov[0, 0] += grow
        self.cov[1, 1] += grow
        self.t = max(self.t, inc.t)
        return self._estimate()

    def _on_fix(self, fix):
        # the baseline never corrects after initialization
        self.stats.rejected += 1
        self.t = max(self.t, fix.t)
        return self._estimate()
