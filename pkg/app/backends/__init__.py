"""Estimator back-ends fed by the merged step/fix event stream."""

from typing import Dict, Optional

from pydantic import ValidationError

from ..errors import ConfigurationError
from ..feasibility import FeasibilityMap
from .base import Backend
from .dead_reckoning import DeadReckoningBackend, DeadReckoningConfig
from .eskf import EskfBackend, EskfConfig
from .fgo import FgoBackend, FgoConfig
from .pf import PfBackend, PfConfig

BACKENDS = {
    "eskf": (EskfBackend, EskfConfig),
    "fgo": (FgoBackend, FgoConfig),
    "pf": (PfBackend, PfConfig),
    "pdr": (DeadReckoningBackend, DeadReckoningConfig),
}

# Table row order used by evaluation output
BACKEND_ORDER = ["fgo", "pf", "eskf", "pdr"]


def make_backend(
    name: str,
    fmap: Optional[FeasibilityMap] = None,
    map_constraints: bool = True,
    overrides: Optional[Dict] = None,
    seed: int = 0,
) -> Backend:
    if name not in BACKENDS:
        raise ConfigurationError(f"unknown backend '{name}'; choose from {sorted(BACKENDS)}")
    backend_cls, config_cls = BACKENDS[name]
    try:
        cfg = config_cls(**(overrides or {}))
    except ValidationError as e:
        raise ConfigurationError(f"invalid {name} parameters: {e}")
    if backend_cls is PfBackend:
        return PfBackend(fmap, map_constraints, cfg, seed=seed)
    return backend_cls(fmap, map_constraints, cfg)


__all__ = [
    "BACKENDS",
    "BACKEND_ORDER",
    "Backend",
    "DeadReckoningBackend",
    "EskfBackend",
    "FgoBackend",
    "PfBackend",
    "make_backend",
]
