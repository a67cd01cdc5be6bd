"""
Process settings (environment) and run configuration files (JSON).
"""

import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

# Load environment variables, but skip during tests
if "pytest" not in sys.modules:
    load_dotenv()

from .backends import BACKENDS
from .backends.eskf import EskfConfig
from .backends.fgo import FgoConfig
from .backends.pf import PfConfig
from .errors import ConfigurationError
from .pdr import PdrConfig
from .schemas import EnuOrigin, GeoPoint
from .simulation import ScenarioSpec
from .uwb import UwbConfig

DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///./positioning_runs.db")
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "./runs")
RUN_RATE_LIMIT = os.getenv("RUN_RATE_LIMIT", "10/minute")


class MapConfig(BaseModel):
    path: str
    allowed_building_ids: List[str] = []


class RunConfig(BaseModel):
    """One reproducible run: which scenario, which map, which back-ends, where to write."""

    model_config = ConfigDict(extra="forbid")

    scenario: Optional[str] = None
    map: MapConfig
    anchors: Optional[str] = None
    origin: GeoPoint
    out_dir: str = "out"
    seed: Optional[int] = None
    backends: List[str] = Field(default_factory=lambda: ["eskf", "fgo", "pf"], min_length=1)
    map_constraints: bool = True
    from_imu: bool = False
    export_geodetic: bool = False
    parallel: bool = False
    cdf_points: int = Field(100, ge=1)
    transition_window: float = Field(2.0, gt=0.0, description="s around each GNSS->UWB handover")

    pdr: PdrConfig = PdrConfig()
    uwb: UwbConfig = UwbConfig()
    eskf: EskfConfig = EskfConfig()
    fgo: FgoConfig = FgoConfig()
    pf: PfConfig = PfConfig()

    @field_validator("backends")
    @classmethod
    def _known_backends(cls, v):
        unknown = [b for b in v if b not in BACKENDS]
        if unknown:
            raise ValueError(f"unknown backends {unknown}; choose from {sorted(BACKENDS)}")
        return list(dict.fromkeys(v))

    @property
    def enu_origin(self) -> EnuOrigin:
        return EnuOrigin(origin=self.origin)

    def backend_params(self, name: str) -> dict:
        section = getattr(self, name, None)
        return section.model_dump() if isinstance(section, BaseModel) and name != "pdr" else {}


def _read_json(path: Path, what: str) -> dict:
    if not path.exists():
        raise ConfigurationError(f"{what} not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{what} {path} is not valid JSON: {e}")


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


def load_run_config(path) -> RunConfig:
    """Parse a run configuration; relative paths resolve against the file's directory."""
    path = Path(path)
    doc = _read_json(path, "run config")
    try:
        cfg = RunConfig(**doc)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run config {path}: {e}")
    base = path.parent
    cfg = cfg.model_copy(update={
        "scenario": _resolve(base, cfg.scenario),
        "anchors": _resolve(base, cfg.anchors),
        "out_dir": _resolve(base, cfg.out_dir),
        "map": cfg.map.model_copy(update={"path": _resolve(base, cfg.map.path)}),
    })
    for label, ref in (("map", cfg.map.path), ("anchor file", cfg.anchors)):
        if ref is not None and not Path(ref).exists():
            raise ConfigurationError(f"{label} not found: {ref}")
    return cfg


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    doc = _read_json(path, "scenario spec")
    try:
        return ScenarioSpec(**doc)
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario spec {path}: {e}")
