"""Simulate-run-evaluate requests and the stored run registry."""

import json
import tempfile
import uuid
from pathlib import Path
from typing import Optional

from fastapi import APIRouter, HTTPException, Query, Request, status
from pydantic import ValidationError

from .. import db, schemas
from ..config import RUN_RATE_LIMIT, MapConfig, RunConfig
from ..errors import ConfigurationError
from ..limiter import limiter
from ..logging_config import get_logger
from ..pipeline import cmd_evaluate, cmd_run, cmd_simulate
from ..simulation import ScenarioSpec

logger = get_logger(__name__)

router = APIRouter(prefix="/api/runs", tags=["runs"])


def _run_config(body: schemas.RunRequest, workdir: Path) -> RunConfig:
    try:
        spec = ScenarioSpec(**body.scenario)
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario: {e}")
    scenario_path = workdir / "scenario.json"
    map_path = workdir / "map.geojson"
    scenario_path.write_text(spec.model_dump_json(), encoding="utf-8")
    map_path.write_text(json.dumps(body.map), encoding="utf-8")
    try:
        return RunConfig(
            scenario=str(scenario_path),
            map=MapConfig(path=str(map_path), allowed_building_ids=body.allowed_building_ids),
            origin=body.origin,
            out_dir=str(workdir / "out"),
            seed=body.seed,
            backends=body.backends,
            map_constraints=body.map_constraints,
        )
    except ValidationError as e:
        raise ConfigurationError(f"invalid run request: {e}")


@router.post("", response_model=schemas.RunResponse, status_code=status.HTTP_201_CREATED)
@limiter.limit(RUN_RATE_LIMIT)
def create_run(request: Request, body: schemas.RunRequest):
    """Simulate the scenario, run the selected back-ends, evaluate and store the summaries."""
    run_id = uuid.uuid4().hex
    with tempfile.TemporaryDirectory(prefix=f"run-{run_id[:8]}-") as tmp:
        cfg = _run_config(body, Path(tmp))
        cmd_simulate(cfg)
        cmd_run(cfg)
        results = cmd_evaluate(cfg)
        scenario = json.loads((Path(cfg.out_dir) / "meta.json").read_text(encoding="utf-8"))["scenario"]

    ordered = [results[b] for b in cfg.backends if b in results]
    db.save_run_summaries(run_id, scenario, body.seed, ordered)
    logger.info(f"Run {run_id} on '{scenario}' stored with {len(ordered)} backend summaries")
    return schemas.RunResponse(run_id=run_id, scenario=scenario, seed=body.seed, results=ordered)


@router.get("")
def list_runs(scenario: Optional[str] = Query(None, description="filter by scenario name")):
    return {"items": db.list_runs(scenario)}


@router.get("/{run_id}")
def get_run(run_id: str):
    run = db.get_run(run_id)
    if run is None:
        raise HTTPException(status_code=404, detail="Run not found")
    return run
