from datetime import datetime
from typing import Dict, List, Optional, Sequence

from .database import SessionLocal, RunRecord
from .schemas import BackendResult


def _record_to_dict(r: RunRecord) -> Dict:
    return {
        "backend": r.backend,
        "summary": {
            "mean": r.mean,
            "median": r.median,
            "rmse": r.rmse,
            "std": r.std,
            "max": r.max,
            "n": r.n,
        },
        "max_jump": r.max_jump,
    }


def save_run_summaries(run_id: str, scenario: str, seed: int, results: Sequence[BackendResult]) -> int:
    """Store one row per evaluated back-end; returns the number of rows written."""
    db = SessionLocal()
    try:
        now = datetime.utcnow()
        for res in results:
            s = res.summary
            db.add(RunRecord(
                run_id=run_id,
                scenario=scenario,
                backend=res.backend,
                seed=seed,
                mean=s.mean,
                median=s.median,
                rmse=s.rmse,
                std=s.std,
                max=s.max,
                n=s.n,
                max_jump=res.max_jump,
                created_at=now,
            ))
        db.commit()
        return len(results)
    finally:
        db.close()


def list_runs(scenario: Optional[str] = None) -> List[Dict]:
    """One entry per run, newest first, with the back-ends it evaluated."""
    db = SessionLocal()
    try:
        query = db.query(RunRecord)
        if scenario:
            query = query.filter(RunRecord.scenario == scenario)
        runs: Dict[str, Dict] = {}
        for r in query.order_by(RunRecord.created_at.desc(), RunRecord.id).all():
            entry = runs.setdefault(r.run_id, {
                "run_id": r.run_id,
                "scenario": r.scenario,
                "seed": r.seed,
                "backends": [],
                "created_at": r.created_at.isoformat() if r.created_at else None,
            })
            entry["backends"].append(r.backend)
        return list(runs.values())
    finally:
        db.close()


def get_run(run_id: str) -> Optional[Dict]:
    db = SessionLocal()
    try:
        rows = db.query(RunRecord).filter(RunRecord.run_id == run_id).order_by(RunRecord.id).all()
        if not rows:
            return None
        return {
            "run_id": run_id,
            "scenario": rows[0].scenario,
            "seed": rows[0].seed,
            "results": [_record_to_dict(r) for r in rows],
        }
    finally:
        db.close()
