"""
Run orchestration: simulate -> run -> evaluate, shared by the CLI and the HTTP API.

All selected back-ends consume one merged, timestamp-sorted event stream
(steps before fixes at equal time), so their outputs line up one-to-one.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from .backends import BACKEND_ORDER, make_backend
from .config import RunConfig, load_scenario
from .errors import ConfigurationError, GeometryError, InvalidInputError, OutlierError, SolverError
from .feasibility import FeasibilityMap, load_map_file
from .logging_config import get_logger
from .logs import (
    ANCHORS_FILE,
    GNSS_FILE,
    IMU_FILE,
    STEPS_FILE,
    TRUTH_FILE,
    UWB_FILE,
    read_fixes,
    read_imu,
    read_outputs,
    read_ranges,
    read_steps,
    read_truth,
    write_fixes,
    write_imu,
    write_jsonl,
    write_outputs,
    write_ranges,
    write_steps,
    write_truth,
)
from .metrics import cdf, compare_table, handover_times, horizontal_error, max_jump, render_table, summarize, summary_frame, transition_jump
from .pdr import PdrFrontend
from .schemas import AbsoluteFix, Anchor, BackendResult, BackendStats, EnuPoint, EstimatorOutput, FixSource, MetricSummary, RangeSet, StepIncrement
from .simulation import simulate, synth_imu
from .uwb import UwbConfig, load_anchors, trilaterate, write_anchors

logger = get_logger(__name__)

STEP, FIX = 0, 1
META_FILE = "meta.json"
STATS_FILE = "stats.json"
SUMMARY_FILE = "summary.csv"
COMPARISON_CSV = "comparison.csv"
COMPARISON_TXT = "comparison.txt"


@dataclass(frozen=True)
class Event:
    t: float
    kind: int
    seq: int
    payload: Union[StepIncrement, AbsoluteFix]


@dataclass
class BackendRun:
    name: str
    outputs: List[EstimatorOutput]
    stats: BackendStats
    digest: str
    debug: Optional[List[Dict]] = None
    extra: Dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Event stream
# ---------------------------------------------------------------------------

def fixes_from_ranges(
    range_sets: Sequence[RangeSet],
    anchors: Sequence[Anchor],
    cfg: Optional[UwbConfig] = None,
) -> List[AbsoluteFix]:
    """Trilaterate every range set, warm-starting from the previous solution."""
    cfg = cfg or UwbConfig()
    fixes = []
    guess: Optional[EnuPoint] = None
    for rs in range_sets:
        try:
            fix = trilaterate(anchors, rs, guess, cfg)
        except (GeometryError, SolverError, OutlierError) as e:
            logger.warning(f"Skipping UWB range set at t={rs.t:.3f}: {e}")
            continue
        fixes.append(fix)
        guess = fix.pos
    return fixes


def merge_events(steps: Sequence[StepIncrement], fixes: Sequence[AbsoluteFix]) -> List[Event]:
    """Timestamp order; at equal time steps precede fixes, then input order."""
    events = [Event(s.t, STEP, i, s) for i, s in enumerate(steps)]
    events += [Event(f.t, FIX, i, f) for i, f in enumerate(fixes)]
    events.sort(key=lambda e: (e.t, e.kind, e.seq))
    return events


def run_backend(
    name: str,
    events: Sequence[Event],
    fmap: Optional[FeasibilityMap] = None,
    map_constraints: bool = True,
    params: Optional[Dict] = None,
    seed: int = 0,
) -> BackendRun:
    """Feed the event stream to one fresh back-end instance, strictly causally."""
    backend = make_backend(name, fmap, map_constraints, params, seed)
    digest = hashlib.sha256()
    outputs = []
    for ev in events:
        digest.update(ev.payload.model_dump_json().encode("utf-8"))
        if ev.kind == STEP:
            out = backend.process_step(ev.payload)
        else:
            out = backend.process_fix(ev.payload)
        if out is not None:
            outputs.append(out)
    extra = {}
    if hasattr(backend, "resample_count"):
        extra["resampled"] = backend.resample_count
    logger.info(f"Backend {name} produced {len(outputs)} outputs from {len(events)} events")
    return BackendRun(name, outputs, backend.stats, digest.hexdigest(), backend.debug_records(), extra)


def run_backends(
    names: Sequence[str],
    events: Sequence[Event],
    fmap: Optional[FeasibilityMap],
    cfg: RunConfig,
    seed: int = 0,
) -> Dict[str, BackendRun]:
    def one(name):
        return run_backend(name, events, fmap, cfg.map_constraints, cfg.backend_params(name), seed)

    if cfg.parallel and len(names) > 1:
        with ThreadPoolExecutor(max_workers=len(names)) as pool:
            runs = list(pool.map(one, names))
    else:
        runs = [one(n) for n in names]
    return {r.name: r for r in runs}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"cannot create output directory {out}: {e}")
    return out


def _load_map(cfg: RunConfig) -> FeasibilityMap:
    return load_map_file(cfg.map.path, cfg.map.allowed_building_ids, cfg.enu_origin)


def _write_json(path: Path, doc: Dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_simulate(cfg: RunConfig) -> Dict[str, Path]:
    """Write gnss.jsonl, uwb.jsonl, steps.jsonl, truth.csv (plus anchors.csv, imu.csv)."""
    if cfg.scenario is None:
        raise ConfigurationError("simulate needs a scenario spec")
    spec = load_scenario(cfg.scenario)
    if cfg.seed is not None:
        spec = spec.model_copy(update={"seed": cfg.seed})
    fmap = _load_map(cfg)
    out = _out_dir(cfg)
    logs = simulate(spec, fmap)

    paths = {
        "steps": out / STEPS_FILE,
        "gnss": out / GNSS_FILE,
        "uwb": out / UWB_FILE,
        "truth": out / TRUTH_FILE,
    }
    try:
        write_steps(paths["steps"], logs.steps)
        write_fixes(paths["gnss"], logs.gnss)
        write_ranges(paths["uwb"], logs.uwb)
        gt = logs.truth
        write_truth(paths["truth"], gt.t, gt.pos, gt.heading, gt.source)
        if spec.uwb.anchors:
            paths["anchors"] = out / ANCHORS_FILE
            write_anchors(paths["anchors"], spec.uwb.anchors)
        if cfg.from_imu:
            paths["imu"] = out / IMU_FILE
            write_imu(paths["imu"], synth_imu(gt, spec, logs.steps, cfg.pdr))
        _write_json(out / META_FILE, {"scenario": spec.name, "seed": spec.seed})
    except OSError as e:
        raise ConfigurationError(f"cannot write observation logs to {out}: {e}")
    logger.info(f"Simulation logs written to {out}")
    return paths


def _anchors(cfg: RunConfig, out: Path) -> List[Anchor]:
    if cfg.anchors is not None:
        return load_anchors(cfg.anchors, cfg.enu_origin)
    if (out / ANCHORS_FILE).exists():
        return load_anchors(out / ANCHORS_FILE, cfg.enu_origin)
    if cfg.scenario is not None and Path(cfg.scenario).exists():
        return list(load_scenario(cfg.scenario).uwb.anchors)
    return []


def _seed(cfg: RunConfig, out: Path) -> int:
    if cfg.seed is not None:
        return cfg.seed
    meta = out / META_FILE
    if meta.exists():
        return int(json.loads(meta.read_text(encoding="utf-8")).get("seed", 0))
    return 0


def load_events(cfg: RunConfig, out: Path) -> Tuple[List[Event], List[AbsoluteFix]]:
    if cfg.from_imu:
        steps = PdrFrontend(cfg.pdr).process(read_imu(out / IMU_FILE))
    else:
        steps = read_steps(out / STEPS_FILE)
    gnss = read_fixes(out / GNSS_FILE, FixSource.GNSS)
    range_sets = read_ranges(out / UWB_FILE)
    uwb = []
    if range_sets:
        anchors = _anchors(cfg, out)
        if not anchors:
            raise ConfigurationError("UWB ranges present but no anchor survey available")
        uwb = fixes_from_ranges(range_sets, anchors, cfg.uwb)
    fixes = gnss + uwb
    return merge_events(steps, fixes), fixes


def cmd_run(cfg: RunConfig) -> Dict[str, BackendRun]:
    """Replay the observation logs through every selected back-end."""
    out = _out_dir(cfg)
    fmap = _load_map(cfg)
    events, _ = load_events(cfg, out)
    runs = run_backends(cfg.backends, events, fmap, cfg, _seed(cfg, out))

    origin = cfg.enu_origin if cfg.export_geodetic else None
    stats = {}
    for name, r in runs.items():
        write_outputs(out / f"{name}.jsonl", r.outputs, origin)
        if r.debug is not None:
            write_jsonl(out / f"{name}_debug.jsonl", r.debug)
        stats[name] = {**r.stats.model_dump(), **r.extra, "events_sha256": r.digest}
    _write_json(out / STATS_FILE, stats)
    logger.info(f"Estimator outputs for {list(runs)} written to {out}")
    return runs


def _scenario_name(cfg: RunConfig, out: Path) -> str:
    meta = out / META_FILE
    if meta.exists():
        return str(json.loads(meta.read_text(encoding="utf-8")).get("scenario", "scenario"))
    if cfg.scenario is not None and Path(cfg.scenario).exists():
        return load_scenario(cfg.scenario).name
    return "scenario"


def _handover_times(out: Path) -> List[float]:
    fixes = [(f.t, FixSource.GNSS) for f in read_fixes(out / GNSS_FILE)]
    fixes += [(rs.t, FixSource.UWB) for rs in read_ranges(out / UWB_FILE)]
    return handover_times(fixes)


def evaluate_runs(
    outputs: Dict[str, List[EstimatorOutput]],
    truth,
    transitions: Sequence[float] = (),
    window: float = 2.0,
) -> Dict[str, BackendResult]:
    results = {}
    for name, est in outputs.items():
        errs = horizontal_error(est, truth)
        results[name] = BackendResult(
            backend=name,
            summary=summarize(errs),
            max_jump=max_jump(est),
            transition_jump=transition_jump(est, transitions, window),
        )
    return results


def cmd_evaluate(cfg: RunConfig) -> Dict[str, BackendResult]:
    """Per-backend summary and CDF CSVs plus the combined comparison table."""
    out = _out_dir(cfg)
    truth = read_truth(out / TRUTH_FILE)
    outputs = {name: read_outputs(out / f"{name}.jsonl") for name in cfg.backends}
    transitions = _handover_times(out)
    results = evaluate_runs(outputs, truth, transitions, cfg.transition_window)

    for name, est in outputs.items():
        curve = cdf(horizontal_error(est, truth), cfg.cdf_points)
        pd.DataFrame(curve, columns=["error", "fraction"]).to_csv(out / f"cdf_{name}.csv", index=False)

    scenario = _scenario_name(cfg, out)
    ordered = [b for b in BACKEND_ORDER if b in results]
    summaries = {b: results[b].summary for b in ordered}
    extra = {
        b: {"max_jump": results[b].max_jump, "transition_jump": results[b].transition_jump, "scenario": scenario}
        for b in ordered
    }
    summary_frame(summaries, extra).to_csv(out / SUMMARY_FILE, index=False)

    table = compare_table({scenario: summaries})
    table.to_csv(out / COMPARISON_CSV)
    (out / COMPARISON_TXT).write_text(render_table(table) + "\n", encoding="utf-8")
    logger.info(f"Evaluation of {ordered} on '{scenario}' written to {out}")
    return results


def cmd_compare(summary_paths: Sequence, out_path: Optional[Path] = None, with_reference: bool = False) -> pd.DataFrame:
    """Combine several summary.csv files into one scenario x back-end table."""
    results: Dict[str, Dict[str, MetricSummary]] = {}
    for p in summary_paths:
        p = Path(p)
        if not p.exists():
            raise InvalidInputError(f"summary file not found: {p}")
        df = pd.read_csv(p)
        missing = {"backend", "scenario", "mean", "median", "rmse", "std", "max", "n"} - set(df.columns)
        if missing:
            raise InvalidInputError(f"{p}: missing columns {sorted(missing)}")
        for row in df.itertuples(index=False):
            results.setdefault(str(row.scenario), {})[str(row.backend)] = MetricSummary(
                mean=float(row.mean), median=float(row.median), rmse=float(row.rmse),
                std=float(row.std), max=float(row.max), n=int(row.n),
            )
    table = compare_table(results, with_reference=with_reference)
    if out_path is not None:
        table.to_csv(out_path)
    return table
