"""
Observation and output log files.

steps.jsonl / gnss.jsonl / uwb.jsonl / <backend>.jsonl are JSON lines,
truth.csv and imu.csv are CSV. Readers refuse logs whose timestamps go
backwards and report the offending line.
"""

import json
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import InvalidInputError, TimestampRegressionError
from .geo import enu_to_geodetic
from .pdr import ImuSample
from .schemas import AbsoluteFix, EnuOrigin, EnuPoint, EstimatorOutput, FixSource, RangeMeasurement, RangeSet, StepIncrement

STEPS_FILE = "steps.jsonl"
GNSS_FILE = "gnss.jsonl"
UWB_FILE = "uwb.jsonl"
TRUTH_FILE = "truth.csv"
IMU_FILE = "imu.csv"
ANCHORS_FILE = "anchors.csv"


@dataclass
class TruthLog:
    t: np.ndarray
    pos: np.ndarray
    heading: np.ndarray
    source: List[str] = field(default_factory=list)


def _dump(record: Dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records: Iterable[Dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(_dump(rec) + "\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[Tuple[int, Dict]]:
    """Yield (line number, record); blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"log file not found: {path}")
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"{path}:{lineno}: malformed JSON ({e.msg})")


def _check_monotone(path, items: Iterable[Tuple[int, float]]) -> None:
    previous = None
    for lineno, t in items:
        if previous is not None and t < previous:
            raise TimestampRegressionError(str(path), lineno, t, previous)
        previous = t


def _parse(path, lineno: int, build: Callable):
    try:
        return build()
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise InvalidInputError(f"{path}:{lineno}: invalid record ({e})")


def _time(path, lineno: int, r: Dict) -> float:
    return _parse(path, lineno, lambda: float(r["t"]))


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

def write_steps(path, steps: Sequence[StepIncrement]) -> int:
    return write_jsonl(path, (
        {
            "t": s.t,
            "dx": s.delta_p[0],
            "dy": s.delta_p[1],
            "dz": s.delta_z,
            "dpsi": s.delta_psi,
            "step_length": s.step_length,
            "psi": s.psi,
        }
        for s in steps
    ))


def read_steps(path) -> List[StepIncrement]:
    rows = list(read_jsonl(path))
    _check_monotone(path, ((ln, _time(path, ln, r)) for ln, r in rows))
    return [
        _parse(path, ln, lambda r=r: StepIncrement(
            t=r["t"],
            delta_p=(r["dx"], r["dy"]),
            delta_z=r.get("dz", 0.0),
            delta_psi=r["dpsi"],
            step_length=r["step_length"],
            psi=r["psi"],
        ))
        for ln, r in rows
    ]


# ---------------------------------------------------------------------------
# GNSS fixes
# ---------------------------------------------------------------------------

def write_fixes(path, fixes: Sequence[AbsoluteFix]) -> int:
    return write_jsonl(path, (
        {
            "t": f.t,
            "e": f.pos.e,
            "n": f.pos.n,
            "u": f.pos.u,
            "sigma": list(f.sigma) if f.sigma is not None else None,
            "source": f.source.value,
        }
        for f in fixes
    ))


def read_fixes(path, source: FixSource = FixSource.GNSS) -> List[AbsoluteFix]:
    rows = list(read_jsonl(path))
    _check_monotone(path, ((ln, _time(path, ln, r)) for ln, r in rows))
    return [
        _parse(path, ln, lambda r=r: AbsoluteFix(
            t=r["t"],
            pos=EnuPoint(e=r["e"], n=r["n"], u=r.get("u", 0.0)),
            sigma=tuple(r["sigma"]) if r.get("sigma") is not None else None,
            source=FixSource(r.get("source", source.value)),
        ))
        for ln, r in rows
    ]


# ---------------------------------------------------------------------------
# UWB ranges: one line per range, grouped into sets by timestamp
# ---------------------------------------------------------------------------

def write_ranges(path, range_sets: Sequence[RangeSet]) -> int:
    return write_jsonl(path, (
        {"t": rs.t, "anchor_id": m.anchor_id, "range": m.range, "sigma": m.sigma}
        for rs in range_sets
        for m in rs.ranges
    ))


def read_ranges(path) -> List[RangeSet]:
    rows = list(read_jsonl(path))
    _check_monotone(path, ((ln, _time(path, ln, r)) for ln, r in rows))
    sets = []
    for t, group in groupby(rows, key=lambda item: float(item[1]["t"])):
        ranges = [
            _parse(path, ln, lambda r=r: RangeMeasurement(
                anchor_id=str(r["anchor_id"]), range=r["range"], sigma=r.get("sigma", 0.1),
            ))
            for ln, r in group
        ]
        sets.append(RangeSet(t=t, ranges=ranges))
    return sets


# ---------------------------------------------------------------------------
# Truth and IMU (CSV)
# ---------------------------------------------------------------------------

def write_truth(path, t, pos, heading, source: Optional[Sequence[str]] = None) -> None:
    pos = np.asarray(pos, dtype=float)
    df = pd.DataFrame({
        "t": np.asarray(t, dtype=float),
        "e": pos[:, 0],
        "n": pos[:, 1],
        "u": pos[:, 2],
        "heading": np.asarray(heading, dtype=float),
    })
    if source:
        df["source"] = list(source)
    df.to_csv(path, index=False, float_format="%.9f")


def read_truth(path) -> TruthLog:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"truth file not found: {path}")
    df = pd.read_csv(path)
    missing = {"t", "e", "n"} - set(df.columns)
    if missing:
        raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
    t = df["t"].to_numpy(dtype=float)
    regress = np.flatnonzero(np.diff(t) < 0)
    if regress.size:
        i = int(regress[0]) + 1
        # header is line 1
        raise TimestampRegressionError(str(path), i + 2, float(t[i]), float(t[i - 1]))
    u = df["u"].to_numpy(dtype=float) if "u" in df.columns else np.zeros(len(df))
    heading = df["heading"].to_numpy(dtype=float) if "heading" in df.columns else np.zeros(len(df))
    source = df["source"].astype(str).tolist() if "source" in df.columns else []
    return TruthLog(
        t=t,
        pos=np.column_stack([df["e"].to_numpy(dtype=float), df["n"].to_numpy(dtype=float), u]),
        heading=heading,
        source=source,
    )


def write_imu(path, samples: Sequence[ImuSample]) -> None:
    pd.DataFrame(
        [(s.t, s.acc[0], s.acc[1], s.acc[2], s.heading) for s in samples],
        columns=["t", "ax", "ay", "az", "heading_rad"],
    ).to_csv(path, index=False, float_format="%.9f")


def read_imu(path) -> List[ImuSample]:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"IMU file not found: {path}")
    df = pd.read_csv(path)
    missing = {"t", "ax", "ay", "az", "heading_rad"} - set(df.columns)
    if missing:
        raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
    t = df["t"].to_numpy(dtype=float)
    regress = np.flatnonzero(np.diff(t) < 0)
    if regress.size:
        i = int(regress[0]) + 1
        raise TimestampRegressionError(str(path), i + 2, float(t[i]), float(t[i - 1]))
    return [
        ImuSample(t=float(row.t), acc=(float(row.ax), float(row.ay), float(row.az)), heading=float(row.heading_rad))
        for row in df.itertuples(index=False)
    ]


# ---------------------------------------------------------------------------
# Estimator outputs
# ---------------------------------------------------------------------------

def output_record(o: EstimatorOutput, origin: Optional[EnuOrigin] = None) -> Dict:
    cov = o.cov_array()
    rec = {
        "t": o.t,
        "e": o.pos.e,
        "n": o.pos.n,
        "u": o.pos.u,
        "yaw": o.yaw,
        "cov": [float(cov[i, j]) for i in range(3) for j in range(i, 3)],
    }
    if origin is not None:
        geo = enu_to_geodetic(o.pos, origin)
        rec["lat"] = geo.lat
        rec["lon"] = geo.lon
    return rec


def write_outputs(path, outputs: Sequence[EstimatorOutput], origin: Optional[EnuOrigin] = None) -> int:
    return write_jsonl(path, (output_record(o, origin) for o in outputs))


def read_outputs(path) -> List[EstimatorOutput]:
    rows = list(read_jsonl(path))
    _check_monotone(path, ((ln, _time(path, ln, r)) for ln, r in rows))
    out = []
    for ln, r in rows:
        def build(r=r):
            xx, xy, xz, yy, yz, zz = r["cov"]
            cov = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
            return EstimatorOutput.build(r["t"], [r["e"], r["n"], r.get("u", 0.0)], r["yaw"], cov)
        out.append(_parse(path, ln, build))
    return out
