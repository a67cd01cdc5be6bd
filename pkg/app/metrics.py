"""Horizontal error series, summary statistics, CDFs and comparison tables."""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import InvalidInputError, NoOverlapError
from .schemas import ErrorSeries, EstimatorOutput, FixSource, MetricSummary

SCENARIO_COLUMNS = {"indoor": "Indoor", "outdoor": "Outdoor", "seamless": "Outdoor-Indoor"}
BACKEND_ROWS = {"fgo": "FGO", "pf": "Particle filter", "eskf": "ESKF", "pdr": "PDR only"}
MISSING = "—"

# Hardware field-trial results (mean, median, rmse, std, max) in metres. Desk
# simulations are compared against them as an order-of-magnitude band only.
REFERENCE_RESULTS: Dict[str, Dict[str, Tuple[float, float, float, float, float]]] = {
    "indoor": {
        "fgo": (0.836, 0.715, 0.992, 0.535, 3.303),
        "pf": (0.491, 0.447, 0.552, 0.253, 1.374),
        "eskf": (0.441, 0.415, 0.499, 0.235, 1.309),
    },
    "outdoor": {
        "fgo": (1.995, 1.946, 2.389, 1.315, 7.619),
        "pf": (2.284, 1.681, 2.816, 1.648, 7.357),
        "eskf": (1.726, 1.491, 2.186, 1.341, 8.181),
    },
    "seamless": {
        "fgo": (2.070, 1.962, 2.302, 1.008, 5.351),
        "pf": (1.292, 1.017, 1.653, 1.031, 5.108),
        "eskf": (1.085, 0.997, 1.248, 0.617, 2.631),
    },
}


def horizontal_error(est: Sequence[EstimatorOutput], gt) -> ErrorSeries:
    """
    2D (east, north) distance between each estimate and the truth linearly
    interpolated at the estimate time. `gt` is anything with sample times `t`
    and positions `pos` (a simulated GroundTruth or a truth log). Estimates
    outside the truth time range are dropped.
    """
    truth_t = np.asarray(gt.t, dtype=float)
    truth_pos = np.asarray(gt.pos, dtype=float)
    if not len(est) or not len(truth_t):
        raise NoOverlapError("no estimates or no truth samples to compare")
    t = np.array([o.t for o in est])
    keep = (t >= truth_t[0]) & (t <= truth_t[-1])
    if not np.any(keep):
        raise NoOverlapError(
            f"estimates [{t.min():.3f}, {t.max():.3f}] s do not overlap truth "
            f"[{truth_t[0]:.3f}, {truth_t[-1]:.3f}] s"
        )
    t = t[keep]
    xy = np.array([[o.pos.e, o.pos.n] for o, k in zip(est, keep) if k])
    ref = np.column_stack([np.interp(t, truth_t, truth_pos[:, i]) for i in range(2)])
    err = np.hypot(xy[:, 0] - ref[:, 0], xy[:, 1] - ref[:, 1])
    return ErrorSeries(t=t.tolist(), error=err.tolist())


def summarize(errs: ErrorSeries) -> MetricSummary:
    e = np.asarray(errs.error, dtype=float)
    if e.size == 0:
        raise InvalidInputError("cannot summarize an empty error series")
    return MetricSummary(
        mean=float(np.mean(e)),
        median=float(np.quantile(e, 0.5, method="lower")),
        rmse=float(np.sqrt(np.mean(e ** 2))),
        std=float(np.std(e)),
        max=float(np.max(e)),
        n=int(e.size),
    )


def cdf(errs: ErrorSeries, n_points: int = 100) -> List[Tuple[float, float]]:
    """Empirical CDF sampled at `n_points` evenly spaced quantile levels."""
    e = np.sort(np.asarray(errs.error, dtype=float))
    if e.size == 0:
        raise InvalidInputError("cannot build a CDF of an empty error series")
    if n_points < 1:
        raise InvalidInputError("n_points must be positive")
    levels = np.arange(1, n_points + 1) / n_points
    values = np.quantile(e, levels, method="inverted_cdf")
    fractions = np.searchsorted(e, values, side="right") / e.size
    return [(float(v), float(f)) for v, f in zip(values, fractions)]


def max_jump(est: Sequence[EstimatorOutput]) -> float:
    """Largest horizontal displacement between consecutive outputs."""
    if len(est) < 2:
        return 0.0
    xy = np.array([[o.pos.e, o.pos.n] for o in est])
    return float(np.max(np.linalg.norm(np.diff(xy, axis=0), axis=1)))


def handover_times(fixes: Sequence[Tuple[float, FixSource]]) -> List[float]:
    """Times of the first UWB fix following a GNSS fix."""
    out = []
    previous = None
    for t, source in sorted(fixes, key=lambda f: f[0]):
        if source == FixSource.UWB and previous == FixSource.GNSS:
            out.append(float(t))
        previous = source
    return out


def transition_jump(est: Sequence[EstimatorOutput], transitions: Sequence[float], window: float = 2.0) -> Optional[float]:
    """Largest consecutive-output jump that ends within `window` s of a handover."""
    if not transitions or len(est) < 2:
        return None
    t = np.array([o.t for o in est])
    xy = np.array([[o.pos.e, o.pos.n] for o in est])
    jumps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    near = np.zeros(len(jumps), dtype=bool)
    for tr in transitions:
        near |= np.abs(t[1:] - tr) <= window
    return float(np.max(jumps[near])) if np.any(near) else 0.0


def _cell(values) -> str:
    return "(" + ", ".join(f"{v:.3f}" for v in values) + ")"


def _summary_tuple(s: MetricSummary) -> Tuple[float, ...]:
    return (s.mean, s.median, s.rmse, s.std, s.max)


def compare_table(
    results: Dict[str, Dict[str, MetricSummary]],
    with_reference: bool = False,
) -> pd.DataFrame:
    """
    Rows are back-ends (FGO, Particle filter, ESKF, then any others), columns
    are scenarios (Indoor, Outdoor, Outdoor-Indoor, then any others); each cell
    is the (mean, median, rmse, std, max) tuple to 3 decimals.
    """
    scenarios = [s for s in SCENARIO_COLUMNS if s in results]
    scenarios += sorted(s for s in results if s not in SCENARIO_COLUMNS)
    backends = {b for per in results.values() for b in per}
    rows = [b for b in BACKEND_ROWS if b in backends] + sorted(backends - set(BACKEND_ROWS))

    data = {}
    for b in rows:
        data[BACKEND_ROWS.get(b, b)] = [
            _cell(_summary_tuple(results[s][b])) if b in results[s] else MISSING
            for s in scenarios
        ]
    if with_reference:
        for b in ("fgo", "pf", "eskf"):
            label = f"{BACKEND_ROWS[b]} (reference)"
            data[label] = [
                _cell(REFERENCE_RESULTS[s][b]) if s in REFERENCE_RESULTS else MISSING
                for s in scenarios
            ]
    columns = [SCENARIO_COLUMNS.get(s, s) for s in scenarios]
    return pd.DataFrame.from_dict(data, orient="index", columns=columns)


def render_table(table: pd.DataFrame) -> str:
    """Aligned plain-text rendering of a comparison table."""
    return table.to_string()


def summary_frame(summaries: Dict[str, MetricSummary], extra: Optional[Dict[str, Dict]] = None) -> pd.DataFrame:
    """One row per back-end with the summary statistics (and optional extra columns)."""
    records = []
    for backend, s in summaries.items():
        row = {"backend": backend, **s.model_dump()}
        row.update((extra or {}).get(backend, {}))
        records.append(row)
    return pd.DataFrame.from_records(records)
