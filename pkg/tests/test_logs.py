import numpy as np
import pytest

from app.errors import InvalidInputError, TimestampRegressionError
from app.logs import (
    output_record,
    read_fixes,
    read_outputs,
    read_ranges,
    read_steps,
    read_truth,
    write_fixes,
    write_outputs,
    write_ranges,
    write_steps,
    write_truth,
)
from app.schemas import EstimatorOutput, FixSource, RangeMeasurement, RangeSet
from conftest import ORIGIN, make_fix, make_step


def test_steps_survive_a_write_read_cycle(tmp_path):
    steps = [make_step(0.5, 0.1, 0.6, psi=0.2, dpsi=0.0), make_step(1.0, 0.2, 0.5, psi=0.3, dpsi=0.1)]
    path = tmp_path / "steps.jsonl"
    write_steps(path, steps)
    assert read_steps(path) == steps


def test_timestamp_regression_reports_line(tmp_path):
    path = tmp_path / "gnss.jsonl"
    path.write_text(
        '{"t": 1.0, "e": 0, "n": 0, "sigma": [1, 1, 1]}\n'
        '\n'
        '{"t": 0.5, "e": 0, "n": 0, "sigma": [1, 1, 1]}\n'
    )
    with pytest.raises(TimestampRegressionError) as exc:
        read_fixes(path)
    assert exc.value.line == 3


def test_equal_timestamps_are_allowed(tmp_path):
    path = tmp_path / "gnss.jsonl"
    write_fixes(path, [make_fix(1.0, 0, 0), make_fix(1.0, 1, 1)])
    assert len(read_fixes(path)) == 2


def test_missing_sigma_and_source_default(tmp_path):
    path = tmp_path / "gnss.jsonl"
    path.write_text('{"t": 0.0, "e": 1.5, "n": -2.0}\n')
    fix = read_fixes(path)[0]
    assert fix.sigma is None
    assert fix.source == FixSource.GNSS
    assert fix.pos.u == 0.0


def test_malformed_json(tmp_path):
    path = tmp_path / "steps.jsonl"
    path.write_text('{"t": 0.0,\n')
    with pytest.raises(InvalidInputError):
        read_steps(path)


def test_invalid_record(tmp_path):
    path = tmp_path / "steps.jsonl"
    path.write_text('{"t": 0.0, "dx": 1.0}\n')
    with pytest.raises(InvalidInputError):
        read_steps(path)


def test_missing_file(tmp_path):
    with pytest.raises(InvalidInputError):
        read_steps(tmp_path / "nope.jsonl")


def test_ranges_are_grouped_by_timestamp(tmp_path):
    sets = [
        RangeSet(t=0.0, ranges=[RangeMeasurement(anchor_id="A1", range=3.0), RangeMeasurement(anchor_id="A2", range=4.0)]),
        RangeSet(t=0.5, ranges=[RangeMeasurement(anchor_id="A1", range=3.1)]),
    ]
    path = tmp_path / "uwb.jsonl"
    assert write_ranges(path, sets) == 3
    assert read_ranges(path) == sets


def test_truth_csv(tmp_path):
    path = tmp_path / "truth.csv"
    pos = np.array([[0.0, 0.0, 0.0], [1.25, 0.5, 0.0]])
    write_truth(path, [0.0, 1.0], pos, [0.0, 0.1], ["rtk", "mocap"])
    truth = read_truth(path)
    assert truth.pos == pytest.approx(pos)
    assert truth.source == ["rtk", "mocap"]


class TestOutputs:
    def test_covariance_upper_triangle(self):
        cov = np.array([[1.0, 0.1, 0.2], [0.1, 2.0, 0.3], [0.2, 0.3, 3.0]])
        rec = output_record(EstimatorOutput.build(1.0, [1, 2, 3], 0.5, cov))
        assert rec["cov"] == pytest.approx([1.0, 0.1, 0.2, 2.0, 0.3, 3.0])
        assert "lat" not in rec

    def test_geodetic_export(self):
        rec = output_record(EstimatorOutput.build(1.0, [0, 0, 0], 0.0, np.eye(3)), ORIGIN)
        assert rec["lat"] == pytest.approx(60.45)
        assert rec["lon"] == pytest.approx(22.28)

    def test_read_back(self, tmp_path):
        outs = [EstimatorOutput.build(t, [t, 2 * t, 0], 0.1, np.eye(3) * (t + 1)) for t in (0.0, 0.5)]
        path = tmp_path / "eskf.jsonl"
        write_outputs(path, outs, ORIGIN)
        assert read_outputs(path) == outs
