import os

import numpy as np
import pytest

from app.config import load_scenario
from app.errors import InvalidInputError
from app.feasibility import is_feasible, locate
from app.simulation import (
    ScenarioSpec,
    generate_truth,
    label_truth_sources,
    simulate,
    step_times,
    synth_gnss,
    synth_steps,
    synth_uwb,
)
from app.uwb import trilaterate
from conftest import SCENARIO_DIR


@pytest.fixture
def seamless():
    return load_scenario(os.path.join(SCENARIO_DIR, "seamless.json"))


class TestTruth:
    def test_constant_speed_polyline(self):
        spec = ScenarioSpec(waypoints=[[0, 0], [30, 0], [30, 40]], speed=1.25)
        gt = generate_truth(spec)
        assert gt.duration == pytest.approx(70.0 / 1.25)
        assert gt.t[0] == 0.0 and gt.t[-1] == pytest.approx(gt.duration)
        assert gt.pos[0] == pytest.approx([0, 0, 0])
        assert gt.pos[-1] == pytest.approx([30, 40, 0])
        assert np.diff(gt.t) == pytest.approx(np.full(len(gt.t) - 1, 0.02))
        assert gt.heading_at([1.0])[0] == pytest.approx(np.pi / 2)
        assert gt.heading_at([40.0])[0] == pytest.approx(0.0)

    def test_needs_two_waypoints(self):
        with pytest.raises(InvalidInputError):
            generate_truth(ScenarioSpec(waypoints=[[0, 0]]))

    def test_coincident_waypoints(self):
        with pytest.raises(InvalidInputError):
            generate_truth(ScenarioSpec(waypoints=[[0, 0], [0, 0], [5, 0]]))

    def test_sources_label_mocap_inside_allowed_building(self, campus_map, seamless):
        gt = label_truth_sources(generate_truth(seamless), campus_map)
        assert gt.source[0] == "rtk"
        assert gt.source[-1] == "mocap"


class TestSteps:
    def test_noiseless_chords_sum_to_displacement(self):
        spec = ScenarioSpec(waypoints=[[0, 0], [10, 0], [10, 10]])
        gt = generate_truth(spec)
        steps = synth_steps(gt, spec)
        assert len(steps) == len(step_times(gt, spec))
        total = np.sum([s.delta_p for s in steps], axis=0)
        assert total == pytest.approx([10.0, 10.0])
        assert steps[0].delta_psi == 0.0

    def test_step_interval(self, seamless):
        gt = generate_truth(seamless)
        times = step_times(gt, seamless)
        assert np.diff(times) == pytest.approx(np.full(len(times) - 1, 0.5))

    def test_heading_bias_drifts_across_track(self):
        spec = ScenarioSpec(waypoints=[[0, 0], [0, 100]], pdr={"heading_bias": 0.02})
        steps = synth_steps(generate_truth(spec), spec)
        end = np.sum([s.delta_p for s in steps], axis=0)
        assert end[0] == pytest.approx(2.0, abs=0.1)
        assert end[1] == pytest.approx(100.0, abs=0.1)


class TestGnss:
    def test_no_fixes_while_inside_a_building(self, campus_map, seamless):
        gt = generate_truth(seamless)
        fixes = synth_gnss(gt, seamless, campus_map)
        assert fixes
        for f in fixes:
            assert locate(campus_map, gt.position_at([f.t])[0]) is None

    def test_multipath_pushes_some_fixes_into_buildings(self, campus_map, seamless):
        fixes = synth_gnss(generate_truth(seamless), seamless, campus_map)
        assert any(not is_feasible(campus_map, f.pos) for f in fixes)

    def test_outage_polygon(self, campus_map):
        spec = ScenarioSpec(
            waypoints=[[-50, 0], [-10, 0]],
            gnss={"outage_polygons": [[(-40, -2), (-20, -2), (-20, 2), (-40, 2)]]},
        )
        gt = generate_truth(spec)
        for f in synth_gnss(gt, spec, campus_map):
            e = gt.position_at([f.t])[0][0]
            assert not -40 <= e <= -20


class TestUwb:
    def test_ranges_only_inside_coverage(self, seamless):
        gt = generate_truth(seamless)
        sets = synth_uwb(gt, seamless)
        assert sets
        for rs in sets:
            p = gt.position_at([rs.t])[0]
            assert p[0] >= 0.0
            assert [m.anchor_id for m in rs.ranges] == ["A1", "A2", "A3", "A4"]

    def test_needs_three_anchors(self, seamless):
        spec = seamless.model_copy(update={"uwb": seamless.uwb.model_copy(update={"anchors": seamless.uwb.anchors[:2]})})
        with pytest.raises(InvalidInputError):
            synth_uwb(generate_truth(spec), spec)

    def test_no_coverage_no_ranges(self):
        spec = ScenarioSpec(waypoints=[[0, 0], [10, 0]])
        assert synth_uwb(generate_truth(spec), spec) == []

    def test_nlos_ranges_keep_trilateration_sub_half_metre(self, lab_anchors):
        spec = ScenarioSpec(
            waypoints=[[2, -5], [28, -5], [28, 5], [2, 5]],
            uwb={
                "anchors": [a.model_dump() for a in lab_anchors],
                "coverage": [(0, -10), (30, -10), (30, 10), (0, 10)],
                "nlos_prob": 0.2,
                "nlos_bias": 0.5,
            },
        )
        gt = generate_truth(spec)
        sets = synth_uwb(gt, spec)
        assert len(sets) > 50
        fixes = [trilaterate(lab_anchors, rs) for rs in sets]
        truth = gt.position_at([f.t for f in fixes])
        err = np.array([[f.pos.e, f.pos.n] for f in fixes]) - truth[:, :2]
        rmse = float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))
        assert 0.05 < rmse < 0.5


class TestReproducibility:
    def test_same_seed_same_logs(self, campus_map, seamless):
        a, b = simulate(seamless, campus_map), simulate(seamless, campus_map)
        assert a.steps == b.steps and a.gnss == b.gnss and a.uwb == b.uwb

    def test_seed_changes_noise(self, campus_map, seamless):
        other = seamless.model_copy(update={"seed": seamless.seed + 1})
        assert simulate(seamless, campus_map).gnss != simulate(other, campus_map).gnss

    def test_streams_are_independent(self, campus_map, seamless):
        louder = seamless.model_copy(update={"gnss": seamless.gnss.model_copy(update={"sigma": 3.0})})
        a, b = simulate(seamless, campus_map), simulate(louder, campus_map)
        assert a.steps == b.steps
        assert a.uwb == b.uwb
