"""End-to-end properties of the simulated pipeline across all back-ends."""

import os

import numpy as np
import pytest

from app.backends.eskf import EskfConfig, eskf_init, eskf_predict, eskf_update, heading_quaternion
from app.backends.fgo import FgoConfig, _cost, fgo_add_fix, fgo_add_step, fgo_init, fgo_optimize
from app.backends.pf import PfConfig, pf_init, pf_resample_if_needed, pf_reweight, systematic_resample
from app.config import load_scenario
from app.feasibility import map_from_enu
from app.logs import output_record
from app.metrics import handover_times, horizontal_error, summarize, transition_jump
from app.pipeline import fixes_from_ranges, merge_events, run_backend
from app.schemas import AbsoluteFix, Anchor, EnuPoint, ErrorSeries, FixSource, RangeMeasurement, RangeSet
from app.simulation import MultipathSpec, PdrNoiseSpec, ScenarioSpec, simulate
from app.uwb import trilaterate
from conftest import SCENARIO_DIR, make_fix, make_step

FUSED = ("eskf", "fgo", "pf")
ALL = FUSED + ("pdr",)


def _scenario(name, **updates):
    spec = load_scenario(os.path.join(SCENARIO_DIR, f"{name}.json"))
    return spec.model_copy(update=updates) if updates else spec


def _events(spec, fmap, first_fix=None):
    logs = simulate(spec, fmap)
    fixes = list(logs.gnss) + fixes_from_ranges(logs.uwb, spec.uwb.anchors)
    if first_fix is not None:
        fixes.insert(0, first_fix)
    return logs, merge_events(logs.steps, fixes)


def _rmse(outputs, truth):
    return summarize(horizontal_error(outputs, truth)).rmse


def test_noiseless_seamless_walk_is_reproduced_exactly(campus_map):
    spec = _scenario("seamless")
    spec = spec.model_copy(update={
        "gnss": spec.gnss.model_copy(update={"sigma": 0.0, "multipath": MultipathSpec()}),
        "uwb": spec.uwb.model_copy(update={"sigma": 0.0, "nlos_prob": 0.0}),
        "pdr": PdrNoiseSpec(),
    })
    logs, events = _events(spec, campus_map)
    assert len(logs.steps) == 192

    params = {"pf": {"sigma_prop_xy": 0.0, "sigma_prop_psi": 0.0}}
    for name in ALL:
        run = run_backend(name, events, campus_map, params=params.get(name))
        assert _rmse(run.outputs, logs.truth) < 1e-3, name


def test_trilateration_recovers_random_geometries():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        w, h = rng.uniform(10, 40, size=2)
        corners = np.array([[0, 0], [w, 0], [w, h], [0, h]]) + rng.uniform(-2, 2, size=(4, 2))
        anchors = [Anchor(id=f"A{i}", pos=EnuPoint(e=c[0], n=c[1])) for i, c in enumerate(corners)]
        truth = np.array([rng.uniform(0.1 * w, 0.9 * w), rng.uniform(0.1 * h, 0.9 * h), 0.0])
        rs = RangeSet(t=0.0, ranges=[
            RangeMeasurement(anchor_id=a.id, range=float(np.linalg.norm(a.pos.as_array() - truth)))
            for a in anchors
        ])
        fix = trilaterate(anchors, rs)
        assert np.hypot(fix.pos.e - truth[0], fix.pos.n - truth[1]) < 1e-6


def test_eskf_covariance_stays_healthy():
    rng = np.random.default_rng(9)
    cfg = EskfConfig()
    s = eskf_init(make_fix(0.0, 0.0, 0.0, sigma=1.0), cfg)
    t = 0.0
    for _ in range(2000):
        t += 0.5
        d = rng.normal(0.0, 0.7, size=2)
        psi = float(rng.uniform(-np.pi, np.pi))
        trace = np.trace(s.P[:3, :3])
        s = eskf_predict(s, make_step(t, d[0], d[1], psi=psi), heading_quaternion(psi), cfg)
        assert np.trace(s.P[:3, :3]) >= trace - 1e-12
        if rng.random() < 0.5:
            trace = np.trace(s.P[:3, :3])
            p = s.p_est + rng.normal(0.0, 1.0, size=3)
            fix = AbsoluteFix(t=t, pos=EnuPoint.from_array(p), sigma=tuple(rng.uniform(0.1, 2.0, size=3)), source=FixSource.GNSS)
            s, _ = eskf_update(s, fix, None, cfg)
            assert np.trace(s.P[:3, :3]) <= trace + 1e-12
        assert np.max(np.abs(s.P - s.P.T)) < 1e-9
        assert np.min(np.linalg.eigvalsh(s.P)) > -1e-9


def test_fgo_recovers_exact_window_from_perturbed_guesses():
    rng = np.random.default_rng(4)
    cfg = FgoConfig(window=30)
    truth = np.cumsum(rng.normal(0.0, 0.5, size=(30, 2)), axis=0)
    truth[0] = 0.0
    w = fgo_init(make_fix(0.0, 0.0, 0.0, sigma=0.5), cfg)
    for k in range(1, 30):
        d = truth[k] - truth[k - 1]
        fgo_add_step(w, make_step(0.5 * k, d[0], d[1]))
        if k % 5 == 0:
            fgo_add_fix(w, make_fix(0.5 * k, truth[k][0], truth[k][1], sigma=1.0))
    for node in w.nodes[1:]:
        node.T[:2] += rng.normal(0.0, 0.5, size=2)

    index = {n.step_index: i for i, n in enumerate(w.nodes)}
    initial = _cost(w.factors, np.array([n.T for n in w.nodes]), index)
    fgo_optimize(w)
    assert w.last_cost <= initial
    assert w.last_cost < 1e-12
    for node, p in zip(w.nodes, truth):
        assert np.hypot(*(node.T[:2] - p)) < 1e-6


class TestParticleFilterContracts:
    def test_weights_ess_and_multiplicity(self):
        cfg = PfConfig(N=300)
        ps = pf_init(make_fix(0.0, 0.0, 0.0, sigma=2.0), cfg, seed=1)
        rng = np.random.default_rng(5)
        for k in range(20):
            ps = pf_reweight(ps, make_fix(float(k), *rng.normal(0.0, 1.0, size=2), sigma=1.0), None, cfg)
            assert ps.w.sum() == pytest.approx(1.0, abs=1e-9)
            ps, resampled = pf_resample_if_needed(ps, cfg)
            if resampled:
                assert ps.ess() == pytest.approx(cfg.N)

    def test_systematic_multiplicity_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            w = rng.dirichlet(np.ones(40) * 0.3)
            counts = np.bincount(systematic_resample(w, rng), minlength=40)
            assert np.all(np.abs(counts - 40 * w) <= 1.0 + 1e-9)

    def test_seeded_runs_are_byte_identical(self, campus_map):
        _, events = _events(_scenario("indoor"), campus_map)
        a = run_backend("pf", events, campus_map, seed=3)
        b = run_backend("pf", events, campus_map, seed=3)
        assert [output_record(o) for o in a.outputs] == [output_record(o) for o in b.outputs]


def test_map_constraints_bound_multipath_errors(campus_map):
    worst = {(name, on): 0.0 for name in FUSED for on in (True, False)}
    for seed in range(1, 11):
        logs, events = _events(_scenario("outdoor", seed=seed), campus_map)
        for name in FUSED:
            for on in (True, False):
                run = run_backend(name, events, campus_map, map_constraints=on, seed=seed)
                err = summarize(horizontal_error(run.outputs, logs.truth)).max
                worst[name, on] = max(worst[name, on], err)
    for name in FUSED:
        assert worst[name, True] <= 0.8 * worst[name, False], (name, worst[name, True], worst[name, False])


def test_fusion_bounds_pdr_drift():
    spec = ScenarioSpec(
        name="long-walk",
        waypoints=[[0, 0], [400, 0]],
        gnss={"sigma": 1.5},
        pdr={"k_error": 0.02, "heading_bias": 0.02},
        seed=5,
    )
    empty = map_from_enu({})
    start = AbsoluteFix(t=0.0, pos=EnuPoint(e=0.0, n=0.0), sigma=(0.05, 0.05, 0.05), source=FixSource.GNSS)
    logs, events = _events(spec, empty, first_fix=start)

    pdr = run_backend("pdr", events, empty)
    errs = horizontal_error(pdr.outputs, logs.truth)
    half = len(errs.error) // 2
    assert errs.error[-1] > errs.error[half]
    pdr_rmse = summarize(errs).rmse
    for name in FUSED:
        assert _rmse(run_backend(name, events, empty, seed=5).outputs, logs.truth) < 0.5 * pdr_rmse, name


def test_full_history_factor_graph_is_consistent_with_eskf():
    spec = ScenarioSpec(
        name="straight-200",
        waypoints=[[0, 0], [125, 0]],
        gnss={"sigma": 1.5},
        pdr={"k_error": 0.02, "heading_bias": 0.02, "heading_noise": 0.02},
        seed=11,
    )
    empty = map_from_enu({})
    start = AbsoluteFix(t=0.0, pos=EnuPoint(e=0.0, n=0.0), sigma=(0.05, 0.05, 0.05), source=FixSource.GNSS)
    logs, events = _events(spec, empty, first_fix=start)
    assert len(logs.steps) == 200

    eskf = _rmse(run_backend("eskf", events, empty).outputs, logs.truth)
    fgo = _rmse(run_backend("fgo", events, empty, params={"window": len(logs.steps) + 1}).outputs, logs.truth)
    assert fgo <= 1.2 * eskf, (fgo, eskf)


@pytest.mark.parametrize("scenario,low,high", [("indoor", 0.05, 1.0), ("outdoor", 0.3, 3.5)])
def test_error_band_with_realistic_noise(campus_map, scenario, low, high):
    logs, events = _events(_scenario(scenario), campus_map)
    for name in ("eskf", "pf"):
        rmse = _rmse(run_backend(name, events, campus_map, seed=7).outputs, logs.truth)
        assert low < rmse < high, (name, rmse)


def test_doorway_transition_has_no_large_jump(campus_map):
    spec = _scenario("seamless")
    spec = spec.model_copy(update={"gnss": spec.gnss.model_copy(update={"multipath": MultipathSpec()})})
    logs, events = _events(spec, campus_map)
    transitions = handover_times(
        [(f.t, FixSource.GNSS) for f in logs.gnss] + [(rs.t, FixSource.UWB) for rs in logs.uwb]
    )
    assert len(transitions) == 1
    median_step = float(np.median([s.step_length for s in logs.steps]))
    for name in FUSED:
        run = run_backend(name, events, campus_map, seed=7)
        assert transition_jump(run.outputs, transitions, window=2.0) < 5 * median_step, name


def test_metric_identities():
    rng = np.random.default_rng(1)
    e = rng.gamma(2.0, 0.5, size=500)
    s = summarize(ErrorSeries(t=list(range(500)), error=e.tolist()))
    assert s.rmse ** 2 == pytest.approx(s.mean ** 2 + s.std ** 2, abs=1e-9)
    assert s.median <= s.max

    s = summarize(ErrorSeries(t=[0, 1, 2], error=[1.0, 2.0, 3.0]))
    assert (s.mean, s.median, s.max, s.n) == (2.0, 2.0, 3.0, 3)
    assert s.rmse == pytest.approx(np.sqrt(14.0 / 3.0))
    assert s.std == pytest.approx(np.sqrt(2.0 / 3.0))
