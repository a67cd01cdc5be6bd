from app import db
from app.schemas import BackendResult, MetricSummary


def _result(backend, mean):
    return BackendResult(
        backend=backend,
        summary=MetricSummary(mean=mean, median=mean, rmse=mean, std=0.1, max=2 * mean, n=50),
        max_jump=0.7,
        transition_jump=0.4,
    )


def test_save_and_get_run(sqlite_sessions):
    assert db.save_run_summaries("r1", "indoor", 7, [_result("eskf", 0.4), _result("pf", 0.5)]) == 2
    run = db.get_run("r1")
    assert run["scenario"] == "indoor"
    assert run["seed"] == 7
    assert [r["backend"] for r in run["results"]] == ["eskf", "pf"]
    assert run["results"][1]["summary"]["max"] == 1.0


def test_get_unknown_run(sqlite_sessions):
    assert db.get_run("missing") is None


def test_list_runs_groups_backends_and_filters(sqlite_sessions):
    db.save_run_summaries("r1", "indoor", 1, [_result("eskf", 0.4), _result("fgo", 0.8)])
    db.save_run_summaries("r2", "outdoor", 2, [_result("eskf", 1.7)])
    runs = db.list_runs()
    assert {r["run_id"]: r["backends"] for r in runs} == {"r1": ["eskf", "fgo"], "r2": ["eskf"]}
    assert [r["run_id"] for r in db.list_runs("outdoor")] == ["r2"]
