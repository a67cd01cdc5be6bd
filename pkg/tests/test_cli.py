import json
import os

import pytest

from app.cli import build_parser, main
from conftest import DATA_DIR, SCENARIO_DIR


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "scenario": os.path.join(SCENARIO_DIR, "seamless.json"),
        "map": {"path": os.path.join(DATA_DIR, "campus_buildings.geojson"), "allowed_building_ids": ["1001"]},
        "origin": {"lat": 60.45, "lon": 22.28},
        "out_dir": "out",
        "backends": ["eskf", "pdr"],
    }))
    return path


def test_simulate_run_evaluate(run_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(run_config)]) == 0
    assert (out / "steps.jsonl").exists()

    assert main(["run", "--config", str(run_config), "--backend", "eskf"]) == 0
    assert (out / "eskf.jsonl").exists()
    assert not (out / "pdr.jsonl").exists()

    assert main(["evaluate", "--config", str(run_config), "--backend", "eskf"]) == 0
    printed = capsys.readouterr().out
    assert "ESKF" in printed and "Outdoor-Indoor" in printed


def test_out_and_seed_overrides(run_config, tmp_path):
    other = tmp_path / "elsewhere"
    assert main(["simulate", "--config", str(run_config), "--out", str(other), "--seed", "3"]) == 0
    assert json.loads((other / "meta.json").read_text())["seed"] == 3


def test_compare(tmp_path, capsys):
    summary = tmp_path / "summary.csv"
    summary.write_text("backend,scenario,mean,median,rmse,std,max,n\neskf,indoor,0.4,0.4,0.5,0.2,1.3,300\n")
    assert main(["compare", str(summary), "--with-reference", "--out", str(tmp_path / "table.csv")]) == 0
    printed = capsys.readouterr().out
    assert "ESKF (reference)" in printed
    assert (tmp_path / "table.csv").exists()


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2

    def test_unknown_backend(self, run_config):
        assert main(["run", "--config", str(run_config), "--backend", "kalman"]) == 2

    def test_missing_logs(self, run_config):
        assert main(["run", "--config", str(run_config)]) == 2

    def test_missing_summary(self, tmp_path):
        assert main(["compare", str(tmp_path / "nope.csv")]) == 2

    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([])
        assert exc.value.code == 2
