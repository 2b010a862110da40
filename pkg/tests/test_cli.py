"""
Command-line subcommands, driven through main(argv)
"""

import json

import pytest

from app.cli import main
from app.importers.connectivity_importer import read_adjacency_csv, read_connectivity_csv
from app.importers.grid_importer import write_grid_dir
from app.importers.well_importer import write_wells_csv
from app.schemas import BenchmarkConfig, CaseConfig, ModelConfig, TrainConfig

SMALL_SYNTH = {
    "grid": {"nx": 30, "ny": 30, "channel_count": 2, "channel_width": 200.0, "amplitude": 100.0,
             "wavelength": 800.0},
    "schedule": {"horizon": 50.0, "step": 10.0, "injection": [[[0.0, 300.0]], [[0.0, 200.0]]]},
    "case_count": 2,
}
TINY_TRAIN = {
    "seeds": [0],
    "model": {"gcn_width": 4, "head_width": 8},
    "train": {"learning_rate": 5e-3, "max_epochs": 3, "patience": 3},
}


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture(autouse=True)
def _no_run_registry(monkeypatch):
    monkeypatch.setenv("WELLGRAPH_RECORD_RUNS", "0")


class TestSynth:
    def test_cases_and_bench_config_written(self, tmp_path):
        out = tmp_path / "cases"
        assert main(["synth", "--config", _write(tmp_path / "synth.json", SMALL_SYNTH), "--out", str(out)]) == 0
        assert (out / "case1" / "panel.csv").exists()
        bench = BenchmarkConfig.model_validate_json((out / "bench.json").read_text())
        assert [c.name for c in bench.cases] == ["case1", "case2"]
        assert bench.cases[0].grid_dir == str(out / "case1" / "grid")

    def test_crm_world_added_as_extra_case(self, tmp_path):
        config = dict(SMALL_SYNTH, case_count=1, crm_world={
            "tau": [30.0, 60.0], "J": [1.0, 2.0], "F": [[0.5, 0.3], [0.2, 0.6]], "q0": [100.0, 100.0],
        })
        out = tmp_path / "cases"
        assert main(["synth", "--config", _write(tmp_path / "synth.json", config), "--out", str(out)]) == 0
        bench = json.loads((out / "bench.json").read_text())
        assert [c["name"] for c in bench["cases"]] == ["case1", "crm_world"]
        assert read_adjacency_csv(out / "crm_world" / "adjacency.csv").values.shape == (2, 2)
        assert json.loads((out / "crm_world" / "truth_params.json").read_text())["tau"] == [30.0, 60.0]

    def test_non_empty_output_needs_force(self, tmp_path):
        out = tmp_path / "cases"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        config = _write(tmp_path / "synth.json", dict(SMALL_SYNTH, case_count=1))
        assert main(["synth", "--config", config, "--out", str(out)]) == 1
        assert main(["synth", "--config", config, "--out", str(out), "--force"]) == 0


class TestGraph:
    def test_adjacency_written(self, tmp_path, uniform_grid, five_spot_wells, capsys):
        grid_dir = write_grid_dir(uniform_grid, tmp_path / "grid")
        wells = write_wells_csv(five_spot_wells, tmp_path / "wells.csv")
        out = tmp_path / "adjacency.csv"
        assert main(["graph", "--grid", str(grid_dir), "--wells", str(wells), "--out", str(out)]) == 0
        # one producer per quadrant around a central injector
        assert read_adjacency_csv(out).values.tolist() == [[1, 1, 1, 1]]
        printed = json.loads(capsys.readouterr().out)
        assert len(printed["arrivals"][0]) == 4

    def test_missing_grid_returns_error_code(self, tmp_path, five_spot_wells):
        wells = write_wells_csv(five_spot_wells, tmp_path / "wells.csv")
        code = main(["graph", "--grid", str(tmp_path / "nowhere"), "--wells", str(wells),
                     "--out", str(tmp_path / "a.csv")])
        assert code == 1


class TestCrmFit:
    def test_parameters_and_diagnostics(self, tmp_path, crm_case_files):
        out = tmp_path / "crm.json"
        assert main(["crm-fit", "--panel", crm_case_files["panel_path"], "--multistarts", "2",
                     "--out", str(out)]) == 0
        fitted = json.loads(out.read_text())
        assert fitted["producer_ids"] == ["PRD1", "PRD2", "PRD3"]
        assert all(t > 0 for t in fitted["tau"])
        assert "objective" in fitted["diagnostics"]


class TestTrainAndEvaluate:
    def test_train_then_evaluate(self, tmp_path, crm_case_files, capsys):
        run_dir = tmp_path / "run"
        code = main(["train", "--config", _write(tmp_path / "train.json", TINY_TRAIN),
                     "--panel", crm_case_files["panel_path"], "--adj", crm_case_files["adjacency_path"],
                     "--physics", "on", "--out", str(run_dir)])
        assert code == 0
        run = json.loads((run_dir / "run.json").read_text())
        assert run["checkpoints"] == ["seed_0.json"]
        assert run["config"]["graph_mode"] == "expert"
        assert len(run["history"]["0"]) <= 4
        assert read_connectivity_csv(run_dir / "connectivity.csv").values.shape == (2, 3)

        capsys.readouterr()
        assert main(["evaluate", "--run", str(run_dir)]) == 0
        evaluation = json.loads((run_dir / "evaluation.json").read_text())
        assert set(evaluation["per_producer"]) == {"PRD1", "PRD2", "PRD3"}
        assert evaluation["total"] == pytest.approx(sum(evaluation["per_producer"].values()))
        assert json.loads(capsys.readouterr().out) == evaluation

    def test_self_learned_needs_no_adjacency(self, tmp_path, crm_case_files):
        run_dir = tmp_path / "run"
        code = main(["train", "--config", _write(tmp_path / "train.json", TINY_TRAIN),
                     "--panel", crm_case_files["panel_path"], "--self-learned", "--physics", "off",
                     "--out", str(run_dir)])
        assert code == 0
        run = json.loads((run_dir / "run.json").read_text())
        assert run["config"]["graph_mode"] == "self_learned"
        assert run["config"]["physics"] is False

    def test_evaluate_requires_a_run(self):
        with pytest.raises(SystemExit):
            main(["evaluate"])


class TestBenchAndPlots:
    def test_bench_writes_report_and_plots_rerender(self, tmp_path, crm_case_files):
        config = BenchmarkConfig(
            cases=[CaseConfig(name="crm_world", seeds=[0], **crm_case_files)],
            model=ModelConfig(gcn_width=4, head_width=8),
            train=TrainConfig(learning_rate=5e-3, max_epochs=3, patience=3, seeds=[0]),
            crm_multistarts=2,
        )
        config_path = tmp_path / "bench.json"
        config_path.write_text(config.model_dump_json())
        out = tmp_path / "bench"
        assert main(["bench", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "report.txt").read_text().startswith("Case: crm_world")

        figure = out / "crm_world" / "producer_PRD1.svg"
        figure.unlink()
        assert main(["plots", "--run", str(out)]) == 0
        assert figure.exists()

    def test_bench_refuses_non_empty_output(self, tmp_path, crm_case_files):
        config_path = tmp_path / "bench.json"
        config_path.write_text(BenchmarkConfig(cases=[CaseConfig(name="c", **crm_case_files)]).model_dump_json())
        out = tmp_path / "bench"
        out.mkdir()
        (out / "old.txt").write_text("x")
        assert main(["bench", "--config", str(config_path), "--out", str(out)]) == 1


class TestGradcheck:
    def test_default_configuration_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["loss_passed"] and summary["mixed_passed"]
        assert summary["loss_max_relative_error"] < 1e-4
