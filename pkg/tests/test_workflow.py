"""
Subcommands end to end on small grids, plus replicate scheduling.
"""

import json

import pandas as pd
import pytest

from controller.replicator import run_replicates
from controller.scenario_config import load_config, parse_config
from controller.workflow_manager import run_workflow
from sfc_engine.grid_core import replicate_seed


# -- Helpers -------------------------------------------------------------------

def scenario(**overrides):
    base = {
        "name": "unit",
        "grid": {"L": 1.0, "n_steps": 256},
        "a_spec": {"variant": "fv_anticipative", "g": {"kind": "constant", "value": 1.0}, "functional": {"name": "sin_B"}},
        "b_spec": {"variant": "deterministic", "g": {"kind": "ramp"}},
        "identification": {"sample_count": 4},
        "replication": {"count": 3, "base_seed": 5},
        "outputs": {"formats": ["csv", "json", "sfc"]},
    }
    base.update(overrides)
    return parse_config(json.dumps(base))


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def flaky_task(replicate, seed):
    if replicate == 1:
        raise RuntimeError("diverged")
    return {"metrics": {"value": float(seed)}}


class TestReplicator:
    def test_seeds_and_order(self):
        records = run_replicates(lambda r, s: {"metrics": {"seed": s}}, 4, 9, show_progress=False)
        assert [r["replicate"] for r in records] == [0, 1, 2, 3]
        assert [r["seed"] for r in records] == [replicate_seed(9, r) for r in range(4)]

    def test_failure_is_isolated(self):
        records = run_replicates(flaky_task, 3, 0, show_progress=False)
        assert [r["status"] for r in records] == ["success", "error", "success"]
        assert records[1]["error"] == "diverged"

    def test_worker_pool_keeps_order(self):
        records = run_replicates(flaky_task, 4, 7, workers=2, show_progress=False)
        assert [r["replicate"] for r in records] == [0, 1, 2, 3]
        assert records[1]["status"] == "error"


class TestRun:
    def test_artifacts(self, tmp_path):
        config = scenario(tolerances={"drift_max_err": {"stat": "max", "max": 1e-6}})
        result = run_workflow("run", config, str(tmp_path), workers=1, show_progress=False)
        assert result["status"] == "success"
        names = sorted(p.split("/")[-1] for p in result["files"])
        assert names == ["results.csv", "sfc.csv", "sfc.json", "stages.json", "summary.json"]

        summary = read_json(tmp_path / "summary.json")
        assert summary["passed"] is True
        assert summary["replicates"] == 3
        assert summary["subcommand"] == "run"

        results = pd.read_csv(tmp_path / "results.csv")
        assert list(results.columns) == ["replicate", "stage", "node_index", "value_re", "value_im",
                                         "truth_re", "truth_im", "abs_err"]
        assert set(results["stage"]) == {"primitive", "abs_a", "abs_a_smoothed", "signed_a", "drift"}
        assert len(pd.read_csv(tmp_path / "sfc.csv")) == 3 * 256

    @pytest.mark.parametrize("workers", [2, 8])
    def test_deterministic_across_workers(self, tmp_path, workers):
        config = scenario()
        first, second = tmp_path / "serial", tmp_path / "pool"
        run_workflow("run", config, str(first), workers=1, show_progress=False)
        run_workflow("run", config, str(second), workers=workers, show_progress=False)
        assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
        assert (first / "sfc.csv").read_bytes() == (second / "sfc.csv").read_bytes()

    def test_failing_tolerance(self, tmp_path):
        config = scenario(tolerances={"parseval_max_err": {"stat": "max", "max": -1.0}})
        result = run_workflow("run", config, str(tmp_path), workers=1, show_progress=False)
        assert result["status"] == "success"
        assert result["summary"]["passed"] is False

    def test_unknown_subcommand(self, tmp_path):
        result = run_workflow("plot", scenario(), str(tmp_path), show_progress=False)
        assert result["status"] == "error"
        assert "Invalid subcommand" in result["error"]


class TestOracleCheck:
    def test_finite_variation_oracles(self, tmp_path):
        config = scenario(
            a_spec={"variant": "fv_anticipative", "g": {"kind": "ramp"}, "functional": {"name": "B"}},
            oracle={"universality_bases": [{"family": "haar"}, {"family": "cosine"}], "ito_nisio_M": [1, 256]},
            tolerances={
                "ibp_series_abs_dev": {"stat": "max", "max": 1e-8},
                "trace_ibp_abs_dev": {"stat": "max", "max": 1e-8},
                "universality_spread": {"stat": "max", "max": 1e-6},
                "ito_nisio_err_M256": {"stat": "max", "max": 1e-9},
            },
        )
        result = run_workflow("oracle-check", config, str(tmp_path), workers=1, show_progress=False)
        summary = result["summary"]
        assert summary["passed"] is True
        assert "skorokhod_mean_zero" in summary
        assert summary["metrics"]["sfc_ibp_max_deviation"]["max"] <= 1e-8

    def test_s_type_metrics(self, tmp_path):
        config = scenario(
            a_spec={"variant": "s_type_ito", "f": {"variant": "deterministic", "g": {"kind": "constant", "value": 1.0}}},
            inner={"family": "haar", "M_max": 64},
        )
        result = run_workflow("oracle-check", config, str(tmp_path), workers=1, show_progress=False)
        metrics = result["summary"]["metrics"]
        assert "stratonovich_abs_dev" in metrics
        assert "ibp_series_abs_dev" not in metrics
        assert metrics["trace_s_type_abs_dev"]["max"] <= 1e-10
        assert metrics["trace_stratonovich_abs_dev"]["max"] <= 5 * (1 / 256) ** 0.5

    def test_labelled_integrand_family(self, tmp_path):
        terminal = {"variant": "fv_anticipative", "g": {"kind": "constant", "value": 1.0}, "functional": {"name": "B"}}
        config = scenario(
            oracle={"specs": {
                "terminal": terminal,
                "random_diffusion": {"variant": "s_type_ito", "f": terminal},
            }},
            replication={"count": 40, "base_seed": 3},
            tolerances={"trace_ibp_abs_dev_terminal": {"stat": "max", "max": 1e-8}},
        )
        result = run_workflow("oracle-check", config, str(tmp_path), workers=1, show_progress=False)
        summary = result["summary"]
        assert summary["passed"] is True
        assert {"skorokhod_value_terminal", "skorokhod_chaos_residual_terminal",
                "stratonovich_abs_dev_random_diffusion"} <= set(summary["metrics"])
        # B(L)^2 - L is the Ogawa value minus its mean
        assert summary["metrics"]["skorokhod_chaos_residual_terminal"]["max"] <= 1e-8
        assert summary["mean_zero"]["skorokhod_chaos_residual_terminal"]["within"]
        assert summary["mean_zero"]["skorokhod_value_random_diffusion"]["count"] == 40


class TestCalibrate:
    def test_calibration_table(self, tmp_path):
        result = run_workflow("lil-calibrate", scenario(), str(tmp_path), workers=1, show_progress=False)
        assert result["status"] == "success"
        table = pd.read_csv(tmp_path / "calibration.csv")
        assert table["window_nodes"].tolist() == [4, 2, 1]
        assert (table["replicates"] == 3).all()
        assert len(result["summary"]["calibration"]) == 3


class TestDiagnose:
    def test_basis_report(self, tmp_path):
        config = scenario(
            inner={"family": "trigonometric", "M_max": 33},
            diagnose={"functions": [{"kind": "ramp"}, {"kind": "step", "breakpoints": [0.5], "values": [1.0, -1.0]}]},
        )
        result = run_workflow("basis-diagnose", config, str(tmp_path), show_progress=False)
        report = read_json(tmp_path / "basis_report.json")
        assert result["status"] == "success"
        assert report["orthonormality_defect"]["inner"] < 1e-12
        assert report["orthonormality_defect"]["outer"] < 1e-12
        assert len(report["functions"]) == 2
        assert report["functions"][0]["c3"]["holds"] is True

    def test_default_functions_are_outer_elements(self, tmp_path):
        result = run_workflow("basis-diagnose", scenario(), str(tmp_path), show_progress=False)
        assert len(result["summary"]["functions"]) == 3


@pytest.fixture
def scenario_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "scenario.json"
        document = json.loads(scenario(**overrides).model_dump_json())
        document["outputs"]["directory"] = str(tmp_path / "out")
        path.write_text(json.dumps(document))
        return path
    return write


class TestScenarioFileRoundTrip:
    def test_dumped_config_reloads(self, scenario_file):
        config = load_config(scenario_file())
        assert config.name == "unit"
        assert config.outputs.directory.endswith("out")
