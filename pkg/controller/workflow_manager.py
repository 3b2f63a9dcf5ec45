# controller/workflow_manager.py

import os
import time
from functools import partial
from typing import Any, Dict, List, Optional

import numpy as np

from controller.replicator import run_replicates
from controller.scenario_config import ScenarioConfig
from sfc_engine.analyzer import mean_zero_check, summarize_run
from sfc_engine.cons import BasisSpec, basis_function, check_basis_condition, orthonormality_defect
from sfc_engine.grid_core import GridFunction, sample_brownian
from sfc_engine.integrals import (
    ito_nisio_partial,
    ogawa_correction,
    ogawa_ibp,
    ogawa_phi_integral,
    ogawa_via_trace,
    s_type_decomposition,
    skorokhod_integral,
    stratonovich_sum,
    universality_check,
)
from sfc_engine.processes import STypeItoSpec, compile_spec, realize
from sfc_engine.reconstruct import brownian_ladder, calibration_frame, run_identification
from sfc_engine.sfc import StochasticDifferential, compute_sfc, sfc_frame, sfc_records
from utils.logger import logger
from utils.result_writer import results_frame, save_frame, save_json, stage_arrays

SUBCOMMANDS = ("run", "oracle-check", "lil-calibrate", "basis-diagnose")
# orthonormality is checked on the leading elements only
ORTHONORMALITY_CHECK_COUNT = 64


def identification_task(config: ScenarioConfig, replicate: int, seed: int) -> Dict[str, Any]:
    path = sample_brownian(config.build_grid(), seed)
    options = config.identification
    return run_identification(
        config.differential(),
        path,
        config.outer_basis(),
        config.N_outer(),
        config.lil,
        excluded=config.outer.excluded,
        sample_count=options.sample_count,
        sample_times=options.sample_times or None,
        local_average_ladder=options.local_average_ladder,
        hit_tolerance=options.hit_tolerance,
        hit_floor=options.hit_floor,
        drift_perturbation=options.drift_perturbation,
        extra_mask=options.extra_mask,
        replicate=replicate,
    )


def _integrand_metrics(config: ScenarioConfig, spec, path, suffix: str = "") -> Dict[str, Any]:
    """Oracle comparisons for one integrand; metric names carry `suffix`."""
    grid = path.grid
    a = realize(spec, path)
    one = GridFunction.constant(grid, 1.0)
    structure = compile_spec(spec, grid)
    s_type = isinstance(spec, STypeItoSpec)
    metrics: Dict[str, float] = {}

    series = ogawa_phi_integral(a, path, config.inner_basis(), config.M_max(), config.oracle.series_tolerance)
    metrics["series_converged"] = float(series.convergence_flag)
    metrics["series_tail"] = series.tail_estimate
    reference = series.converged_value

    if s_type:
        components = s_type_decomposition(spec, path, one)
        reference = stratonovich_sum(a, one, path)
        metrics["stratonovich_abs_dev"] = abs(components["total"] - reference)
        metrics["s_type_series_abs_dev"] = abs(components["total"] - series.converged_value)
    else:
        ibp = ogawa_ibp(a, one, path, 0.0, grid.horizon)
        metrics["ibp_series_abs_dev"] = abs(series.converged_value - ibp)
        reference = ibp

    if structure.has_closed_form_derivative:
        skorokhod = skorokhod_integral(spec, path, one)
        via_trace = ogawa_via_trace(spec, path, one)
        correction = np.sum(ogawa_correction(spec, path).cells) * grid.dt
        metrics["skorokhod_value"] = float(np.real(skorokhod))
        # Skorokhod value against the Ogawa oracle minus its mean: B(L)^2 - L for a = B(L)
        metrics["skorokhod_chaos_residual"] = float(np.real(skorokhod - (reference - correction)))
        if s_type:
            metrics["trace_s_type_abs_dev"] = abs(via_trace - components["total"])
            metrics["trace_stratonovich_abs_dev"] = abs(via_trace - reference)
        else:
            metrics["trace_ibp_abs_dev"] = abs(via_trace - reference)

    stages = {"node_index": [grid.n_steps], "value": [series.converged_value], "truth": [reference]}
    return {"metrics": {f"{key}{suffix}": value for key, value in metrics.items()}, "stage": stages, "a": a}


def oracle_task(config: ScenarioConfig, replicate: int, seed: int) -> Dict[str, Any]:
    grid = config.build_grid()
    path = sample_brownian(grid, seed)
    one = GridFunction.constant(grid, 1.0)
    phi, M = config.inner_basis(), config.M_max()

    primary = _integrand_metrics(config, config.a_spec, path)
    metrics: Dict[str, float] = dict(primary["metrics"])
    stages = {"ogawa_series": primary["stage"]}
    for label, spec in config.oracle.specs.items():
        member = _integrand_metrics(config, spec, path, f"_{label}")
        metrics.update(member["metrics"])
        stages[f"ogawa_series_{label}"] = member["stage"]

    checked = StochasticDifferential(config.a_spec, config.b_spec, config.flavor, phi, M)
    sfc = compute_sfc(checked, path, config.outer_basis(), config.N_outer(), replicate, cross_check=True)
    for key, value in sfc.diagnostics.items():
        metrics[f"sfc_{key}"] = value

    if len(config.oracle.universality_bases) >= 2:
        specs = [BasisSpec(b.family, grid.horizon, b.ordering) for b in config.oracle.universality_bases]
        report = universality_check(primary["a"], path, specs, M, config.oracle.series_tolerance)
        metrics["universality_spread"] = report["spread"]
        metrics["universality_converged"] = float(report["all_converged"])
    for count in config.oracle.ito_nisio_M:
        _, error = ito_nisio_partial(one, path, phi, count)
        metrics[f"ito_nisio_err_M{count}"] = error

    return {"status": "success", "replicate": replicate, "seed": seed, "metrics": metrics, "stages": stages}


def calibration_task(config: ScenarioConfig, replicate: int, seed: int) -> Dict[str, Any]:
    path = sample_brownian(config.build_grid(), seed)
    ladder = brownian_ladder(path, config.lil, config.calibration.t)
    return {"status": "success", "replicate": replicate, "seed": seed, "ladder": ladder,
            "metrics": {"calibration_factor": float(ladder[-1])}}


def diagnose_bases(config: ScenarioConfig) -> Dict[str, Any]:
    grid = config.build_grid()
    outer, inner = config.outer_basis(), config.inner_basis()
    M = config.M_max()
    functions = [f.to_grid(grid) for f in config.diagnose.functions]
    if not functions:
        functions = [basis_function(outer, n, grid) for n in range(1, min(3, config.N_outer()) + 1)]
    reports = [check_basis_condition(f, inner, config.diagnose.M_max or M) for f in functions]
    return {
        "inner": {"family": inner.family, "ordering": inner.ordering},
        "outer": {"family": outer.family, "ordering": outer.ordering},
        "orthonormality_defect": {
            "outer": orthonormality_defect(outer, grid, min(ORTHONORMALITY_CHECK_COUNT, config.N_outer())),
            "inner": orthonormality_defect(inner, grid, min(ORTHONORMALITY_CHECK_COUNT, M)),
        },
        "functions": reports,
    }


# metrics whose sample mean must vanish: Skorokhod integrals and their chaos residuals
MEAN_ZERO_PREFIXES = ("skorokhod_value", "skorokhod_chaos_residual")
# fewer replicates leave the standard error too rough to fail a run on
MEAN_ZERO_MIN_REPLICATES = 30


def mean_zero_checks(records: List[Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    keys = sorted({key for r in records for key in r["metrics"] if key.startswith(MEAN_ZERO_PREFIXES)})
    return {
        key: mean_zero_check(np.array([r["metrics"][key] for r in records if key in r["metrics"]]))
        for key in keys
    }


def run_workflow(subcommand: str, config: ScenarioConfig, out_dir: Optional[str] = None,
                 workers: Optional[int] = None, show_progress: bool = True) -> Dict[str, Any]:
    """
    Runs one subcommand end to end and writes its artifacts.

    Returns:
        dict: status, summary and the list of written files.
    """
    try:
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"Invalid subcommand '{subcommand}'. Choose from {list(SUBCOMMANDS)}.")
        out_dir = out_dir or config.outputs.directory
        workers = workers or config.workers()
        os.makedirs(out_dir, exist_ok=True)
        logger.info(f"[WORKFLOW] '{subcommand}' started for scenario '{config.name}' -> {out_dir}")
        started = time.perf_counter()
        files: List[str] = []

        # 1. Basis diagnostics need no replicates
        if subcommand == "basis-diagnose":
            report = diagnose_bases(config)
            files.append(save_json(report, os.path.join(out_dir, "basis_report.json")))
            return {"status": "success", "summary": report, "files": files}

        # 2. Replicates
        task = {"run": identification_task, "oracle-check": oracle_task, "lil-calibrate": calibration_task}[subcommand]
        records = run_replicates(partial(task, config), config.replication.count, config.replication.base_seed,
                                 workers, show_progress)
        elapsed = time.perf_counter() - started

        # 3. Aggregate
        summary = summarize_run(records, {k: v.model_dump(exclude_none=True) for k, v in config.tolerances.items()},
                                {"wall_clock_s": elapsed})
        payload = summary.to_dict()
        payload["scenario"] = config.name
        payload["subcommand"] = subcommand
        payload["errors"] = [{"replicate": r["replicate"], "error": r["error"]} for r in records if r["status"] != "success"]

        succeeded = [r for r in records if r["status"] == "success"]
        if subcommand == "oracle-check":
            checks = mean_zero_checks(succeeded)
            if checks:
                payload["mean_zero"] = checks
                if "skorokhod_value" in checks:
                    payload["skorokhod_mean_zero"] = checks["skorokhod_value"]
                failing = [key for key, check in checks.items()
                           if not check["within"] and check["count"] >= MEAN_ZERO_MIN_REPLICATES]
                if failing:
                    logger.warning(f"[WORKFLOW] Sample mean away from zero for {failing}")
                    payload["passed"] = False

        # 4. Artifacts
        if subcommand == "lil-calibrate" and succeeded:
            grid = config.build_grid()
            table = calibration_frame(np.array([r["ladder"] for r in succeeded]), config.lil.widths(grid), grid)
            files.append(save_frame(table, os.path.join(out_dir, "calibration.csv")))
            payload["calibration"] = table.to_dict(orient="records")
        if "csv" in config.outputs.formats:
            files.append(save_frame(results_frame(records), os.path.join(out_dir, "results.csv")))
        if "json" in config.outputs.formats:
            files.append(save_json(stage_arrays(records), os.path.join(out_dir, "stages.json")))
        if "sfc" in config.outputs.formats:
            vectors = [r["sfc"] for r in succeeded if "sfc" in r]
            files.append(save_frame(sfc_frame(vectors), os.path.join(out_dir, "sfc.csv")))
            files.append(save_json(sfc_records(vectors), os.path.join(out_dir, "sfc.json")))
        files.append(save_json(payload, os.path.join(out_dir, "summary.json")))

        logger.info(f"[WORKFLOW] '{subcommand}' finished in {elapsed:.2f}s, passed={summary.passed}")
        return {"status": "success", "summary": payload, "files": files}

    except Exception as e:
        logger.exception(f"[WORKFLOW] '{subcommand}' failed: {str(e)}")
        return {"status": "error", "summary": {}, "files": [], "error": str(e)}
