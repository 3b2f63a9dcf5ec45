import numpy as np
import pandas as pd
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
from scipy.stats import sem

from utils.logger import logger

STATS = ("mean", "rms", "q05", "q50", "q95", "max")


@dataclass
class RunSummary:
    metrics: Dict[str, Dict[str, Any]]
    replicates: int
    failed: int
    passed: Optional[bool]
    timing: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metrics": self.metrics,
            "replicates": self.replicates,
            "failed": self.failed,
            "passed": self.passed,
            "timing": self.timing,
        }


def profile_metric(values: pd.Series) -> Dict[str, Any]:
    """
    Aggregate one metric across replicates.
    """
    data = values.dropna().astype(float)
    if data.empty:
        return {"count": 0, **{stat: None for stat in STATS}, "sem": None}
    return {
        "count": int(len(data)),
        "mean": float(data.mean()),
        "rms": float(np.sqrt(np.mean(data ** 2))),
        "q05": float(data.quantile(0.05)),
        "q50": float(data.quantile(0.50)),
        "q95": float(data.quantile(0.95)),
        "max": float(data.max()),
        "sem": float(sem(data)) if len(data) > 1 else 0.0,
    }


def _check_tolerance(profile: Dict[str, Any], tolerance: Dict[str, Any]) -> bool:
    value = profile.get(tolerance.get("stat", "mean"))
    if value is None:
        return False
    if "min" in tolerance and value < tolerance["min"]:
        return False
    if "max" in tolerance and value > tolerance["max"]:
        return False
    return True


def summarize_run(records: List[Dict[str, Any]], tolerances: Dict[str, Dict[str, Any]],
                  timing: Optional[Dict[str, float]] = None) -> RunSummary:
    """
    Per-metric aggregates over the successful replicates, with pass/fail against
    declared tolerances. Metrics without a tolerance carry pass = None.
    """
    succeeded = [r for r in records if r.get("status") == "success"]
    failed = len(records) - len(succeeded)
    frame = pd.DataFrame([r.get("metrics", {}) for r in succeeded])

    metrics = {}
    for column in frame.columns:
        profile = profile_metric(frame[column])
        tolerance = tolerances.get(column)
        profile["pass"] = _check_tolerance(profile, tolerance) if tolerance else None
        metrics[column] = profile

    for name in tolerances:
        if name not in metrics:
            logger.warning(f"[SUMMARY] Tolerance declared for metric '{name}' which no stage produced")
            metrics[name] = {"count": 0, "pass": False}

    stage_timing = dict(timing or {})
    stage_frame = pd.DataFrame([r.get("timing", {}) for r in succeeded])
    for column in stage_frame.columns:
        stage_timing[f"stage_{column}_mean_s"] = float(stage_frame[column].mean())

    verdicts = [m["pass"] for m in metrics.values() if m.get("pass") is not None]
    passed = all(verdicts) if verdicts else None
    logger.info(f"[SUMMARY] {len(succeeded)} replicates aggregated, {failed} failed, passed={passed}")
    return RunSummary(metrics, len(records), failed, passed, stage_timing)


def mean_zero_check(values: np.ndarray, n_sigma: float = 4.0, atol: float = 1e-9) -> Dict[str, Any]:
    """Sample mean against its standard error; means below `atol` pass outright."""
    values = np.asarray(values, dtype=float)
    error = float(sem(values)) if len(values) > 1 else np.inf
    mean = float(np.mean(values))
    z = mean / error if error > 0 else (0.0 if mean == 0 else np.inf)
    within = abs(mean) <= atol or abs(z) <= n_sigma
    return {"mean": mean, "sem": error, "z": float(z), "count": len(values), "within": bool(within)}
