# utils/result_writer.py

import json
import os
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd

from utils.logger import logger

RESULT_COLUMNS = ["replicate", "stage", "node_index", "value_re", "value_im", "truth_re", "truth_im", "abs_err"]
# round-trip precision keeps reruns byte-identical
FLOAT_FORMAT = "%.17g"


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(np.real(value)), "im": float(np.imag(value))}
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def results_frame(records: Iterable[Dict[str, Any]]) -> pd.DataFrame:
    """Long format: one row per (replicate, stage, node)."""
    frames: List[pd.DataFrame] = []
    for record in records:
        if record.get("status") != "success":
            continue
        for stage, arrays in record.get("stages", {}).items():
            value = np.asarray(arrays["value"], dtype=complex)
            truth = np.asarray(arrays["truth"], dtype=complex)
            frames.append(pd.DataFrame({
                "replicate": record["replicate"],
                "stage": stage,
                "node_index": np.asarray(arrays["node_index"], dtype=int),
                "value_re": value.real,
                "value_im": value.imag,
                "truth_re": truth.real,
                "truth_im": truth.imag,
                "abs_err": np.abs(value - truth),
            }))
    if not frames:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    return pd.concat(frames, ignore_index=True)[RESULT_COLUMNS]


def save_frame(df: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    try:
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"[WRITER] Saved {len(df)} rows to '{path}'")
        return path
    except Exception as e:
        logger.error(f"[WRITER] Failed to write CSV '{path}': {e}", exc_info=True)
        raise


def save_json(payload: Any, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(_to_jsonable(payload), handle, indent=2, sort_keys=True)
        logger.info(f"[WRITER] Saved JSON to '{path}'")
        return path
    except Exception as e:
        logger.error(f"[WRITER] Failed to write JSON '{path}': {e}", exc_info=True)
        raise


def stage_arrays(records: Iterable[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Per-replicate stage arrays for stages.json."""
    return [
        {"replicate": r["replicate"], "seed": r.get("seed"), "stages": r.get("stages", {}),
         "diagnostics": r.get("diagnostics", {})}
        if r.get("status") == "success"
        else {"replicate": r["replicate"], "seed": r.get("seed"), "status": "error", "error": r.get("error")}
        for r in records
    ]
