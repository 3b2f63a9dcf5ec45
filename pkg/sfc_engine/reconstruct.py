# sfc_engine/reconstruct.py

"""
Identification of dY = a dB + b dt from its SFCs.

Pipeline: Parseval inversion to the primitive X, left-continuous modification,
LIL difference quotients for |a(t)|, the k-shift quotient for a(t), window
averages and drift recovery by subtracting the recomputed a-integral SFCs.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from sfc_engine.cons import BasisError, BasisSpec, antiderivative, basis_function, project, synthesize
from sfc_engine.grid_core import BrownianPath, Grid, GridFunction, l2_norm
from sfc_engine.integrals import a_integral_density
from sfc_engine.processes import FunctionSpec, RealizedFunction, realize
from sfc_engine.sfc import FlavorError, SfcVector, StochasticDifferential, apply_mask, compute_sfc, mask_from_excluded
from utils.logger import logger

# loglog(1/h) must stay positive
MAX_WINDOW = 1.0 / np.e


class EstimatorError(ValueError):
    pass


class LilParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    h_max: float = 2.0 ** -6
    h_min: Optional[float] = None      # None -> dt
    ladder_ratio: float = 2.0
    stride: int = 1
    k_schedule: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    calibration: Literal["none", "self_calibrated"] = "self_calibrated"
    direction: Literal["upper", "two_sided"] = "two_sided"
    stabilization_fraction: float = 0.05

    @field_validator("k_schedule")
    @classmethod
    def _increasing(cls, k):
        if not k or any(x <= 0 for x in k) or any(b <= a for a, b in zip(k, k[1:])):
            raise ValueError("k_schedule must be non-empty, positive and strictly increasing")
        return k

    @model_validator(mode="after")
    def _windows(self):
        if not 0 < self.h_max < MAX_WINDOW:
            raise ValueError(f"h_max must lie in (0, 1/e), got {self.h_max}")
        if self.h_min is not None and not 0 < self.h_min <= self.h_max:
            raise ValueError("h_min must lie in (0, h_max]")
        if self.ladder_ratio <= 1 or self.stride < 1:
            raise ValueError("ladder_ratio must exceed 1 and stride must be >= 1")
        return self

    def widths(self, grid: Grid) -> np.ndarray:
        """Ladder of window widths in nodes, from h_max down to h_min."""
        h_min = grid.dt if self.h_min is None else self.h_min
        if h_min < grid.dt * (1 - 1e-9):
            raise EstimatorError(f"h_min={h_min} is below the grid step {grid.dt}")
        rungs, h = [], self.h_max
        while h > h_min * (1 + 1e-12):
            rungs.append(h)
            h /= self.ladder_ratio
        rungs.append(h_min)
        nodes = np.maximum(1, np.rint(np.array(rungs) / grid.dt).astype(int))
        return np.unique(nodes)[::-1]


@dataclass(frozen=True, eq=False)
class LilEstimate:
    value: float
    raw_value: float
    widths: np.ndarray
    raw_ladder: np.ndarray
    calibration_ladder: Optional[np.ndarray] = None

    @property
    def calibration_factor(self) -> Optional[float]:
        return None if self.calibration_ladder is None else float(self.calibration_ladder[-1])

    @property
    def ladder(self) -> np.ndarray:
        if self.calibration_ladder is None:
            return self.raw_ladder
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.calibration_ladder != 0, self.raw_ladder / self.calibration_ladder, np.nan)


@dataclass(frozen=True, eq=False)
class SignedEstimate:
    value: float
    k_used: float
    stabilized: bool
    k_trace: List[Tuple[float, float]] = field(default_factory=list)


def _loglog_norm(width: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * width * np.log(np.log(1.0 / width)))


def lil_ladder(values: np.ndarray, start: int, widths: np.ndarray, dt: float, stride: int = 1,
               direction: str = "two_sided") -> np.ndarray:
    """
    For each width W (in nodes), max over offsets d <= W of
    (X(t_start + d) - X(t_start)) / sqrt(2·d·dt·loglog(1/(d·dt))).
    """
    longest = int(widths.max())
    if start + longest >= len(values):
        raise EstimatorError(f"t too close to L: node {start} + window {longest} exceeds the grid")
    offsets = np.arange(1, longest + 1)
    if stride > 1:
        offsets = np.union1d(np.arange(stride, longest + 1, stride), widths)
    increments = np.real(values[start + offsets]) - np.real(values[start])
    if direction == "two_sided":
        increments = np.abs(increments)
    running = np.maximum.accumulate(increments / _loglog_norm(offsets * dt))
    return running[np.searchsorted(offsets, widths, side="right") - 1]


def lil_abs_estimator(Xt: GridFunction, t: float, params: LilParams,
                      reference: Optional[GridFunction] = None) -> LilEstimate:
    """
    LIL quotient of X̃ at t over the window ladder, read at the smallest window.
    With self-calibration each rung is divided by the same quotient of `reference`
    (the modified Brownian path) so finite-window undershoot cancels.
    The returned value is a magnitude; `raw_value` keeps the uncalibrated quotient.
    """
    grid = Xt.grid
    i = grid.node_index(t)
    widths = params.widths(grid)
    raw = lil_ladder(Xt.values, i, widths, grid.dt, params.stride, params.direction)

    calibration = None
    if params.calibration == "self_calibrated":
        if reference is None:
            raise EstimatorError("self-calibration needs the modified Brownian path as reference")
        calibration = lil_ladder(reference.values, i, widths, grid.dt, params.stride, params.direction)

    estimate = LilEstimate(abs(float(raw[-1])), float(raw[-1]), widths * grid.dt, raw, calibration)
    if calibration is None:
        return estimate
    return LilEstimate(abs(float(estimate.ladder[-1])), estimate.raw_value, estimate.widths, raw, calibration)


def lil_signed_estimator(Xt: GridFunction, path: BrownianPath, t: float, params: LilParams) -> SignedEstimate:
    """Abs estimator of X̃ + k·B̃ minus k, over the k schedule until successive values settle."""
    reference = left_continuous_mod(path.as_function())
    trace: List[Tuple[float, float]] = []
    previous = None
    for k in params.k_schedule:
        shifted = Xt.with_values(np.real(Xt.values) + k * reference.values)
        value = lil_abs_estimator(shifted, t, params, reference).value - k
        trace.append((float(k), float(value)))
        if previous is not None:
            k_prev, v_prev = previous
            if abs(value - v_prev) < params.stabilization_fraction * (k - k_prev):
                return SignedEstimate(float(value), float(k), True, trace)
        previous = (k, value)
    logger.debug(f"[LIL] k-trace did not settle at t={t}: {trace}")
    return SignedEstimate(trace[-1][1], trace[-1][0], False, trace)


def drift_perturbation_bound(b: GridFunction, h: float) -> float:
    """Largest change of a raw LIL value (windows <= h) caused by adding ∫ b dλ."""
    return l2_norm(b) / float(np.sqrt(2.0 * np.log(np.log(1.0 / h))))


def mask_perturbation_bound(sfc: SfcVector, removed: Iterable[int], h: float, grid: Grid) -> float:
    """Σ_{n removed} |c_n|·‖e_n‖ / sqrt(2·loglog(1/h)) for windows <= h."""
    total = sum(abs(sfc.values[n - 1]) * l2_norm(basis_function(sfc.basis, n, grid)) for n in removed)
    return float(total / np.sqrt(2.0 * np.log(np.log(1.0 / h))))


# -- Parseval inversion ----------------------------------------------------------

def parseval_transform(sfc: SfcVector, e: BasisSpec, grid: Grid) -> GridFunction:
    """t -> Σ_{n present} c_n·∫_0^t e_n dλ at every node (absent coefficients read as 0)."""
    e.check_grid(grid)
    if sfc.basis != e:
        raise BasisError(f"basis/grid mismatch: SFC basis {sfc.basis} vs {e}")
    density = synthesize(sfc.filled(), e, grid)
    if not e.is_complex:
        density = density.with_values(np.real(density.values))
    return antiderivative(density)


def left_continuous_mod(X: GridFunction) -> GridFunction:
    """Left limits X(t_j-) on the grid; node-tagged input is already left-continuous."""
    if X.convention == "node":
        return X
    return GridFunction(X.grid, np.concatenate([[0.0], X.values[:-1]]), "node")


# -- Pointwise recovery ----------------------------------------------------------

@dataclass(frozen=True)
class LocalAverage:
    ladder: List[float]
    value: float


def local_average(a_est: GridFunction, t: float, side: str = "right", n_ladder: Sequence[int] = (4, 16, 64)) -> LocalAverage:
    """n·∫ over windows of width 1/n beside t, rounded to whole cells."""
    grid = a_est.grid
    i = grid.node_index(t)
    cells = np.real(a_est.cells)
    ladder = []
    for n in n_ladder:
        width = max(1, int(round(1.0 / (n * grid.dt))))
        if side == "right":
            if i + width > grid.n_steps:
                raise EstimatorError(f"side infeasible at boundary: right window of {width} cells at node {i}")
            ladder.append(float(np.mean(cells[i:i + width])))
        elif side == "left":
            if i - width < 0:
                raise EstimatorError(f"side infeasible at boundary: left window of {width} cells at node {i}")
            ladder.append(float(np.mean(cells[i - width:i])))
        else:
            raise EstimatorError(f"unknown side: {side}")
    return LocalAverage(ladder, ladder[-1])


def recover_drift(sfc: SfcVector, a, path: BrownianPath, e: BasisSpec,
                  keep: Optional[Iterable[int]] = None) -> GridFunction:
    """
    b^Λ = Σ_{n∈Λ} (c_n - (e_n, a dB))·e_n, the a-integral SFCs recomputed with the
    flavor of `sfc`. `a` is a realization (oracle or estimate) or a plain GridFunction.
    """
    if sfc.basis != e:
        raise BasisError(f"basis/grid mismatch: SFC basis {sfc.basis} vs {e}")
    if keep is not None:
        sfc = apply_mask(sfc, keep)
    spec = a.spec if isinstance(a, RealizedFunction) else None
    if sfc.flavor == "skorokhod" and spec is None:
        raise FlavorError("flavor mismatch: skorokhod drift recovery needs the integrand spec, not a bare estimate")
    density = a_integral_density(sfc.flavor, a, path, spec, sfc.phi, sfc.phi_M)
    integral_part = project(density, e, sfc.N_outer).values
    drift = np.where(sfc.present, sfc.values - integral_part, 0.0)
    recovered = synthesize(drift, e, path.grid)
    return recovered if e.is_complex else recovered.with_values(np.real(recovered.values))


def hold_curve(grid: Grid, nodes: np.ndarray, values: np.ndarray) -> GridFunction:
    """Piecewise-constant curve holding values[k] from nodes[k] up to the next sample."""
    positions = np.searchsorted(nodes, np.arange(grid.n_steps + 1), side="right") - 1
    held = np.asarray(values, dtype=float)[np.clip(positions, 0, len(values) - 1)]
    return GridFunction(grid, np.nan_to_num(held), "left-point")


# -- End-to-end identification ---------------------------------------------------

def _sample_nodes(grid: Grid, params: LilParams, count: int, sample_times: Optional[Sequence[float]]) -> np.ndarray:
    if sample_times:
        return np.unique([grid.node_index(t) for t in sample_times]).astype(int)
    last = grid.n_steps - int(params.widths(grid).max()) - 1
    if last < 1:
        raise EstimatorError("t too close to L: the window ladder does not fit in the grid")
    return np.unique(np.rint(np.linspace(0, last, count + 2)[1:-1]).astype(int))


def _hit_rate(estimate: np.ndarray, truth: np.ndarray, tolerance: float, floor: float) -> float:
    scale = np.maximum(np.abs(truth), floor)
    valid = np.isfinite(estimate)
    return float(np.mean(valid & (np.abs(estimate - truth) <= tolerance * scale)))


def run_identification(
    diff: StochasticDifferential,
    path: BrownianPath,
    e: BasisSpec,
    N_outer: int,
    params: LilParams,
    excluded: Sequence[int] = (),
    sample_count: int = 16,
    sample_times: Optional[Sequence[float]] = None,
    local_average_ladder: Sequence[int] = (4, 16, 64),
    hit_tolerance: float = 0.2,
    hit_floor: float = 0.1,
    drift_perturbation: Optional[FunctionSpec] = None,
    extra_mask: Sequence[int] = (),
    replicate: int = 0,
) -> Dict[str, Any]:
    """compute_sfc -> parseval -> left-continuous mod -> LIL -> local average -> drift, with truth per stage."""
    grid = path.grid
    timing: Dict[str, float] = {}

    started = time.perf_counter()
    full = compute_sfc(diff, path, e, N_outer, replicate=replicate)
    keep = mask_from_excluded(N_outer, excluded)
    sfc = apply_mask(full, keep)
    timing["sfc"] = time.perf_counter() - started

    started = time.perf_counter()
    X = parseval_transform(sfc, e, grid)
    Xt = left_continuous_mod(X)
    a_real = realize(diff.a_spec, path)
    b_real = realize(diff.b_spec, path)
    density = a_integral_density(diff.flavor, a_real, path, diff.a_spec, diff.phi, diff.phi_M) + b_real.function
    Y_truth = antiderivative(density)
    timing["parseval"] = time.perf_counter() - started

    started = time.perf_counter()
    nodes = _sample_nodes(grid, params, sample_count, sample_times)
    times = grid.node_times[nodes]
    reference = left_continuous_mod(path.as_function())
    abs_estimates = [lil_abs_estimator(Xt, t, params, reference) for t in times]
    signed_estimates = [lil_signed_estimator(Xt, path, t, params) for t in times]
    abs_values = np.array([est.value for est in abs_estimates])
    signed_values = np.array([est.value for est in signed_estimates])
    truth_a = np.real(a_real.values[nodes])
    timing["lil"] = time.perf_counter() - started

    started = time.perf_counter()
    abs_curve = hold_curve(grid, nodes, abs_values)
    smoothed = []
    for t in times:
        try:
            smoothed.append(local_average(abs_curve, t, "right", local_average_ladder).value)
        except EstimatorError:
            smoothed.append(np.nan)
    smoothed = np.array(smoothed)
    timing["local_average"] = time.perf_counter() - started

    started = time.perf_counter()
    b_recovered = recover_drift(sfc, a_real, path, e)
    b_true = b_real.function
    b_projection = synthesize(np.where(sfc.present, project(b_true, e, N_outer).values, 0.0), e, grid)
    timing["drift"] = time.perf_counter() - started

    b_norm = l2_norm(b_true)
    drift_error = l2_norm(b_recovered - b_true)
    metrics = {
        "parseval_max_err": float(np.max(np.abs(X.values - Y_truth.values))),
        "abs_a_hit_rate": _hit_rate(abs_values, np.abs(truth_a), hit_tolerance, hit_floor),
        "abs_a_mean_err": float(np.nanmean(np.abs(abs_values - np.abs(truth_a)))),
        "abs_a_smoothed_hit_rate": _hit_rate(smoothed, np.abs(truth_a), hit_tolerance, hit_floor),
        "signed_a_hit_rate": _hit_rate(signed_values, truth_a, hit_tolerance, hit_floor),
        "signed_a_mean": float(np.nanmean(signed_values)),
        "sign_hit_rate": float(np.mean(np.sign(signed_values[truth_a != 0]) == np.sign(truth_a[truth_a != 0])))
        if np.any(truth_a != 0) else 1.0,
        "k_stabilized_rate": float(np.mean([est.stabilized for est in signed_estimates])),
        "drift_l2_err": drift_error,
        "drift_l2_rel_err": drift_error / b_norm if b_norm > 0 else drift_error,
        "drift_max_err": float(np.max(np.abs(b_recovered.cells - b_true.cells))),
        "drift_projection_max_err": float(np.max(np.abs(b_recovered.cells - b_projection.cells))),
    }

    h_min = float(params.widths(grid)[-1] * grid.dt)
    if drift_perturbation is not None:
        perturbation = drift_perturbation.to_grid(grid)
        shifted = Xt + antiderivative(perturbation)
        bound = drift_perturbation_bound(perturbation, h_min)
        changes = [abs(lil_abs_estimator(shifted, t, params, reference).raw_value - est.raw_value)
                   for t, est in zip(times, abs_estimates)]
        metrics["drift_bound_violations"] = int(sum(c > bound + 1e-12 * (1 + bound) for c in changes))
        metrics["drift_max_change_ratio"] = float(max(changes) / bound) if bound > 0 else 0.0
    if extra_mask:
        masked = apply_mask(full, mask_from_excluded(N_outer, set(excluded) | set(extra_mask)))
        masked_Xt = left_continuous_mod(parseval_transform(masked, e, grid))
        removed = [n for n in extra_mask if n not in set(excluded)]
        bound = mask_perturbation_bound(full, removed, h_min, grid)
        changes = [abs(lil_abs_estimator(masked_Xt, t, params, reference).raw_value - est.raw_value)
                   for t, est in zip(times, abs_estimates)]
        metrics["mask_bound_violations"] = int(sum(c > bound + 1e-12 * (1 + bound) for c in changes))

    node_list = nodes.tolist()
    stages = {
        "primitive": {"node_index": node_list, "value": X.values[nodes], "truth": Y_truth.values[nodes]},
        "abs_a": {"node_index": node_list, "value": abs_values, "truth": np.abs(truth_a)},
        "abs_a_smoothed": {"node_index": node_list, "value": smoothed, "truth": np.abs(truth_a)},
        "signed_a": {"node_index": node_list, "value": signed_values, "truth": truth_a},
        "drift": {"node_index": node_list, "value": b_recovered.values[nodes], "truth": b_true.values[nodes]},
    }
    logger.info(
        f"[IDENTIFY] replicate={replicate} parseval_max_err={metrics['parseval_max_err']:.2e} "
        f"abs_a_hit_rate={metrics['abs_a_hit_rate']:.2f} drift_l2_rel_err={metrics['drift_l2_rel_err']:.2e}"
    )
    return {
        "status": "success",
        "replicate": replicate,
        "seed": path.seed,
        "sfc": sfc,
        "stages": stages,
        "metrics": metrics,
        "timing": timing,
        "diagnostics": {
            "k_traces": [est.k_trace for est in signed_estimates],
            "calibration_factors": [est.calibration_factor for est in abs_estimates],
            "mask": {"excluded": sorted(set(range(1, N_outer + 1)) - set(keep))},
        },
    }


# -- Calibration ------------------------------------------------------------------

def calibration_frame(ladders: np.ndarray, widths: np.ndarray, grid: Grid) -> pd.DataFrame:
    """Per-rung statistics of raw LIL ladders of pure Brownian paths."""
    ladders = np.atleast_2d(ladders)
    return pd.DataFrame({
        "n_steps": grid.n_steps,
        "h": widths * grid.dt,
        "window_nodes": widths,
        "mean_raw": np.nanmean(ladders, axis=0),
        "std_raw": np.nanstd(ladders, axis=0),
        "q05": np.nanquantile(ladders, 0.05, axis=0),
        "q50": np.nanquantile(ladders, 0.50, axis=0),
        "q95": np.nanquantile(ladders, 0.95, axis=0),
        "replicates": ladders.shape[0],
    })


def brownian_ladder(path: BrownianPath, params: LilParams, t: Optional[float] = None) -> np.ndarray:
    grid = path.grid
    t = grid.horizon / 4 if t is None else t
    return lil_ladder(path.values, grid.node_index(t), params.widths(grid), grid.dt, params.stride, params.direction)


def calibration_table(paths: Iterable[BrownianPath], params: LilParams, t: Optional[float] = None) -> pd.DataFrame:
    paths = list(paths)
    if not paths:
        raise EstimatorError("calibration needs at least one path")
    grid = paths[0].grid
    ladders = np.array([brownian_ladder(path, params, t) for path in paths])
    return calibration_frame(ladders, params.widths(grid), grid)
