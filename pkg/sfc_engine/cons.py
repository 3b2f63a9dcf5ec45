# sfc_engine/cons.py

"""
Complete orthonormal systems of L²([0, L]) on the grid.

Four families are available: haar (default), trigonometric (complex
exponentials T_n), cosine and normalized cell indicators. Projections and
syntheses go through fast transforms (PyWavelets Haar DWT, FFT, DCT), so a full
coefficient vector costs O(n log n) instead of a dense matrix product.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Literal

import numpy as np
import pywt
from scipy import fft as sp_fft

from sfc_engine.grid_core import Grid, GridFunction, grid_total_variation
from utils.logger import logger

Family = Literal["haar", "trigonometric", "cosine", "indicator"]
Ordering = Literal["natural", "positive_first"]
FAMILIES = ("haar", "trigonometric", "cosine", "indicator")

# growth of the running sup norm over the second half of the sweep that still counts as a plateau
PLATEAU_RATIO = 1.5
TV_GROWTH_RATIO = 1.5


class BasisError(ValueError):
    """Basis request the grid cannot represent exactly."""
    pass


@dataclass(frozen=True)
class BasisSpec:
    family: Family = "haar"
    horizon: float = 1.0
    ordering: Ordering = "natural"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BasisError(f"unknown basis family: {self.family}")
        if self.ordering not in ("natural", "positive_first"):
            raise BasisError(f"unknown ordering: {self.ordering}")
        if self.ordering != "natural" and self.family != "trigonometric":
            raise BasisError("only the trigonometric family supports a non-natural ordering")

    @property
    def is_complex(self) -> bool:
        return self.family == "trigonometric"

    def check_grid(self, grid: Grid) -> None:
        if not np.isclose(self.horizon, grid.horizon, rtol=1e-12, atol=0.0):
            raise BasisError(f"basis/grid mismatch: basis horizon {self.horizon} vs grid horizon {grid.horizon}")


@dataclass(frozen=True, eq=False)
class BasisCoefficients:
    """c_m = ⟨φ_m, f⟩ for m = 1..M in the family's ordinal order."""
    values: np.ndarray
    spec: BasisSpec

    def __len__(self) -> int:
        return len(self.values)

    def parseval_partial_sums(self) -> np.ndarray:
        return np.cumsum(np.abs(self.values) ** 2)


def max_index(spec: BasisSpec, grid: Grid) -> int:
    """Number of elements exactly representable on the grid."""
    if spec.family == "trigonometric":
        return 2 * (grid.n_steps // 4) + 1
    return grid.n_steps


def _check_count(spec: BasisSpec, grid: Grid, count: int) -> None:
    spec.check_grid(grid)
    if count < 1:
        raise BasisError(f"basis index/count must be >= 1, got {count}")
    limit = max_index(spec, grid)
    if count > limit:
        raise BasisError(
            f"basis finer than grid: {spec.family} index {count} exceeds {limit} representable elements "
            f"at n_steps={grid.n_steps}"
        )


def signed_index(ordinal: int, spec: BasisSpec, grid: Grid) -> int:
    """Map an ordinal m >= 1 to the signed frequency n of T_n."""
    if ordinal == 1:
        return 0
    if spec.ordering == "positive_first":
        half = grid.n_steps // 4
        return ordinal - 1 if ordinal <= half + 1 else -(ordinal - 1 - half)
    return ordinal // 2 if ordinal % 2 == 0 else -(ordinal - 1) // 2


def _signed_indices(spec: BasisSpec, grid: Grid, count: int) -> np.ndarray:
    return np.array([signed_index(m, spec, grid) for m in range(1, count + 1)], dtype=int)


@lru_cache(maxsize=512)
def _basis_cells(spec: BasisSpec, index: int, grid: Grid) -> np.ndarray:
    n, L = grid.n_steps, grid.horizon
    if spec.family == "haar":
        if index == 1:
            return np.full(n, 1.0 / np.sqrt(L))
        level = (index - 1).bit_length() - 1
        position = index - 1 - 2 ** level
        width = n >> level
        cells = np.zeros(n)
        start = position * width
        amplitude = 2.0 ** (level / 2.0) / np.sqrt(L)
        cells[start:start + width // 2] = amplitude
        cells[start + width // 2:start + width] = -amplitude
        return cells
    if spec.family == "trigonometric":
        frequency = signed_index(index, spec, grid)
        return np.exp(2j * np.pi * frequency * np.arange(n) / n) / np.sqrt(L)
    if spec.family == "cosine":
        if index == 1:
            return np.full(n, 1.0 / np.sqrt(L))
        # cell midpoints keep the DCT-II orthogonality exact on the grid
        return np.sqrt(2.0 / L) * np.cos(np.pi * (index - 1) * (np.arange(n) + 0.5) / n)
    cells = np.zeros(n)
    cells[index - 1] = 1.0 / np.sqrt(grid.dt)
    return cells


def basis_function(spec: BasisSpec, index: int, grid: Grid) -> GridFunction:
    """φ_index on the grid as a unit-norm left-point GridFunction."""
    _check_count(spec, grid, index)
    cells = _basis_cells(spec, index, grid)
    cells.setflags(write=False)
    return GridFunction.from_cells(grid, cells)


# -- Fast transforms -------------------------------------------------------------

def _split_complex(transform, x: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(x):
        return transform(x.real) + 1j * transform(x.imag)
    return transform(x)


def _haar_analysis(x: np.ndarray) -> np.ndarray:
    """Orthonormal Haar transform ordered [scaling, level 0, level 1, ..., finest level]."""
    return _split_complex(lambda v: np.concatenate(pywt.wavedec(v, "haar", mode="periodization")), np.asarray(x))


def _haar_synthesis(coefficients: np.ndarray) -> np.ndarray:
    def inverse(flat: np.ndarray) -> np.ndarray:
        if len(flat) == 1:
            return flat
        # pywt level list: [scaling, level 0 detail, level 1 detail, ...]
        bounds = [1] + [2 ** k for k in range(1, int(np.log2(len(flat))))]
        return pywt.waverec(np.split(flat, bounds), "haar", mode="periodization")
    return _split_complex(inverse, np.asarray(coefficients))


def _dct(x: np.ndarray, kind: int) -> np.ndarray:
    return _split_complex(lambda v: sp_fft.dct(v, type=kind), x)


def _all_coefficients(cells: np.ndarray, spec: BasisSpec, grid: Grid, count: int) -> np.ndarray:
    n, L, dt = grid.n_steps, grid.horizon, grid.dt
    if spec.family == "haar":
        return _haar_analysis(cells * np.sqrt(dt))[:count]
    if spec.family == "trigonometric":
        spectrum = np.fft.fft(cells) * dt / np.sqrt(L)
        return spectrum[np.mod(_signed_indices(spec, grid, count), n)]
    if spec.family == "cosine":
        sums = _dct(cells, 2) / 2.0
        coefficients = np.sqrt(2.0 / L) * dt * sums
        coefficients[0] = dt * np.sum(cells) / np.sqrt(L)
        return coefficients[:count]
    return cells[:count] * np.sqrt(dt)


def project(f: GridFunction, spec: BasisSpec, M: int) -> BasisCoefficients:
    """c_m = l2_inner(φ_m, f) for m = 1..M."""
    _check_count(spec, f.grid, M)
    return BasisCoefficients(_all_coefficients(f.cells, spec, f.grid, M), spec)


def synthesize(coefficients: np.ndarray, spec: BasisSpec, grid: Grid) -> GridFunction:
    """Σ_m c_m φ_m on the grid for the leading len(coefficients) elements."""
    coefficients = np.asarray(coefficients)
    count = len(coefficients)
    _check_count(spec, grid, count)
    n, L, dt = grid.n_steps, grid.horizon, grid.dt
    padded = np.zeros(n, dtype=np.result_type(coefficients, float))
    padded[:min(count, n)] = coefficients[:n]
    if spec.family == "haar":
        cells = _haar_synthesis(padded) / np.sqrt(dt)
    elif spec.family == "trigonometric":
        spectrum = np.zeros(n, dtype=complex)
        np.add.at(spectrum, np.mod(_signed_indices(spec, grid, count), n), coefficients)
        cells = np.fft.ifft(spectrum) * n / np.sqrt(L)
    elif spec.family == "cosine":
        tail = np.array(padded)
        tail[0] = 0.0
        cells = padded[0] / np.sqrt(L) + np.sqrt(2.0 / L) * _dct(tail, 3) / 2.0
    else:
        cells = padded / np.sqrt(dt)
    return GridFunction.from_cells(grid, cells)


def antiderivative(e: GridFunction) -> GridFunction:
    """t_j -> ∫_0^{t_j} e dλ by cumulative left-point sums (node-tagged)."""
    running = np.cumsum(e.cells) * e.grid.dt
    return GridFunction(e.grid, np.concatenate([[0.0], running]), "node")


def _plateau(norms: np.ndarray) -> Dict[str, Any]:
    half = max(1, len(norms) // 2)
    head = float(np.max(norms[:half]))
    tail = float(np.max(norms[half:])) if len(norms) > half else head
    ratio = tail / head if head > 0 else (0.0 if tail == 0 else np.inf)
    return {"bounded": bool(ratio <= PLATEAU_RATIO), "margin": float(ratio)}


def _kernel_partial_sums(spec_phi: BasisSpec, grid: Grid, M_max: int):
    running = np.zeros(grid.n_steps, dtype=complex if spec_phi.is_complex else float)
    for m in range(1, M_max + 1):
        phi = basis_function(spec_phi, m, grid)
        running = running + phi.cells * np.conj(antiderivative(phi).values[:-1])
        yield running


def basis_kernel(spec_phi: BasisSpec, grid: Grid, M: int) -> GridFunction:
    """
    Σ_{m<=M} φ_m·conj(φ̃_m) with φ̃_m the antiderivative. The φ-series pairs
    ⟨f, φ_m⟩ with B_L[φ_m], so a complex system enters through φ_m and its
    conjugate; for a real system this is the plain product φ_m·φ̃_m.
    """
    _check_count(spec_phi, grid, M)
    for running in _kernel_partial_sums(spec_phi, grid, M):
        pass
    return GridFunction.from_cells(grid, running)


def check_basis_condition(e: GridFunction, spec_phi: BasisSpec, M_max: int) -> Dict[str, Any]:
    """
    Report-only diagnostics for the basis conditions c1, c2 and c3:
    running sup norms (L² and L¹) of the basis kernel Σ_{m<=M} φ_m·conj(φ̃_m),
    plus bounded-variation and regulated checks of e.
    """
    grid = e.grid
    _check_count(spec_phi, grid, M_max)

    l2_norms, l1_norms = [], []
    for running in _kernel_partial_sums(spec_phi, grid, M_max):
        l2_norms.append(np.sqrt(np.sum(np.abs(running) ** 2) * grid.dt))
        l1_norms.append(np.sum(np.abs(running)) * grid.dt)
    sup_l2 = np.maximum.accumulate(np.array(l2_norms))
    sup_l1 = np.maximum.accumulate(np.array(l1_norms))

    values = np.real(e.values) if e.is_real else np.abs(e.values)
    tv_fine = grid_total_variation(values)
    tv_coarse = grid_total_variation(values[::2])
    tv_finite = tv_fine <= TV_GROWTH_RATIO * tv_coarse + 1e-12 * (1.0 + tv_coarse)
    tv_margin = tv_fine / tv_coarse if tv_coarse > 0 else (1.0 if tv_fine == 0 else np.inf)

    spread = float(np.max(values) - np.min(values))
    large_jumps = int(np.sum(np.abs(np.diff(values)) > 0.25 * spread)) if spread > 0 else 0
    regulated = large_jumps <= np.sqrt(grid.n_steps)

    l2_trend, l1_trend = _plateau(sup_l2), _plateau(sup_l1)
    report = {
        "c1": {
            "holds": bool(tv_finite and l2_trend["bounded"]),
            "tv_finite": bool(tv_finite),
            "sup_bounded": l2_trend["bounded"],
            "margin": l2_trend["margin"],
        },
        "c2": {
            "holds": bool(regulated and l1_trend["bounded"]),
            "regulated": bool(regulated),
            "sup_bounded": l1_trend["bounded"],
            "margin": l1_trend["margin"],
        },
        "c3": {"holds": bool(tv_finite), "tv_finite": bool(tv_finite), "margin": float(tv_margin)},
        "sup_norms": sup_l2.tolist(),
        "sup_norms_l1": sup_l1.tolist(),
        "total_variation": tv_fine,
        "total_variation_coarse": tv_coarse,
        "large_jumps": large_jumps,
    }
    logger.info(
        f"[CONS] Basis condition check family={spec_phi.family} M_max={M_max}: "
        f"c1={report['c1']['holds']} c2={report['c2']['holds']} c3={report['c3']['holds']}"
    )
    return report


def orthonormality_defect(spec: BasisSpec, grid: Grid, M: int) -> float:
    """max |⟨φ_i, φ_j⟩ - δ_ij| over i, j <= M via the synthesis of unit vectors."""
    _check_count(spec, grid, M)
    gram = np.empty((M, M), dtype=complex)
    for i in range(1, M + 1):
        gram[i - 1] = project(basis_function(spec, i, grid), spec, M).values
    return float(np.max(np.abs(gram - np.eye(M))))
