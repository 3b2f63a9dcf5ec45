# sfc_engine/integrals.py

"""
Noncausal stochastic integrals on the grid.

- Ogawa φ-integral as the series Σ_m ⟨φ_m, f⟩·B_L[φ_m] with its partial sums.
- Integration by parts for finite-variation integrands (exact u-integral oracle).
- Skorokhod integrals and the Skorokhod + trace representation, read off the
  compiled IntegrandStructure of a spec.
- Itô–Nisio partial sums s -> Σ_m B_L[φ_m]·⟨φ_m, e·1_[0,s)⟩.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, Union

import numpy as np

from sfc_engine.cons import BasisSpec, max_index, project, synthesize
from sfc_engine.grid_core import (
    BrownianPath,
    GridError,
    GridFunction,
    stieltjes_integral,
    wiener_process,
)
from sfc_engine.processes import (
    IntegrandStructure,
    RealizedFunction,
    STypeItoSpec,
    UnsupportedSpecError,
    compile_spec,
)
from utils.logger import logger

Integrand = Union[RealizedFunction, GridFunction]

# series tail tolerance used when a caller gives none
DEFAULT_SERIES_TOLERANCE = 1e-2


def _as_function(f: Integrand) -> GridFunction:
    return f.function if isinstance(f, RealizedFunction) else f


@dataclass(frozen=True, eq=False)
class SeriesResult:
    partial_sums: np.ndarray
    converged_value: complex
    convergence_flag: bool
    tail_estimate: float
    spec: BasisSpec

    @property
    def M_max(self) -> int:
        return len(self.partial_sums)


def wiener_coefficients(path: BrownianPath, phi: BasisSpec, M: int) -> np.ndarray:
    """B_L[φ_m] = Σ_j φ_m(t_j)·ΔB_{j+1} for m = 1..M."""
    coefficients = project(path.noise_density, phi, M).values
    return np.conj(coefficients) if phi.is_complex else coefficients


def smoothed_noise(path: BrownianPath, phi: BasisSpec, M: int) -> GridFunction:
    """
    G_M(t) = Σ_{m<=M} B_L[φ_m]·conj(φ_m(t)), so that the M-th partial sum of the
    φ-series of f is Σ_j f(t_j)·G_M(t_j)·dt. For Haar with M = n_steps, G_M is the
    white-noise density ΔB/dt itself.
    """
    weights = wiener_coefficients(path, phi, M)
    density = synthesize(np.conj(weights), phi, path.grid).conj()
    return density if phi.is_complex else density.with_values(np.real(density.values))


def _tail_fluctuation(partial_sums: np.ndarray) -> float:
    start = (3 * len(partial_sums)) // 4
    tail = partial_sums[start:]
    return float(np.max(np.abs(tail - partial_sums[-1]))) if len(tail) else 0.0


def ogawa_phi_integral(
    f: Integrand,
    path: BrownianPath,
    phi: BasisSpec,
    M_max: int,
    tolerance: float = DEFAULT_SERIES_TOLERANCE,
) -> SeriesResult:
    function = _as_function(f)
    function.grid.check_same(path.grid)
    coefficients = project(function, phi, M_max).values
    weights = wiener_coefficients(path, phi, M_max)
    partial_sums = np.cumsum(coefficients * weights)
    tail = _tail_fluctuation(partial_sums)
    converged = tail < tolerance
    if not converged:
        logger.debug(f"[SERIES] {phi.family}/{phi.ordering} series not settled: tail={tail:.3e} M_max={M_max}")
    return SeriesResult(partial_sums, complex(partial_sums[-1]), bool(converged), tail, phi)


def ogawa_ibp(a: Integrand, e: GridFunction, path: BrownianPath, s: float, t: float) -> complex:
    """
    a(t-)·B_t[e] - a(s+)·B_s[e] - ∫_(s,t) B_u[e] da(u) for a real finite-variation a.
    On the grid a(t-) is the value of the cell left of t and a(s+) the cell value at s.
    """
    function = _as_function(a)
    function.grid.check_same(path.grid)
    e.grid.check_same(path.grid)
    grid = function.grid
    i, k = grid.node_index(s), grid.node_index(t)
    if i > k:
        raise GridError(f"interval endpoints reversed: [{s}, {t}]")
    if i == k:
        return 0j
    values = function.real_values()
    running = wiener_process(e, path)
    boundary = values[k - 1] * running.values[k] - values[i] * running.values[i]
    return complex(boundary - stieltjes_integral(running, function, s, t))


def ogawa_sum(a: Integrand, e: GridFunction, path: BrownianPath) -> complex:
    """Left-point sum Σ_j e(t_j)·a(t_j)·ΔB_{j+1}; what ogawa_ibp telescopes to over [0, L]."""
    function = _as_function(a)
    return complex(np.sum(e.cells * function.cells * path.increments))


def universality_check(
    f: Integrand,
    path: BrownianPath,
    specs: Iterable[BasisSpec],
    M_max: int,
    tolerance: float = DEFAULT_SERIES_TOLERANCE,
) -> Dict[str, Any]:
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("universality check needs at least two bases")
    function = _as_function(f)
    grid = function.grid

    results = {}
    for spec in specs:
        M = min(M_max, max_index(spec, grid))
        series = ogawa_phi_integral(function, path, spec, M, tolerance)
        results[f"{spec.family}/{spec.ordering}"] = {
            "value": series.converged_value,
            "M": M,
            "converged": series.convergence_flag,
            "tail_estimate": series.tail_estimate,
        }

    values = np.array([entry["value"] for entry in results.values()])
    spread = float(np.max(np.abs(values[:, None] - values[None, :])))
    report = {"values": results, "spread": spread, "all_converged": all(r["converged"] for r in results.values())}

    if function.is_real:
        oracle = ogawa_ibp(function, GridFunction.constant(grid, 1.0), path, 0.0, grid.horizon)
        report["ibp_value"] = oracle
        report["ibp_deviation"] = float(np.max(np.abs(values - oracle)))
    logger.info(f"[SERIES] Universality check over {len(specs)} bases: spread={spread:.3e}")
    return report


# -- Skorokhod and trace forms ---------------------------------------------------

def _structure(spec, path: BrownianPath) -> IntegrandStructure:
    structure = compile_spec(spec, path.grid)
    if not structure.has_closed_form_derivative:
        raise UnsupportedSpecError("no closed-form derivative: Skorokhod integral needs a smooth path functional")
    return structure


def _skorokhod(structure: IntegrandStructure, path: BrownianPath, e: GridFunction) -> complex:
    increments = path.increments
    dt = path.grid.dt
    weights = e.cells
    value = np.sum(weights * structure.base[:-1] * increments)
    for term in structure.terms:
        # B_L[e·u]·F(B_L[v]) - F'(B_L[v])·⟨conj(e·u), v⟩
        value += term.value(path) * np.sum(weights * term.u[:-1] * increments)
        value -= term.derivative(path) * np.sum(weights * term.u[:-1] * term.v[:-1]) * dt
    if structure.adapted is not None:
        running = structure.running(structure.adapted, path)
        value += np.sum(weights * running[:-1] * increments)
    for term in structure.wiener_terms:
        # G·Σ e·B_t[u]·ΔB - G'·Σ e·v·B_t[u]·dt
        running = structure.running(term.u, path)
        value += term.value(path) * np.sum(weights * running[:-1] * increments)
        value -= term.derivative(path) * np.sum(weights * term.v[:-1] * running[:-1]) * dt
    return complex(value)


def skorokhod_integral(spec, path: BrownianPath, e: GridFunction) -> complex:
    """δ(e·a) for a spec with closed-form chaos structure."""
    e.grid.check_same(path.grid)
    return _skorokhod(_structure(spec, path), path, e)


def trace_density(spec, path: BrownianPath) -> GridFunction:
    """t -> D_t a(t), the integrand of tr(D a), off the diagonal jump of an S-type kernel."""
    return GridFunction(path.grid, _structure(spec, path).trace_density(path))


def _ogawa_correction(structure: IntegrandStructure, path: BrownianPath) -> np.ndarray:
    return structure.trace_density(path) + 0.5 * structure.diffusion(path)


def ogawa_correction(spec, path: BrownianPath) -> GridFunction:
    """Ogawa minus Skorokhod density: D_t a(t) + ½f(t), f the S-type diffusion (0 otherwise)."""
    return GridFunction(path.grid, _ogawa_correction(_structure(spec, path), path))


def ogawa_via_trace(spec, path: BrownianPath, e: GridFunction) -> complex:
    """
    δ(e·a) + ∫ e(t)·(D_t a(t) + ½f(t)) dt. For locally absolutely continuous a the
    diagonal is ∫_0^t D_t a'(s) ds + D_t a(0), which is how the compiled structure
    stores it; for S-type a the ½f term is the diagonal jump of its kernel.
    """
    e.grid.check_same(path.grid)
    structure = _structure(spec, path)
    correction = np.sum(e.cells * _ogawa_correction(structure, path)[:-1]) * path.grid.dt
    return _skorokhod(structure, path, e) + complex(correction)


def s_type_decomposition(spec: STypeItoSpec, path: BrownianPath, e: GridFunction) -> Dict[str, complex]:
    """
    Skorokhod part, ½∫ e·f dt and the derivative part
    ∫ e(t)(∫_0^t D_t f δB + ∫_0^t D_t h ds + D_t a(0)) dt.
    """
    if not isinstance(spec, STypeItoSpec):
        raise UnsupportedSpecError(f"s_type decomposition needs an s_type_ito spec, got {spec.variant}")
    e.grid.check_same(path.grid)
    structure = _structure(spec, path)
    dt = path.grid.dt
    components = {
        "skorokhod_part": _skorokhod(structure, path, e),
        "half_f_part": complex(0.5 * np.sum(e.cells * structure.diffusion(path)[:-1]) * dt),
        "derivative_part": complex(np.sum(e.cells * structure.trace_density(path)[:-1]) * dt),
    }
    components["total"] = sum(components.values())
    return components


def stratonovich_sum(a: Integrand, e: GridFunction, path: BrownianPath) -> complex:
    """Symmetric Riemann sum Σ_j e(t_j)·(a(t_j) + a(t_{j+1}))/2·ΔB_{j+1}."""
    values = _as_function(a).values
    midpoint = 0.5 * (values[:-1] + values[1:])
    return complex(np.sum(e.cells * midpoint * path.increments))


def ito_nisio_partial(e: GridFunction, path: BrownianPath, phi: BasisSpec, M: int):
    """
    s -> Σ_{m<=M} B_L[φ_m]·⟨φ_m, e·1_[0,s)⟩ at every node, and its sup distance to s -> B_s[e].
    """
    e.grid.check_same(path.grid)
    density = smoothed_noise(path, phi, M)
    running = np.cumsum(e.cells * density.cells) * path.grid.dt
    partial = GridFunction(path.grid, np.concatenate([[0.0], running]), "node")
    exact = wiener_process(e, path)
    sup_error = float(np.max(np.abs(partial.values - exact.values)))
    return partial, sup_error


# -- Whole SFC vectors in one projection -----------------------------------------

def a_integral_density(flavor: str, a: Integrand, path: BrownianPath, spec=None,
                       phi: BasisSpec = None, phi_M: int = None) -> GridFunction:
    """
    y with ⟨e_n, y⟩ equal to the flavored integral of conj(e_n)·a for every n:
      ogawa_u      a·ΔB/dt  (+ ½f for S-type specs with diffusion f)
      skorokhod    a·ΔB/dt - D_t a(t)
      ogawa_phi    a·G_M with G_M the φ-smoothed noise
    """
    function = _as_function(a)
    if flavor == "ogawa_phi":
        if phi is None or phi_M is None:
            raise ValueError("ogawa_phi needs an inner basis and its truncation M")
        return function * smoothed_noise(path, phi, phi_M)

    density = function * path.noise_density
    if flavor == "ogawa_u":
        if spec is not None:
            structure = compile_spec(spec, path.grid)
            if structure.has_diffusion:
                density = density + GridFunction(path.grid, 0.5 * structure.diffusion(path))
        return density
    if flavor == "skorokhod":
        if spec is None:
            raise UnsupportedSpecError("skorokhod flavor needs the integrand spec for its Malliavin trace")
        return density - trace_density(spec, path)
    raise ValueError(f"unknown integral flavor: {flavor}")

