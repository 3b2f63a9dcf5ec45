# sfc_engine/sfc.py

"""
Stochastic Fourier coefficients (e_n, dY) = ∫ conj(e_n) dY of dY = a dB + b dt
in three flavors: ogawa_phi (φ-series), ogawa_u (universal Ogawa) and skorokhod.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from sfc_engine.cons import BasisSpec, basis_function, project
from sfc_engine.grid_core import BrownianPath
from sfc_engine.integrals import a_integral_density, ogawa_correction, ogawa_ibp, ogawa_phi_integral
from sfc_engine.processes import STypeItoSpec, UnsupportedSpecError, compile_spec, realize
from utils.logger import logger

FLAVORS = ("ogawa_phi", "ogawa_u", "skorokhod")
# SFC indices cross-checked against the per-n evaluators
CROSS_CHECK_COUNT = 4


class FlavorError(ValueError):
    """Integral flavor incompatible with the integrand spec."""
    pass


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class StochasticDifferential:
    a_spec: Any
    b_spec: Any
    flavor: str = "ogawa_u"
    phi: Optional[BasisSpec] = None
    phi_M: Optional[int] = None

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise FlavorError(f"unknown integral flavor: {self.flavor}")
        if self.flavor == "ogawa_phi" and (self.phi is None or self.phi_M is None):
            raise FlavorError("flavor ogawa_phi needs an inner basis phi and its truncation phi_M")

    def check_compatible(self, grid) -> None:
        """Compile a_spec and make sure the flavor can integrate it."""
        try:
            structure = compile_spec(self.a_spec, grid)
        except UnsupportedSpecError as e:
            raise FlavorError(f"a_spec not usable with flavor {self.flavor}: {e}") from e
        if self.flavor == "skorokhod" and not structure.has_closed_form_derivative:
            raise FlavorError(
                f"flavor skorokhod needs an a_spec with closed-form Malliavin derivative, "
                f"got variant {self.a_spec.variant}"
            )


@dataclass(frozen=True, eq=False)
class SfcVector:
    values: np.ndarray
    present: np.ndarray
    basis: BasisSpec
    flavor: str
    replicate: int = 0
    seed: int = 0
    phi: Optional[BasisSpec] = None
    phi_M: Optional[int] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def N_outer(self) -> int:
        return len(self.values)

    @property
    def mask(self) -> List[int]:
        """Present indices, 1-based."""
        return (np.flatnonzero(self.present) + 1).tolist()

    def filled(self) -> np.ndarray:
        """Coefficients with absent entries read as 0."""
        return np.where(self.present, self.values, 0.0)


def mask_from_excluded(N_outer: int, excluded: Iterable[int]) -> List[int]:
    excluded = set(int(n) for n in excluded)
    keep = [n for n in range(1, N_outer + 1) if n not in excluded]
    if not keep:
        raise MaskError("mask must be cofinite and nonempty")
    return keep


def apply_mask(sfc: SfcVector, keep: Iterable[int]) -> SfcVector:
    keep = np.asarray(sorted(set(int(n) for n in keep)), dtype=int)
    if keep.size == 0:
        raise MaskError("mask must be cofinite and nonempty")
    if keep.min() < 1 or keep.max() > sfc.N_outer:
        raise MaskError(f"mask indices must lie in 1..{sfc.N_outer}")
    selected = np.zeros(sfc.N_outer, dtype=bool)
    selected[keep - 1] = True
    return replace(sfc, present=sfc.present & selected)


def _cross_check(diff: StochasticDifferential, a, path: BrownianPath, e: BasisSpec, values: np.ndarray) -> Dict[str, float]:
    grid = path.grid
    checks = {}
    count = min(CROSS_CHECK_COUNT, len(values))
    drift = values - project(a_integral_density(diff.flavor, a, path, diff.a_spec, diff.phi, diff.phi_M), e, len(values)).values
    if diff.flavor == "ogawa_u" and not isinstance(diff.a_spec, STypeItoSpec):
        deviations = [
            abs(ogawa_ibp(a, basis_function(e, n, grid).conj(), path, 0.0, grid.horizon) + drift[n - 1] - values[n - 1])
            for n in range(1, count + 1)
        ]
        checks["ibp_max_deviation"] = float(max(deviations))
    if diff.phi is not None and diff.phi_M is not None:
        deviations = [
            abs(ogawa_phi_integral(a.function * basis_function(e, n, grid).conj(), path, diff.phi, diff.phi_M)
                .converged_value + drift[n - 1] - values[n - 1])
            for n in range(1, count + 1)
        ]
        checks["series_max_deviation"] = float(max(deviations))
    return checks


def compute_sfc(
    diff: StochasticDifferential,
    path: BrownianPath,
    e: BasisSpec,
    N_outer: int,
    replicate: int = 0,
    cross_check: bool = False,
) -> SfcVector:
    """c_n = (flavored integral of conj(e_n)·a) + ⟨e_n, b⟩ for n = 1..N_outer."""
    diff.check_compatible(path.grid)
    a = realize(diff.a_spec, path)
    b = realize(diff.b_spec, path)
    density = a_integral_density(diff.flavor, a, path, diff.a_spec, diff.phi, diff.phi_M) + b.function
    values = project(density, e, N_outer).values
    diagnostics = _cross_check(diff, a, path, e, values) if cross_check else {}
    if diagnostics:
        logger.debug(f"[SFC] Cross-check seed={path.seed}: {diagnostics}")
    return SfcVector(
        values=values,
        present=np.ones(N_outer, dtype=bool),
        basis=e,
        flavor=diff.flavor,
        replicate=replicate,
        seed=path.seed,
        phi=diff.phi,
        phi_M=diff.phi_M,
        diagnostics=diagnostics,
    )


def skorokhod_to_ogawa(sfc: SfcVector, a_spec, path: BrownianPath, e: BasisSpec) -> SfcVector:
    """SFC-S -> SFC-O_u by adding ⟨e_n, D_t a(t) + ½f(t)⟩."""
    if sfc.flavor != "skorokhod":
        raise FlavorError(f"expected a skorokhod SFC vector, got {sfc.flavor}")
    shift = project(ogawa_correction(a_spec, path), e, sfc.N_outer).values
    return replace(sfc, values=sfc.values + shift, flavor="ogawa_u")


# -- Serialization -------------------------------------------------------------

def sfc_frame(vectors: Iterable[SfcVector]) -> pd.DataFrame:
    """Long format: replicate, n, re, im, present."""
    frames = [
        pd.DataFrame({
            "replicate": v.replicate,
            "n": np.arange(1, v.N_outer + 1),
            "re": np.real(v.values),
            "im": np.imag(v.values),
            "present": v.present.astype(int),
        })
        for v in vectors
    ]
    if not frames:
        return pd.DataFrame(columns=["replicate", "n", "re", "im", "present"])
    return pd.concat(frames, ignore_index=True)


def sfc_records(vectors: Iterable[SfcVector]) -> List[Dict[str, Any]]:
    """One JSON-ready record per replicate."""
    return [
        {
            "replicate": v.replicate,
            "seed": v.seed,
            "flavor": v.flavor,
            "basis": v.basis.family,
            "coefficients": [
                {"n": n, "re": float(np.real(c)), "im": float(np.imag(c)), "present": bool(p)}
                for n, (c, p) in enumerate(zip(v.values, v.present), start=1)
            ],
        }
        for v in vectors
    ]
