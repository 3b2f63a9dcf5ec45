# controller/scenario_config.py

import os
from typing import Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from sfc_engine.cons import BasisError, BasisSpec, max_index
from sfc_engine.grid_core import Grid, GridError
from sfc_engine.processes import (
    DeterministicSpec,
    FunctionSpec,
    RandomFunctionSpec,
    UnsupportedSpecError,
    compile_spec,
    constant,
)
from sfc_engine.reconstruct import EstimatorError, LilParams
from sfc_engine.sfc import FlavorError, StochasticDifferential
from utils.file_parser import ConfigParsingError, parse_json_document, read_config_text
from utils.logger import logger

load_dotenv()

DEFAULT_THREADS = int(os.getenv("SFCLAB_THREADS", "1"))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    L: float = 1.0
    n_steps: int = 2 ** 10

    def build(self) -> Grid:
        return Grid(self.L, self.n_steps)


class OuterBasisConfig(_Section):
    family: Literal["haar", "trigonometric", "cosine", "indicator"] = "haar"
    ordering: Literal["natural", "positive_first"] = "natural"
    N_outer: Optional[int] = None      # None -> every representable element
    excluded: List[int] = Field(default_factory=list)


class InnerBasisConfig(_Section):
    family: Literal["haar", "trigonometric", "cosine", "indicator"] = "haar"
    ordering: Literal["natural", "positive_first"] = "natural"
    M_max: Optional[int] = None


class IdentificationConfig(_Section):
    sample_count: int = 16
    sample_times: List[float] = Field(default_factory=list)
    local_average_ladder: Tuple[int, ...] = (4, 16, 64)
    hit_tolerance: float = 0.2
    hit_floor: float = 0.1
    drift_perturbation: Optional[FunctionSpec] = None
    extra_mask: List[int] = Field(default_factory=list)


class OracleConfig(_Section):
    # labelled integrands checked alongside a_spec; metric names gain "_<label>"
    specs: Dict[str, RandomFunctionSpec] = Field(default_factory=dict)
    universality_bases: List[InnerBasisConfig] = Field(default_factory=list)
    ito_nisio_M: List[int] = Field(default_factory=list)
    series_tolerance: float = 1e-2


class CalibrationConfig(_Section):
    t: Optional[float] = None


class DiagnoseConfig(_Section):
    functions: List[FunctionSpec] = Field(default_factory=list)
    M_max: Optional[int] = None


class ReplicationConfig(_Section):
    count: int = Field(10, ge=1)
    base_seed: int = Field(0, ge=0)
    parallelism: Optional[int] = Field(None, ge=1)


class OutputConfig(_Section):
    directory: str = "results"
    formats: List[Literal["csv", "json", "sfc"]] = Field(default_factory=lambda: ["csv", "json"])


class ToleranceConfig(_Section):
    stat: Literal["mean", "rms", "q05", "q50", "q95", "max"] = "mean"
    min: Optional[float] = None
    max: Optional[float] = None


class ScenarioConfig(_Section):
    name: str = "scenario"
    description: str = ""
    grid: GridConfig = Field(default_factory=GridConfig)
    a_spec: RandomFunctionSpec = DeterministicSpec(g=constant(1.0))
    b_spec: RandomFunctionSpec = DeterministicSpec(g=constant(0.0))
    flavor: Literal["ogawa_phi", "ogawa_u", "skorokhod"] = "ogawa_u"
    outer: OuterBasisConfig = Field(default_factory=OuterBasisConfig)
    inner: InnerBasisConfig = Field(default_factory=InnerBasisConfig)
    lil: LilParams = Field(default_factory=LilParams)
    identification: IdentificationConfig = Field(default_factory=IdentificationConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    diagnose: DiagnoseConfig = Field(default_factory=DiagnoseConfig)
    replication: ReplicationConfig = Field(default_factory=ReplicationConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    tolerances: Dict[str, ToleranceConfig] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_preconditions(self):
        try:
            grid = self.grid.build()
        except GridError as e:
            raise ValueError(f"grid: {e}")

        outer = self.outer_basis()
        inner = self.inner_basis()
        for field_name, spec, count in (("outer.N_outer", outer, self.outer.N_outer), ("inner.M_max", inner, self.inner.M_max)):
            if count is not None and not 1 <= count <= max_index(spec, grid):
                raise ValueError(
                    f"{field_name}: basis finer than grid ({count} > {max_index(spec, grid)} representable "
                    f"{spec.family} elements)"
                )

        N_outer = self.N_outer()
        if any(not 1 <= n <= N_outer for n in self.outer.excluded):
            raise ValueError(f"outer.excluded: indices must lie in 1..{N_outer}")
        if len(set(self.outer.excluded)) >= N_outer:
            raise ValueError("outer.excluded: mask must be cofinite and nonempty")

        specs = [("a_spec", self.a_spec), ("b_spec", self.b_spec)]
        specs += [(f"oracle.specs.{label}", spec) for label, spec in self.oracle.specs.items()]
        for field_name, spec in specs:
            try:
                compile_spec(spec, grid)
            except (GridError, UnsupportedSpecError) as e:
                raise ValueError(f"{field_name}: {e}")
        try:
            self.differential().check_compatible(grid)
        except FlavorError as e:
            raise ValueError(f"flavor/a_spec: flavor '{self.flavor}' cannot integrate a_spec ({e})")

        try:
            self.lil.widths(grid)
        except EstimatorError as e:
            raise ValueError(f"lil.h_min: {e}")
        return self

    def build_grid(self) -> Grid:
        return self.grid.build()

    def outer_basis(self) -> BasisSpec:
        return BasisSpec(self.outer.family, self.grid.L, self.outer.ordering)

    def inner_basis(self) -> BasisSpec:
        return BasisSpec(self.inner.family, self.grid.L, self.inner.ordering)

    def N_outer(self) -> int:
        return self.outer.N_outer or max_index(self.outer_basis(), self.build_grid())

    def M_max(self) -> int:
        return self.inner.M_max or max_index(self.inner_basis(), self.build_grid())

    def differential(self) -> StochasticDifferential:
        phi = self.inner_basis() if self.flavor == "ogawa_phi" else None
        return StochasticDifferential(
            self.a_spec,
            self.b_spec,
            self.flavor,
            phi,
            self.M_max() if phi is not None else None,
        )

    def workers(self) -> int:
        return self.replication.parallelism or DEFAULT_THREADS


def _format_errors(error: ValidationError) -> List[str]:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<document>"
        message = item["msg"].removeprefix("Value error, ")
        lines.append(f"{location}: {message}")
    return lines


def parse_config(text: str) -> ScenarioConfig:
    """Validate a JSON scenario; every precondition is checked before any sampling."""
    document = parse_json_document(text)
    try:
        config = ScenarioConfig.model_validate(document)
    except ValidationError as e:
        lines = _format_errors(e)
        raise ConfigParsingError("invalid scenario:\n  " + "\n  ".join(lines), lines)
    except (BasisError, GridError) as e:
        raise ConfigParsingError(f"invalid scenario: {e}")
    logger.info(f"[CONFIG] Scenario '{config.name}' validated: n_steps={config.grid.n_steps} flavor={config.flavor}")
    return config


def load_config(file_path: str) -> ScenarioConfig:
    return parse_config(read_config_text(file_path))
