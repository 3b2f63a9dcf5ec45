# sfc_engine/processes.py

"""
Random functions a(t, ω), b(t, ω) with known analytic structure.

Every supported variant compiles to one IntegrandStructure

    a(t) = u_0(t) + Σ_r u_r(t)·F_r(B_L[v_r]) + B_t[w] + Σ_q G_q(B_L[v_q])·B_t[w_q]

with F_r ∈ {x, sin x, cos x, |x|}, G_q smooth and B_t[w] an adapted Wiener
integral. The last sum only comes from S-type processes whose diffusion f is
itself random: ∫_0^t u·G(B_L[v]) δB = G·B_t[u] - G'·∫_0^t u·v ds. Realization,
Malliavin kernels, Skorokhod integrals and trace densities are all read off
this structure.
"""

from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from sfc_engine.cons import BasisSpec, basis_function
from sfc_engine.grid_core import (
    BrownianPath,
    Grid,
    GridError,
    GridFunction,
    wiener_process,
)
from utils.logger import logger


class UnsupportedSpecError(ValueError):
    """Spec outside the closed-form chaos structure."""
    pass


# -- Deterministic function library ---------------------------------------------

class FunctionSpec(BaseModel):
    """A deterministic function of t, evaluated at the grid nodes."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["constant", "ramp", "sine", "cosine", "step", "indicator", "sawtooth", "basis", "power"]
    value: float = 0.0
    slope: float = 1.0
    intercept: float = 0.0
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    breakpoints: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()
    start: float = 0.0
    end: Optional[float] = None
    period: Optional[float] = None
    exponent: float = 1.0
    family: Literal["haar", "cosine", "indicator"] = "haar"
    index: int = 1

    @model_validator(mode="after")
    def _check_step(self):
        if self.kind == "step" and len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("step needs len(values) == len(breakpoints) + 1")
        if self.kind == "step" and list(self.breakpoints) != sorted(self.breakpoints):
            raise ValueError("step breakpoints must be increasing")
        return self

    def to_grid(self, grid: Grid) -> GridFunction:
        t, L = grid.node_times, grid.horizon
        if self.kind == "constant":
            values = np.full_like(t, self.value)
        elif self.kind == "ramp":
            values = self.slope * t + self.intercept
        elif self.kind == "sine":
            values = self.amplitude * np.sin(2 * np.pi * self.frequency * t / L + self.phase)
        elif self.kind == "cosine":
            values = self.amplitude * np.cos(2 * np.pi * self.frequency * t / L + self.phase)
        elif self.kind == "step":
            values = np.asarray(self.values, dtype=float)[np.searchsorted(self.breakpoints, t, side="right")]
        elif self.kind == "indicator":
            end = L if self.end is None else self.end
            values = self.amplitude * ((t >= self.start) & (t < end)).astype(float)
        elif self.kind == "sawtooth":
            period = L if self.period is None else self.period
            values = self.amplitude * np.mod(t, period) / period
        elif self.kind == "power":
            values = self.amplitude * t ** self.exponent
        else:
            return basis_function(BasisSpec(self.family, L), self.index, grid)
        return GridFunction(grid, values)


def constant(value: float) -> FunctionSpec:
    return FunctionSpec(kind="constant", value=value)


# -- Path functionals F(ω) --------------------------------------------------------

class FunctionalSpec(BaseModel):
    """F(ω) ∈ {B(τ), sin(B(τ)), |B(τ)|, 1}; τ defaults to the horizon."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Literal["B", "sin_B", "abs_B", "one"] = "B"
    time: Optional[float] = None

    @property
    def kind(self) -> str:
        return {"B": "linear", "sin_B": "sine", "abs_B": "abs", "one": "one"}[self.name]

    def kernel(self, grid: Grid) -> np.ndarray:
        """v with B(τ) = B_L[v]: the indicator of [0, τ) in left-point form."""
        tau = grid.horizon if self.time is None else self.time
        cutoff = grid.node_index(tau)
        values = np.zeros(grid.n_steps + 1)
        values[:cutoff] = 1.0
        return values


# -- Random function variants -----------------------------------------------------

class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DeterministicSpec(_Spec):
    variant: Literal["deterministic"] = "deterministic"
    g: FunctionSpec


class FvAnticipativeSpec(_Spec):
    """a(t, ω) = g(t)·F(ω)."""
    variant: Literal["fv_anticipative"] = "fv_anticipative"
    g: FunctionSpec
    functional: FunctionalSpec = FunctionalSpec()


class JumpSpec(_Spec):
    time: float
    size: FunctionalSpec = FunctionalSpec(name="one")
    scale: float = 1.0


class StepRandomSpec(_Spec):
    """a(t) = initial + Σ_i scale_i·F_i(ω)·1{t >= τ_i}."""
    variant: Literal["step_random"] = "step_random"
    initial: float = 0.0
    jumps: Tuple[JumpSpec, ...] = ()


class ChaosTermSpec(_Spec):
    u: FunctionSpec
    v: FunctionSpec


class FirstChaosSpec(_Spec):
    """a(t) = u_0(t) + Σ_r u_r(t)·B_L[v_r]."""
    variant: Literal["first_chaos"] = "first_chaos"
    base: FunctionSpec = constant(0.0)
    terms: Tuple[ChaosTermSpec, ...] = ()


class STypeItoSpec(_Spec):
    """a(t) = ∫_0^t f δB + ∫_0^t h ds + a(0)."""
    variant: Literal["s_type_ito"] = "s_type_ito"
    f: "RandomFunctionSpec"
    h: "RandomFunctionSpec" = DeterministicSpec(g=constant(0.0))
    a0: "RandomFunctionSpec" = DeterministicSpec(g=constant(0.0))


class LocallyAcSpec(_Spec):
    """a(t) = a(0) + ∫_0^t a'(s) ds."""
    variant: Literal["locally_ac"] = "locally_ac"
    a0: "RandomFunctionSpec"
    derivative: "RandomFunctionSpec"


RandomFunctionSpec = Annotated[
    Union[DeterministicSpec, FvAnticipativeSpec, StepRandomSpec, FirstChaosSpec, STypeItoSpec, LocallyAcSpec],
    Field(discriminator="variant"),
]

STypeItoSpec.model_rebuild()
LocallyAcSpec.model_rebuild()


# -- Compiled structure --------------------------------------------------------

_FUNCTIONAL_VALUE = {"linear": lambda x: x, "sine": np.sin, "cosine": np.cos, "abs": np.abs}
_FUNCTIONAL_DERIVATIVE = {"linear": np.ones_like, "sine": np.cos, "cosine": lambda x: -np.sin(x)}
# kind of F' for a random diffusion factor F; None when F' is the constant 1
_DERIVATIVE_KIND = {"linear": None, "sine": "cosine"}


@dataclass(frozen=True, eq=False)
class FunctionalTerm:
    u: np.ndarray
    v: np.ndarray
    kind: str

    def argument(self, path: BrownianPath) -> float:
        return float(np.sum(self.v[:-1] * path.increments))

    def value(self, path: BrownianPath) -> float:
        return float(_FUNCTIONAL_VALUE[self.kind](self.argument(path)))

    def derivative(self, path: BrownianPath) -> float:
        if self.kind not in _FUNCTIONAL_DERIVATIVE:
            raise UnsupportedSpecError(f"no closed-form derivative for functional kind '{self.kind}'")
        return float(_FUNCTIONAL_DERIVATIVE[self.kind](np.array(self.argument(path))))


@dataclass(frozen=True, eq=False)
class IntegrandStructure:
    """
    `terms` hold u·F(B_L[v]); `wiener_terms` hold G(B_L[v])·B_t[u], the random
    part of an S-type diffusion f = adapted + Σ u·G(B_L[v]).
    """
    grid: Grid
    base: np.ndarray
    terms: Tuple[FunctionalTerm, ...] = ()
    adapted: Optional[np.ndarray] = None
    wiener_terms: Tuple[FunctionalTerm, ...] = ()

    @property
    def has_diffusion(self) -> bool:
        return self.adapted is not None or bool(self.wiener_terms)

    @property
    def is_deterministic(self) -> bool:
        return not self.terms and not self.has_diffusion

    @property
    def is_adapted(self) -> bool:
        return not self.terms and not self.wiener_terms

    @property
    def has_closed_form_derivative(self) -> bool:
        return all(term.kind in _FUNCTIONAL_DERIVATIVE for term in self.terms + self.wiener_terms)

    def running(self, w: np.ndarray, path: BrownianPath) -> np.ndarray:
        """Node values of t -> B_t[w]."""
        return np.real(wiener_process(GridFunction(self.grid, w), path).values)

    def realize(self, path: BrownianPath) -> np.ndarray:
        values = np.array(self.base, dtype=float)
        for term in self.terms:
            values = values + term.u * term.value(path)
        if self.adapted is not None:
            values = values + self.running(self.adapted, path)
        for term in self.wiener_terms:
            values = values + term.value(path) * self.running(term.u, path)
        return values

    def diffusion(self, path: BrownianPath) -> np.ndarray:
        """The realized S-type diffusion f(t); zero when a has no stochastic-integral part."""
        f = np.zeros(self.grid.n_steps + 1) if self.adapted is None else np.array(self.adapted, dtype=float)
        for term in self.wiener_terms:
            f = f + term.value(path) * term.u
        return f

    def trace_density(self, path: BrownianPath) -> np.ndarray:
        """
        Diagonal t -> D_t a(t) without the jump of the adapted kernel on the
        diagonal; that jump contributes ½f(t) to the Ogawa integral separately.
        """
        density = np.zeros(self.grid.n_steps + 1)
        for term in self.terms:
            density = density + term.derivative(path) * term.u * term.v
        for term in self.wiener_terms:
            density = density + term.derivative(path) * term.v * self.running(term.u, path)
        return density

    def shifted(self, offset: np.ndarray) -> "IntegrandStructure":
        return IntegrandStructure(self.grid, self.base + offset, self.terms, self.adapted, self.wiener_terms)


def _node_antiderivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(values[:-1]) * grid.dt])


def _compile(spec, grid: Grid) -> IntegrandStructure:
    zero = np.zeros(grid.n_steps + 1)
    if isinstance(spec, DeterministicSpec):
        return IntegrandStructure(grid, np.real(spec.g.to_grid(grid).values))

    if isinstance(spec, FvAnticipativeSpec):
        g = np.real(spec.g.to_grid(grid).values)
        if spec.functional.kind == "one":
            return IntegrandStructure(grid, g)
        return IntegrandStructure(grid, zero, (FunctionalTerm(g, spec.functional.kernel(grid), spec.functional.kind),))

    if isinstance(spec, StepRandomSpec):
        base = np.full(grid.n_steps + 1, spec.initial)
        terms = []
        for jump in spec.jumps:
            u = np.zeros(grid.n_steps + 1)
            u[grid.node_index(jump.time):] = jump.scale
            if jump.size.kind == "one":
                base = base + u
            else:
                terms.append(FunctionalTerm(u, jump.size.kernel(grid), jump.size.kind))
        return IntegrandStructure(grid, base, tuple(terms))

    if isinstance(spec, FirstChaosSpec):
        terms = tuple(
            FunctionalTerm(np.real(term.u.to_grid(grid).values), np.real(term.v.to_grid(grid).values), "linear")
            for term in spec.terms
        )
        return IntegrandStructure(grid, np.real(spec.base.to_grid(grid).values), terms)

    if isinstance(spec, (STypeItoSpec, LocallyAcSpec)):
        derivative = _compile(spec.h if isinstance(spec, STypeItoSpec) else spec.derivative, grid)
        initial = _compile(spec.a0, grid)
        if derivative.has_diffusion or initial.has_diffusion:
            raise UnsupportedSpecError(
                f"no closed-form derivative: {spec.variant} needs drift and initial value of chaos order <= 1"
            )
        base = initial.base[0] + _node_antiderivative(derivative.base, grid)
        terms = [FunctionalTerm(_node_antiderivative(term.u, grid), term.v, term.kind) for term in derivative.terms]
        terms += [FunctionalTerm(np.full(grid.n_steps + 1, term.u[0]), term.v, term.kind) for term in initial.terms]
        adapted, wiener_terms = None, []
        if isinstance(spec, STypeItoSpec):
            diffusion = _compile(spec.f, grid)
            if diffusion.has_diffusion:
                raise UnsupportedSpecError("no closed-form derivative: s_type_ito needs a diffusion f of chaos order <= 1")
            adapted = diffusion.base
            for term in diffusion.terms:
                if term.kind not in _DERIVATIVE_KIND:
                    raise UnsupportedSpecError(
                        f"no closed-form derivative: s_type_ito diffusion functional '{term.kind}' is not smooth"
                    )
                wiener_terms.append(term)
                # ∫_0^t u·G δB = G·B_t[u] - G'·∫_0^t u·v ds
                correction = -_node_antiderivative(term.u * term.v, grid)
                if _DERIVATIVE_KIND[term.kind] is None:
                    base = base + correction
                else:
                    terms.append(FunctionalTerm(correction, term.v, _DERIVATIVE_KIND[term.kind]))
        return IntegrandStructure(grid, base, tuple(terms), adapted, tuple(wiener_terms))

    raise UnsupportedSpecError(f"unsupported random function spec: {type(spec).__name__}")


def compile_spec(spec, grid: Grid) -> IntegrandStructure:
    return _compile(spec, grid)


# -- Realizations --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RealizedFunction:
    function: GridFunction
    spec: object
    seed: int

    @property
    def grid(self) -> Grid:
        return self.function.grid

    @property
    def values(self) -> np.ndarray:
        return self.function.values


def realize(spec, path: BrownianPath) -> RealizedFunction:
    """Sample a(·, ω) on the grid for the path's ω (left-point convention)."""
    structure = compile_spec(spec, path.grid)
    values = structure.realize(path)
    return RealizedFunction(GridFunction(path.grid, values), spec, path.seed)


def _real_realization(r: RealizedFunction) -> np.ndarray:
    if not r.function.is_real:
        raise GridError("total variation needs a real-valued realization")
    return np.real(r.values)


def jordan_decompose(r: RealizedFunction) -> Tuple[GridFunction, GridFunction]:
    """Cumulative positive and negative increment sums (v_+, v_-), both non-decreasing."""
    increments = np.diff(_real_realization(r))
    v_plus = np.concatenate([[0.0], np.cumsum(np.maximum(increments, 0.0))])
    v_minus = np.concatenate([[0.0], np.cumsum(np.maximum(-increments, 0.0))])
    return GridFunction(r.grid, v_plus, "node"), GridFunction(r.grid, v_minus, "node")


def total_variation(r: RealizedFunction, up_to: Optional[float] = None) -> float:
    """v_tv(up_to) = v_+(up_to) + v_-(up_to) on the grid."""
    j = r.grid.n_steps if up_to is None else r.grid.node_index(up_to)
    v_plus, v_minus = jordan_decompose(r)
    return float(v_plus.values[j] + v_minus.values[j])


# -- Malliavin derivatives ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MalliavinKernel:
    """
    K(i, j) = D_{t_i} a(t_j) held in factored form:
    Σ_r left_r(t_i)·right_r(t_j) + f(t_i)·1{i < j}.
    """
    grid: Grid
    left: np.ndarray     # (R, n+1): F_r'·v_r
    right: np.ndarray    # (R, n+1): u_r, or B_t[u_r] for the random-diffusion terms
    adapted: Optional[np.ndarray] = None

    @property
    def is_zero(self) -> bool:
        no_terms = self.left.size == 0 or not np.any(self.left) or not np.any(self.right)
        return no_terms and (self.adapted is None or not np.any(self.adapted))

    def row(self, i: int) -> np.ndarray:
        """s_j -> D_{t_i} a(s_j)."""
        values = self.left[:, i] @ self.right if self.left.size else np.zeros(self.grid.n_steps + 1)
        if self.adapted is not None:
            values = values + self.adapted[i] * (np.arange(self.grid.n_steps + 1) > i)
        return values

    def at(self, i: int, j: int) -> float:
        return float(self.row(i)[j])

    def matrix(self) -> np.ndarray:
        size = self.grid.n_steps + 1
        dense = self.left.T @ self.right if self.left.size else np.zeros((size, size))
        if self.adapted is not None:
            dense = dense + self.adapted[:, None] * np.triu(np.ones((size, size)), k=1)
        return dense

    def diagonal(self) -> np.ndarray:
        return np.sum(self.left * self.right, axis=0) if self.left.size else np.zeros(self.grid.n_steps + 1)


def malliavin_derivative(spec, path: BrownianPath) -> MalliavinKernel:
    structure = compile_spec(spec, path.grid)
    if not structure.has_closed_form_derivative:
        raise UnsupportedSpecError("no closed-form derivative for a non-smooth path functional")
    size = path.grid.n_steps + 1
    factors = [(term.derivative(path) * term.v, term.u) for term in structure.terms]
    factors += [(term.derivative(path) * term.v, structure.running(term.u, path)) for term in structure.wiener_terms]
    if factors:
        left = np.stack([pair[0] for pair in factors])
        right = np.stack([pair[1] for pair in factors])
    else:
        left = right = np.zeros((0, size))
    adapted = structure.diffusion(path) if structure.has_diffusion else None
    return MalliavinKernel(path.grid, left, right, adapted)


def malliavin_derivative_fd(spec, path: BrownianPath, cell: int, epsilon: float = 1e-6) -> np.ndarray:
    """(a(path + ε·1_{[t_cell, L]}) - a(path))/ε: finite-difference check of D_{t_cell} a."""
    baseline = realize(spec, path).values
    bumped = realize(spec, path.perturbed(cell, epsilon)).values
    logger.debug(f"[MALLIAVIN] Finite-difference derivative at cell {cell} with eps={epsilon}")
    return (np.real(bumped) - np.real(baseline)) / epsilon
