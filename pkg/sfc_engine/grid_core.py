# sfc_engine/grid_core.py

"""
Time grid, Brownian path sampling and the elementary integrals
(Wiener, Lebesgue, Riemann-Stieltjes) on a uniform dyadic grid of [0, L].

Conventions:
- A GridFunction carries n_steps + 1 values. With the "left-point" tag,
  entry j < n_steps is the value on the cell [t_j, t_{j+1}) and the last
  entry (the value at L) never enters a left-point sum.
- With the "node" tag the entries are plain node samples (primitives,
  Wiener processes).
"""

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from utils.logger import logger

Convention = Literal["left-point", "node"]
CONVENTIONS = ("left-point", "node")

SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF
# relative slack when matching a float time to a node
NODE_TOLERANCE = 1e-9


class GridError(ValueError):
    """Invalid grid, off-grid time or mismatched grids."""
    pass


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Grid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise GridError(f"horizon must be a positive real, got {self.horizon}")
        n = int(self.n_steps)
        if n < 2 or (n & (n - 1)) != 0:
            raise GridError(f"n_steps must be a power of two >= 2, got {self.n_steps}")
        object.__setattr__(self, "n_steps", n)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def levels(self) -> int:
        return self.n_steps.bit_length() - 1

    @property
    def node_times(self) -> np.ndarray:
        times = np.arange(self.n_steps + 1, dtype=float) * self.dt
        times[-1] = self.horizon
        return times

    @property
    def cell_midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps, dtype=float) + 0.5) * self.dt

    def node_index(self, t: float) -> int:
        """Index j with t_j == t; raises GridError("off-grid time") otherwise."""
        position = float(t) / self.dt
        j = int(round(position))
        if abs(position - j) > NODE_TOLERANCE * max(1.0, abs(position)) or not 0 <= j <= self.n_steps:
            raise GridError(f"off-grid time: {t} is not a node of {self}")
        return j

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridError(f"grid mismatch: {self} vs {other}")

    def zeros(self, convention: Convention = "left-point") -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_steps + 1), convention)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    convention: Convention = "left-point"

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        if values.shape != (self.grid.n_steps + 1,):
            raise GridError(
                f"GridFunction length {values.shape} does not match grid with {self.grid.n_steps + 1} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("GridFunction entries must be finite")
        if self.convention not in CONVENTIONS:
            raise GridError(f"unknown convention tag: {self.convention}")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_cells(cls, grid: Grid, cells: np.ndarray, convention: Convention = "left-point") -> "GridFunction":
        """Build from n_steps cell values; the value at L repeats the last cell."""
        cells = np.asarray(cells)
        return cls(grid, np.concatenate([cells, cells[-1:]]), convention)

    @classmethod
    def constant(cls, grid: Grid, value: Union[float, complex]) -> "GridFunction":
        return cls(grid, np.full(grid.n_steps + 1, value))

    @property
    def cells(self) -> np.ndarray:
        return self.values[:-1]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or bool(np.all(self.values.imag == 0))

    def real_values(self) -> np.ndarray:
        if not self.is_real:
            raise GridError("expected a real-valued GridFunction")
        return np.real(self.values)

    def with_values(self, values: np.ndarray, convention: Convention = None) -> "GridFunction":
        return GridFunction(self.grid, values, convention or self.convention)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self.grid.check_same(other.grid)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self.grid.check_same(other.grid)
        return self.with_values(self.values - other.values)

    def __mul__(self, other) -> "GridFunction":
        if isinstance(other, GridFunction):
            self.grid.check_same(other.grid)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "GridFunction":
        return self.with_values(np.conj(self.values))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: Grid
    seed: int
    increments: np.ndarray
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        increments = np.asarray(self.increments, dtype=float)
        if increments.shape != (self.grid.n_steps,):
            raise GridError("increment count does not match grid")
        object.__setattr__(self, "increments", _frozen(increments))
        object.__setattr__(self, "values", _frozen(np.concatenate([[0.0], np.cumsum(increments)])))

    def at(self, t: float) -> float:
        return float(self.values[self.grid.node_index(t)])

    @property
    def noise_density(self) -> GridFunction:
        """ΔB_{j+1}/dt on cell j: the white-noise density whose projections are B_L[φ_m]."""
        return GridFunction.from_cells(self.grid, self.increments / self.grid.dt)

    def as_function(self) -> GridFunction:
        return GridFunction(self.grid, self.values, "node")

    def perturbed(self, cell: int, epsilon: float) -> "BrownianPath":
        """Path with ε added to increment ΔB_{cell+1}, i.e. shifted by ε·1_{[t_cell, L]}."""
        increments = np.array(self.increments)
        increments[cell] += epsilon
        return BrownianPath(self.grid, self.seed, increments)


def replicate_seed(base_seed: int, replicate: int) -> int:
    return (int(base_seed) ^ int(replicate)) & SEED_MASK


def sample_brownian(grid: Grid, seed: int) -> BrownianPath:
    """Sample i.i.d. N(0, dt) increments from a Philox counter-based generator keyed by seed."""
    seed = int(seed) & SEED_MASK
    rng = np.random.Generator(np.random.Philox(seed))
    increments = rng.standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    logger.debug(f"[GRID] Sampled Brownian path seed={seed} n_steps={grid.n_steps}")
    return BrownianPath(grid, seed, increments)


def wiener_process(e: GridFunction, path: BrownianPath) -> GridFunction:
    """s -> B_s[e] at every node (left-point sums)."""
    e.grid.check_same(path.grid)
    running = np.cumsum(e.cells * path.increments)
    return GridFunction(e.grid, np.concatenate([[0.0], running]), "node")


def wiener_integral(e: GridFunction, path: BrownianPath, t: float) -> complex:
    """B_t[e] = Σ_{t_j < t} e(t_j)·ΔB_{j+1}."""
    e.grid.check_same(path.grid)
    k = e.grid.node_index(t)
    return complex(np.sum(e.cells[:k] * path.increments[:k]))


def lebesgue_integral(f: GridFunction, s: float, t: float) -> complex:
    """Left-point rule Σ_{s <= t_j < t} f(t_j)·dt."""
    i, k = f.grid.node_index(s), f.grid.node_index(t)
    if i > k:
        raise GridError(f"interval endpoints reversed: [{s}, {t}]")
    if k == i:
        return 0j
    # sequential sum so the value matches the cumulative primitive exactly
    return complex(np.cumsum(f.values[i:k])[-1] * f.grid.dt)


def stieltjes_integral(f: GridFunction, v: GridFunction, s: float, t: float) -> complex:
    """
    ∫_{(s,t)} f dv against the discrete measure of the step function v:
    mass v(t_j) - v(t_{j-1}) at each node t_j strictly inside (s, t).
    """
    f.grid.check_same(v.grid)
    i, k = f.grid.node_index(s), f.grid.node_index(t)
    if i > k:
        raise GridError(f"interval endpoints reversed: ({s}, {t})")
    if k - i < 2:
        return 0j
    jumps = np.diff(v.real_values())[i:k - 1]
    return complex(np.sum(f.values[i + 1:k] * jumps))


def l2_inner(f: GridFunction, g: GridFunction) -> complex:
    """⟨f, g⟩ = Σ conj(f)·g·dt over the cells; conjugate-linear in f."""
    f.grid.check_same(g.grid)
    return complex(np.vdot(f.cells, g.cells) * f.grid.dt)


def l2_norm(f: GridFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(f.cells) ** 2) * f.grid.dt))


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


def grid_total_variation(values: np.ndarray, up_to: int = None) -> float:
    """Σ |v_j - v_{j-1}| over nodes j <= up_to."""
    values = np.asarray(values)
    if up_to is None:
        up_to = len(values) - 1
    return float(np.sum(np.abs(np.diff(values[:up_to + 1]))))
