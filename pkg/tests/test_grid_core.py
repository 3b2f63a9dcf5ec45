"""
Grid, Brownian sampling and the elementary integrals.
"""

import numpy as np
import pytest
from pytest import approx

from sfc_engine.cons import antiderivative
from sfc_engine.grid_core import (
    Grid,
    GridError,
    GridFunction,
    grid_total_variation,
    l2_inner,
    l2_norm,
    lebesgue_integral,
    replicate_seed,
    sample_brownian,
    stieltjes_integral,
    wiener_integral,
    wiener_process,
)


class TestGrid:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(GridError):
            Grid(1.0, 100)

    def test_rejects_non_positive_horizon(self):
        with pytest.raises(GridError):
            Grid(0.0, 64)

    def test_node_times_end_at_horizon(self):
        grid = Grid(2.0, 8)
        assert grid.dt == 0.25
        assert grid.node_times[-1] == 2.0
        assert len(grid.node_times) == 9

    def test_off_grid_time(self, grid):
        with pytest.raises(GridError, match="off-grid time"):
            grid.node_index(0.3)

    def test_node_index(self, grid):
        assert grid.node_index(0.5) == 128
        assert grid.node_index(1.0) == 256

    def test_grid_mismatch(self, grid):
        with pytest.raises(GridError, match="grid mismatch"):
            grid.check_same(Grid(1.0, 128))


class TestGridFunction:
    def test_length_checked(self, grid):
        with pytest.raises(GridError):
            GridFunction(grid, np.zeros(grid.n_steps))

    def test_non_finite_rejected(self, grid):
        values = np.zeros(grid.n_steps + 1)
        values[3] = np.nan
        with pytest.raises(GridError):
            GridFunction(grid, values)

    def test_values_read_only(self, grid):
        f = GridFunction.constant(grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_from_cells_repeats_last(self, grid):
        f = GridFunction.from_cells(grid, np.arange(grid.n_steps, dtype=float))
        assert f.values[-1] == f.values[-2]

    def test_real_values_of_complex(self, grid):
        with pytest.raises(GridError):
            GridFunction.constant(grid, 1j).real_values()


class TestBrownian:
    def test_seed_determinism(self, grid):
        first = sample_brownian(grid, 11)
        second = sample_brownian(grid, 11)
        assert np.array_equal(first.increments, second.increments)

    def test_different_seeds_differ(self, grid):
        assert not np.array_equal(sample_brownian(grid, 1).increments, sample_brownian(grid, 2).increments)

    def test_starts_at_zero(self, path):
        assert path.values[0] == 0.0
        assert path.values[-1] == approx(np.sum(path.increments), abs=1e-12)

    def test_replicate_seed(self):
        assert replicate_seed(12345, 7) == 12345 ^ 7
        assert replicate_seed(0, 3) == 3

    def test_perturbed_shifts_tail(self, path):
        bumped = path.perturbed(10, 1e-3)
        assert np.allclose(bumped.values[:11], path.values[:11])
        assert np.allclose(bumped.values[11:] - path.values[11:], 1e-3)


class TestIntegrals:
    def test_wiener_integral_of_one(self, grid, path):
        one = GridFunction.constant(grid, 1.0)
        assert wiener_integral(one, path, 1.0) == approx(path.values[-1], abs=1e-12)
        assert wiener_integral(one, path, 0.5) == approx(path.at(0.5), abs=1e-12)

    def test_wiener_process_matches_integral(self, grid, path):
        e = GridFunction(grid, np.sin(grid.node_times))
        running = wiener_process(e, path)
        assert running.convention == "node"
        assert running.values[64] == approx(wiener_integral(e, path, 0.25), abs=1e-12)

    def test_lebesgue_constant(self, grid):
        assert lebesgue_integral(GridFunction.constant(grid, 2.0), 0.0, 0.5) == approx(1.0)

    def test_lebesgue_matches_primitive_exactly(self, grid):
        f = GridFunction(grid, np.cos(3 * grid.node_times))
        assert lebesgue_integral(f, 0.0, 1.0) == antiderivative(f).values[-1]

    def test_lebesgue_empty_interval(self, grid):
        assert lebesgue_integral(GridFunction.constant(grid, 2.0), 0.5, 0.5) == 0

    def test_stieltjes_of_step(self, grid):
        v = GridFunction(grid, (grid.node_times >= 0.5).astype(float))
        one = GridFunction.constant(grid, 1.0)
        assert stieltjes_integral(one, v, 0.0, 1.0) == approx(1.0)

    def test_stieltjes_telescopes(self, grid):
        ramp = GridFunction(grid, grid.node_times ** 2)
        one = GridFunction.constant(grid, 1.0)
        i, k = 32, 200
        expected = ramp.values[k - 1] - ramp.values[i]
        assert stieltjes_integral(one, ramp, i * grid.dt, k * grid.dt) == approx(expected, abs=1e-12)

    def test_stieltjes_short_interval(self, grid):
        ramp = GridFunction(grid, grid.node_times)
        one = GridFunction.constant(grid, 1.0)
        assert stieltjes_integral(one, ramp, 0.5, 0.5 + grid.dt) == 0

    def test_l2_inner_conjugate_linear(self, grid):
        f = GridFunction(grid, np.cos(grid.node_times))
        g = GridFunction(grid, np.exp(grid.node_times))
        assert l2_inner(f * 1j, g) == approx(-1j * l2_inner(f, g))

    def test_l2_norm_of_one(self, grid):
        assert l2_norm(GridFunction.constant(grid, 1.0)) == approx(1.0)


class TestExamples:
    def test_wiener_integral_of_half_indicator(self, grid, path):
        e = GridFunction(grid, (grid.node_times < 0.5).astype(float))
        assert wiener_integral(e, path, 1.0) == approx(path.at(0.5), abs=1e-12)

    def test_wiener_integral_is_linear(self, grid, path):
        e = GridFunction(grid, np.cos(grid.node_times))
        f = GridFunction(grid, grid.node_times ** 2)
        combined = wiener_integral(e * 3.0 + f, path, 0.75)
        assert combined == approx(3.0 * wiener_integral(e, path, 0.75) + wiener_integral(f, path, 0.75), abs=1e-12)

    def test_lebesgue_left_point_bias(self):
        grid = Grid(1.0, 1024)
        ramp = GridFunction(grid, grid.node_times)
        assert lebesgue_integral(ramp, 0.0, 1.0).real == approx(0.5 - grid.dt / 2, abs=1e-12)

    def test_stieltjes_of_ramp(self, grid):
        ramp = GridFunction(grid, grid.node_times)
        assert abs(stieltjes_integral(ramp, ramp, 0.0, 1.0) - 0.5) <= grid.dt

    def test_stieltjes_of_constant(self, grid):
        assert stieltjes_integral(GridFunction(grid, grid.node_times), GridFunction.constant(grid, 3.0), 0.0, 1.0) == 0

    def test_l2_inner_against_ramp(self, grid):
        value = l2_inner(GridFunction.constant(grid, 1.0), GridFunction(grid, grid.node_times))
        assert abs(value - 0.5) <= grid.dt

    def test_haar_pair_orthogonal(self, grid):
        first = GridFunction(grid, np.where(grid.node_times < 0.5, 1.0, -1.0))
        second = GridFunction(grid, np.where(grid.node_times < 0.25, 1.0, np.where(grid.node_times < 0.5, -1.0, 0.0)))
        assert abs(l2_inner(first, second)) < 1e-15

    def test_grid_mismatch_in_inner_product(self, grid):
        with pytest.raises(GridError, match="grid mismatch"):
            l2_inner(GridFunction.constant(grid, 1.0), GridFunction.constant(Grid(1.0, 64), 1.0))


class TestStatistics:
    def test_terminal_moments(self):
        grid = Grid(1.0, 16)
        terminal = np.array([sample_brownian(grid, seed).values[-1] for seed in range(10_000)])
        assert abs(terminal.mean()) <= 4 * np.sqrt(grid.horizon) / 100
        assert terminal.var(ddof=1) == approx(grid.horizon, rel=0.05)

    def test_ito_isometry(self):
        grid = Grid(1.0, 32)
        e = GridFunction(grid, np.cos(2 * np.pi * grid.node_times))
        squares = np.array([abs(wiener_integral(e, sample_brownian(grid, seed), 1.0)) ** 2 for seed in range(10_000)])
        standard_error = squares.std(ddof=1) / np.sqrt(len(squares))
        assert abs(squares.mean() - l2_norm(e) ** 2) <= 5 * standard_error

    def test_doob_tail(self):
        grid = Grid(1.0, 64)
        paths = [sample_brownian(grid, seed) for seed in range(2000)]
        means = []
        for n in (1, 2, 3):
            f = GridFunction(grid, (grid.node_times < 2.0 ** -n).astype(float))
            sups = np.array([np.max(np.abs(wiener_process(f, p).values)) ** 2 for p in paths])
            standard_error = sups.std(ddof=1) / np.sqrt(len(sups))
            assert sups.mean() <= 4 * l2_norm(f) ** 2 + 3 * standard_error
            means.append(sups.mean())
        assert means[0] > means[1] > means[2]

    def test_stieltjes_against_sup(self, grid, path):
        f = GridFunction(grid, np.sin(3 * grid.node_times))
        v = GridFunction(grid, np.cos(7 * grid.node_times) + (grid.node_times >= 0.5))
        running = wiener_process(f, path)
        bound = grid_total_variation(v.values) * np.max(np.abs(running.values))
        assert abs(stieltjes_integral(running, v, 0.0, 1.0)) <= bound + 1e-12
