"""
Orthonormal systems on the grid.

Claims:
    1. Every family is orthonormal up to rounding on its representable range.
    2. project/synthesize are mutually inverse for the complete families.
    3. Requests the grid cannot represent fail instead of aliasing.
    4. The basis-condition report separates bounded variation from oscillation.
"""

import numpy as np
import pytest
from pytest import approx

from sfc_engine.cons import (
    BasisError,
    BasisSpec,
    antiderivative,
    basis_function,
    basis_kernel,
    check_basis_condition,
    max_index,
    orthonormality_defect,
    project,
    signed_index,
    synthesize,
)
from sfc_engine.grid_core import Grid, GridFunction, l2_norm


COMPLETE_FAMILIES = ["haar", "cosine", "indicator"]


# -- Helpers -------------------------------------------------------------------

def smooth_function(grid):
    t = grid.node_times
    return GridFunction(grid, np.exp(-t) * np.sin(5 * t) + t ** 2)


# -- Orthonormality ------------------------------------------------------------

class TestOrthonormality:
    @pytest.mark.parametrize("family", ["haar", "trigonometric", "cosine", "indicator"])
    def test_defect_is_rounding(self, family):
        grid = Grid(1.0, 64)
        spec = BasisSpec(family, 1.0)
        assert orthonormality_defect(spec, grid, max_index(spec, grid)) < 1e-12

    def test_positive_first_ordering_is_orthonormal(self):
        grid = Grid(2.0, 64)
        spec = BasisSpec("trigonometric", 2.0, "positive_first")
        assert orthonormality_defect(spec, grid, max_index(spec, grid)) < 1e-12

    @pytest.mark.parametrize("family", COMPLETE_FAMILIES)
    def test_projection_of_basis_element_is_unit_vector(self, family):
        grid = Grid(1.0, 64)
        spec = BasisSpec(family, 1.0)
        coefficients = project(basis_function(spec, 5, grid), spec, 64).values
        expected = np.zeros(64)
        expected[4] = 1.0
        assert np.max(np.abs(coefficients - expected)) < 1e-12

    @pytest.mark.parametrize("family", ["haar", "cosine"])
    def test_fast_transform_matches_explicit_inner_products(self, family):
        grid = Grid(1.0, 64)
        spec = BasisSpec(family, 1.0)
        f = smooth_function(grid)
        explicit = [np.sum(f.cells * basis_function(spec, m, grid).cells) * grid.dt for m in range(1, 65)]
        assert np.allclose(project(f, spec, 64).values, explicit, atol=1e-12)

    def test_unit_norm(self):
        grid = Grid(3.0, 128)
        for family in ["haar", "trigonometric", "cosine", "indicator"]:
            assert l2_norm(basis_function(BasisSpec(family, 3.0), 3, grid)) == approx(1.0)


class TestSynthesis:
    @pytest.mark.parametrize("family", COMPLETE_FAMILIES)
    def test_full_synthesis_inverts_projection(self, family):
        grid = Grid(1.0, 128)
        spec = BasisSpec(family, 1.0)
        f = smooth_function(grid)
        rebuilt = synthesize(project(f, spec, 128).values, spec, grid)
        assert np.max(np.abs(rebuilt.cells - f.cells)) < 1e-10

    @pytest.mark.parametrize("family", COMPLETE_FAMILIES)
    def test_parseval_on_complete_family(self, family):
        grid = Grid(1.0, 128)
        spec = BasisSpec(family, 1.0)
        f = smooth_function(grid)
        energy = project(f, spec, 128).parseval_partial_sums()[-1]
        assert energy == approx(l2_norm(f) ** 2, rel=1e-12)

    def test_trigonometric_low_frequency_round_trip(self):
        grid = Grid(1.0, 64)
        spec = BasisSpec("trigonometric", 1.0)
        t = grid.node_times
        f = GridFunction(grid, 1.0 + np.cos(2 * np.pi * 3 * t) + 0.5 * np.sin(2 * np.pi * t))
        rebuilt = synthesize(project(f, spec, max_index(spec, grid)).values, spec, grid)
        assert np.max(np.abs(rebuilt.cells - f.cells)) < 1e-12


class TestShapes:
    def test_haar_second_element(self):
        grid = Grid(2.0, 8)
        cells = basis_function(BasisSpec("haar", 2.0), 2, grid).cells
        amplitude = 1.0 / np.sqrt(2.0)
        assert np.allclose(cells[:4], amplitude)
        assert np.allclose(cells[4:], -amplitude)

    def test_haar_finest_element_support(self):
        grid = Grid(1.0, 8)
        cells = basis_function(BasisSpec("haar", 1.0), 8, grid).cells
        assert np.count_nonzero(cells) == 2
        assert cells[6] == approx(2.0)
        assert cells[7] == approx(-2.0)

    def test_natural_signed_order(self):
        grid = Grid(1.0, 64)
        spec = BasisSpec("trigonometric", 1.0)
        assert [signed_index(m, spec, grid) for m in range(1, 8)] == [0, 1, -1, 2, -2, 3, -3]

    def test_positive_first_signed_order(self):
        grid = Grid(1.0, 16)
        spec = BasisSpec("trigonometric", 1.0, "positive_first")
        assert [signed_index(m, spec, grid) for m in range(1, 10)] == [0, 1, 2, 3, 4, -1, -2, -3, -4]

    def test_representable_counts(self):
        grid = Grid(1.0, 64)
        assert max_index(BasisSpec("trigonometric", 1.0), grid) == 33
        assert max_index(BasisSpec("haar", 1.0), grid) == 64

    def test_antiderivative_is_node_tagged(self, grid):
        primitive = antiderivative(GridFunction.constant(grid, 2.0))
        assert primitive.convention == "node"
        assert primitive.values[-1] == approx(2.0)


class TestErrors:
    def test_basis_finer_than_grid(self):
        grid = Grid(1.0, 16)
        with pytest.raises(BasisError, match="basis finer than grid"):
            basis_function(BasisSpec("haar", 1.0), 17, grid)

    def test_trigonometric_aliasing_rejected(self):
        grid = Grid(1.0, 16)
        with pytest.raises(BasisError, match="basis finer than grid"):
            project(GridFunction.constant(grid, 1.0), BasisSpec("trigonometric", 1.0), 10)

    def test_horizon_mismatch(self):
        with pytest.raises(BasisError, match="mismatch"):
            basis_function(BasisSpec("haar", 2.0), 1, Grid(1.0, 16))

    def test_unknown_family(self):
        with pytest.raises(BasisError):
            BasisSpec("wavelet", 1.0)

    def test_ordering_only_for_trigonometric(self):
        with pytest.raises(BasisError):
            BasisSpec("haar", 1.0, "positive_first")


class TestBasisCondition:
    def test_ramp_has_bounded_variation(self):
        grid = Grid(1.0, 64)
        report = check_basis_condition(GridFunction(grid, grid.node_times), BasisSpec("haar", 1.0), 32)
        assert report["c3"]["holds"] is True
        assert report["total_variation"] == approx(1.0)

    def test_alternating_signs_are_not_regulated(self):
        grid = Grid(1.0, 64)
        values = np.where(np.arange(65) % 2 == 0, 1.0, -1.0)
        report = check_basis_condition(GridFunction(grid, values), BasisSpec("haar", 1.0), 32)
        assert report["c3"]["holds"] is False
        assert report["c2"]["regulated"] is False

    def test_sup_norms_are_running_maxima(self):
        grid = Grid(1.0, 64)
        report = check_basis_condition(GridFunction.constant(grid, 1.0), BasisSpec("cosine", 1.0), 16)
        norms = np.array(report["sup_norms"])
        assert len(norms) == 16
        assert np.all(np.diff(norms) >= 0)

    def test_real_system_kernel_is_plain_product(self):
        grid = Grid(1.0, 64)
        spec = BasisSpec("cosine", 1.0)
        expected = sum(
            basis_function(spec, m, grid).cells * antiderivative(basis_function(spec, m, grid)).values[:-1]
            for m in range(1, 6)
        )
        assert np.allclose(basis_kernel(spec, grid, 5).cells, expected)

    def test_trigonometric_kernel_pairs_conjugates(self):
        grid = Grid(1.0, 256)
        t = grid.node_times[:-1]
        # ±1 pair after the constant: t + sin(2πt)/π
        natural = basis_kernel(BasisSpec("trigonometric", 1.0), grid, 3).cells
        assert np.max(np.abs(natural.imag)) < 1e-12
        assert np.allclose(natural.real, t + np.sin(2 * np.pi * t) / np.pi, atol=0.05)
        one_sided = basis_kernel(BasisSpec("trigonometric", 1.0, "positive_first"), grid, 3).cells
        assert np.max(np.abs(one_sided.imag)) > 0.05
