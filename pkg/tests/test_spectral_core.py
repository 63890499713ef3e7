"""
Tests for the periodic spectral representation and its operators.
"""
import math

import numpy as np
import pytest

from conftest import single_mode
from flow.presets import random_smooth, taylor_green
from flow.spectral_core import (
    FractionalSymbol,
    GridSpec,
    SpectralField,
    classical_symbol,
    dealias_mask,
    divergence,
    gradient,
    leray_project,
    nonlinear_advection,
    riesz_transform,
    symbol_eval,
)


class TestGridSpec:
    """Grid validation and derived arrays."""

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError, match="grid.dim"):
            GridSpec(dim=4, n=16)

    @pytest.mark.parametrize("n", [4, 12, 100])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ValueError, match="power of two"):
            GridSpec(dim=2, n=n)

    def test_rejects_nonpositive_box(self):
        with pytest.raises(ValueError, match="grid.L"):
            GridSpec(dim=2, n=16, box_length=0.0)

    def test_wavenumbers_scale_with_box(self):
        grid = GridSpec(dim=2, n=16, box_length=4.0 * math.pi)
        assert np.allclose(grid.wavenumbers, 0.5 * grid.integer_modes)

    def test_grid_is_hashable_and_frozen(self):
        grid = GridSpec(dim=2, n=16)
        assert hash(grid) == hash(GridSpec(dim=2, n=16))
        with pytest.raises(Exception):
            grid.n = 32


class TestSymbol:
    """Fractional Laplacian symbol |ξ|^α."""

    def test_unit_vector_is_fixed_point(self):
        assert symbol_eval(FractionalSymbol(1.5), (1.0, 0.0, 0.0)) == pytest.approx(1.0)

    def test_classical_value(self):
        assert symbol_eval(FractionalSymbol(2.0), (3.0, 4.0, 0.0)) == 25.0

    def test_fractional_power(self):
        assert symbol_eval(FractionalSymbol(1.5), (0.0, 2.0, 0.0)) == pytest.approx(2.8284271, rel=1e-7)

    def test_zero_at_origin(self):
        assert symbol_eval(FractionalSymbol(1.7), (0.0, 0.0)) == 0.0

    def test_rejects_non_finite_wavevector(self):
        with pytest.raises(ValueError):
            symbol_eval(FractionalSymbol(1.7), (math.inf, 0.0))

    @pytest.mark.parametrize("alpha", [1.0, 0.5, 2.1])
    def test_rejects_alpha_out_of_range(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            FractionalSymbol(alpha)

    def test_classical_path_shares_the_symbol_array(self, grid2d):
        assert FractionalSymbol(2.0).on_grid(grid2d) is classical_symbol(grid2d)

    def test_monotone_in_radius(self):
        sym = FractionalSymbol(1.3)
        values = [symbol_eval(sym, (r, 0.0)) for r in np.linspace(0.0, 5.0, 21)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestDealias:
    """2/3-rule mask."""

    def test_n8_keeps_modes_up_to_two(self):
        grid = GridSpec(dim=2, n=8)
        kept = np.unique(grid.integer_modes[0][dealias_mask(grid)])
        assert kept.tolist() == [-2, -1, 0, 1, 2]

    def test_n16_keeps_modes_up_to_five(self):
        grid = GridSpec(dim=2, n=16)
        kept = np.unique(grid.integer_modes[1][dealias_mask(grid)])
        assert kept.min() == -5 and kept.max() == 5

    def test_mask_idempotent(self, grid3d):
        mask = dealias_mask(grid3d)
        assert np.array_equal(mask & mask, mask)


class TestSpectralField:
    """Physical/spectral round trips and field arithmetic."""

    def test_real_field_is_hermitian(self, random_scalar):
        assert random_scalar.hermitian_defect() < 1e-14

    def test_physical_round_trip(self, grid2d):
        values = np.random.default_rng(0).standard_normal((2,) + grid2d.shape)
        field = SpectralField.from_physical(grid2d, values)
        assert np.allclose(field.to_physical(), values, atol=1e-13)

    def test_rejects_wrong_component_count(self, grid3d):
        with pytest.raises(ValueError, match="components"):
            SpectralField(grid3d, np.zeros((2,) + grid3d.shape))

    def test_rejects_mixed_grids(self, grid2d):
        other = GridSpec(dim=2, n=16)
        with pytest.raises(ValueError, match="grid mismatch"):
            SpectralField.zeros(grid2d, 2) + SpectralField.zeros(other, 2)

    def test_scaling_keeps_solenoidal_flag(self, tg2d):
        assert (2.0 * tg2d).solenoidal


class TestLerayProject:
    """Leray projection onto divergence-free fields."""

    def test_single_mode_example(self):
        grid = GridSpec(dim=3, n=8)
        u = single_mode(grid, (1, 1, 0), vector=(1.0, 0.0, 0.0))
        projected = leray_project(u).coeffs[:, 1, 1, 0]
        assert np.allclose(projected, [0.5, -0.5, 0.0], atol=1e-15)

    def test_output_divergence_free(self, grid2d):
        values = np.random.default_rng(1).standard_normal((2,) + grid2d.shape)
        u = leray_project(SpectralField.from_physical(grid2d, values))
        assert u.divergence_residual() < 1e-12
        assert u.solenoidal

    def test_idempotent(self, grid3d):
        values = np.random.default_rng(2).standard_normal((3,) + grid3d.shape)
        once = leray_project(SpectralField.from_physical(grid3d, values))
        twice = leray_project(once)
        assert np.max(np.abs(twice.coeffs - once.coeffs)) < 1e-12

    def test_fixes_divergence_free_input(self, tg2d):
        assert np.max(np.abs(leray_project(tg2d).coeffs - tg2d.coeffs)) < 1e-12

    def test_kills_gradients(self, random_scalar):
        grad = gradient(random_scalar)
        assert np.max(np.abs(leray_project(grad).coeffs)) < 1e-12

    def test_rejects_scalar(self, random_scalar):
        with pytest.raises(ValueError):
            leray_project(random_scalar)


class TestRieszTransform:
    """Riesz transforms iξ_j/|ξ|."""

    def test_aligned_mode_multiplied_by_i(self):
        grid = GridSpec(dim=3, n=8)
        f = single_mode(grid, (1, 0, 0))
        assert riesz_transform(f, 0).coeffs[0, 1, 0, 0] == pytest.approx(1j)

    def test_orthogonal_mode_vanishes(self):
        grid = GridSpec(dim=3, n=8)
        f = single_mode(grid, (0, 1, 0))
        assert riesz_transform(f, 0).coeffs[0, 0, 1, 0] == 0

    def test_sum_of_squares_is_minus_identity(self, grid3d):
        values = np.random.default_rng(4).standard_normal(grid3d.shape)
        f = SpectralField.from_physical(grid3d, values)
        coeffs = f.coeffs * grid3d.dealias
        coeffs[(0,) + (0,) * grid3d.dim] = 0.0
        f = SpectralField(grid3d, coeffs)
        total = sum(riesz_transform(riesz_transform(f, i), i).coeffs for i in range(3))
        assert np.max(np.abs(total + f.coeffs)) < 1e-12

    def test_rejects_bad_axis(self, random_scalar):
        with pytest.raises(ValueError, match="axis"):
            riesz_transform(random_scalar, 2)


class TestNonlinearAdvection:
    """Dealiased div(u ⊗ v)."""

    def test_zero_velocity(self, grid2d, random_velocity):
        zero = SpectralField.zeros(grid2d, 2)
        assert np.max(np.abs(nonlinear_advection(zero, random_velocity).coeffs)) == 0

    def test_constant_transport(self, grid2d, random_velocity):
        c = np.array([0.3, -1.2])
        const = SpectralField.from_physical(grid2d, c[:, None, None] * np.ones((2,) + grid2d.shape))
        expected = 1j * np.einsum('j...,j->...', grid2d.wavenumbers, c) * random_velocity.coeffs
        result = nonlinear_advection(const, random_velocity).coeffs
        assert np.max(np.abs(result - expected * grid2d.dealias)) < 1e-13

    def test_taylor_green_closed_form(self, grid2d, tg2d):
        x, y = grid2d.coordinates
        expected = np.stack([0.5 * np.sin(2 * x), 0.5 * np.sin(2 * y)])
        result = nonlinear_advection(tg2d, tg2d).to_physical()
        assert np.max(np.abs(result - expected)) < 1e-12

    def test_grid_mismatch(self, tg2d):
        other = taylor_green(GridSpec(dim=2, n=16))
        with pytest.raises(ValueError, match="grid mismatch"):
            nonlinear_advection(tg2d, other)

    def test_divergence_of_gradient_is_laplacian(self, grid2d):
        f = random_smooth(grid2d, seed=2).component(0)
        lap = divergence(gradient(f))
        odd_k2 = grid2d.odd_k_squared
        assert np.max(np.abs(lap.coeffs[0] + odd_k2 * f.coeffs[0])) < 1e-12
