"""
Tests for the adaptive Gauss-Kronrod integrator.
"""
import math

import numpy as np
import pytest

from flow.quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, adaptive_integrate, gauss_kronrod_panel


class TestRule:
    """The G7/K15 pair on a single panel."""

    def test_weights_integrate_constants(self):
        assert KRONROD_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-14)
        assert GAUSS_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-14)

    def test_nodes_symmetric(self):
        assert np.allclose(NODES, -NODES[::-1])

    def test_polynomial_exact(self):
        value, err = gauss_kronrod_panel(lambda x: x ** 5, 0.0, 2.0)
        assert value == pytest.approx(64.0 / 6.0, rel=1e-14)
        assert err < 1e-12


class TestAdaptiveIntegrate:
    """Panel refinement until every estimate is below tolerance."""

    def test_smooth_integrand(self):
        result = adaptive_integrate(np.exp, 0.0, 1.0)
        assert result['converged']
        assert result['value'] == pytest.approx(math.e - 1.0, rel=1e-14)

    def test_peaked_integrand_with_breakpoints(self):
        f = lambda r: np.exp(-1e4 * (r - 0.3) ** 2)
        result = adaptive_integrate(f, 0.0, 1.0, breakpoints=[0.29, 0.3, 0.31, 5.0])
        assert result['value'] == pytest.approx(math.sqrt(math.pi / 1e4), rel=1e-10)

    def test_error_bound_covers_error(self):
        result = adaptive_integrate(np.sqrt, 0.0, 1.0, panel_tol=1e-10)
        assert abs(result['value'] - 2.0 / 3.0) <= result['error_bound'] + 1e-15

    def test_panel_cap(self):
        result = adaptive_integrate(np.sqrt, 0.0, 1.0, panel_tol=1e-30, max_panels=5)
        assert not result['converged']
        assert result['panels'] == 5

    def test_empty_interval(self):
        with pytest.raises(ValueError, match="a < b"):
            adaptive_integrate(np.exp, 1.0, 1.0)
