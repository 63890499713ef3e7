"""
Desk-scale convergence experiments: kernel rates, kernel-dominated sweeps
and the rate competition between data and kernels.
"""
import math

import pytest

from flow.convergence_lab import (
    PRESSURE_BMO,
    VELOCITY_SUP,
    DataFamilySpec,
    competition_report,
    fit_rows,
    mixed_norm_report,
    run_sweep,
    sweep_error_rows,
)
from flow.fractional_kernels import certify_two_sided_bound
from flow.mild_solver import SolverConfig
from flow.spectral_core import GridSpec

pytestmark = [pytest.mark.slow, pytest.mark.filterwarnings("ignore::RuntimeWarning")]

KERNEL_ALPHAS = (1.85, 1.9, 1.95, 1.99, 1.995)
SWEEP_ALPHAS = (1.9, 1.925, 1.95, 1.975, 1.99, 1.995)


@pytest.fixture(scope="module")
def cfg128():
    return SolverConfig(grid=GridSpec(dim=2, n=128), dt=1e-3, t_end=0.02, snapshots=20)


class TestKernelRates:
    """Two-sided linear rate of the kernel distances."""

    def test_kernel_distance(self):
        report = certify_two_sided_bound(2.0, 1.0, KERNEL_ALPHAS, dim=3, max_workers=4)
        assert 0.9 <= report.slope <= 1.1
        assert 0 < report.fitted_lower_c <= 2.0 * report.fitted_upper_C
        assert report.passed

    def test_gradient_kernel_distance(self):
        report = certify_two_sided_bound(3.0, 1.0, KERNEL_ALPHAS, dim=3, gradient=True, max_workers=4)
        assert 0.9 <= report.slope <= 1.1


class TestSolutionRates:
    """Sweeps of the fractional solver against the classical one."""

    def test_kernel_dominated(self, cfg128):
        spec = DataFamilySpec(base_preset='random_smooth', c_pert=0.0, alphas=SWEEP_ALPHAS)
        sweep = run_sweep(spec, cfg128, horizon=0.02, override=True, max_workers=4)
        rows = sweep_error_rows(sweep)
        velocity = fit_rows(rows, VELOCITY_SUP, 1.0)
        pressure = fit_rows(rows, PRESSURE_BMO, 1.0)
        assert 0.85 <= velocity.slope <= 1.15
        assert abs(pressure.slope - velocity.slope) <= 0.2

    def test_rate_competition(self, cfg128):
        spec = DataFamilySpec(base_preset='random_smooth', c_pert=0.1, alphas=SWEEP_ALPHAS)
        report = competition_report([0.5, 1.0, 2.0, 5.0], SWEEP_ALPHAS, cfg128, spec,
                                    horizon=0.02, override=True, max_workers=4)
        velocity = {r['kappa']: r for r in report['rows'] if r['norm_kind'] == VELOCITY_SUP}
        pressure = {r['kappa']: r for r in report['rows'] if r['norm_kind'] == PRESSURE_BMO}
        for kappa in (0.5, 1.0, 2.0, 5.0):
            assert velocity[kappa]['slope'] == pytest.approx(min(1.0, kappa), abs=0.15)
            assert pressure[kappa]['slope'] == pytest.approx(min(1.0, kappa), abs=0.15)
            assert abs(velocity[kappa]['slope'] - pressure[kappa]['slope']) <= 0.2
            assert velocity[kappa]['slopes_agree']
        assert velocity[5.0]['slope'] > velocity[0.5]['slope'] + 0.3
        assert report['passed']

    @pytest.mark.parametrize("kappa", [0.5, 2.0])
    def test_mixed_norm_bound(self, cfg128, kappa):
        """
        (1 - 1/q) min(1, kappa) is a lower bound on the L^p_t L^q_x slope, not a
        two-sided band: the sup-in-time error already decays at min(1, kappa).
        """
        spec = DataFamilySpec(base_preset='random_smooth', c_pert=0.1, kappa=kappa, alphas=SWEEP_ALPHAS)
        sweep = run_sweep(spec, cfg128, horizon=0.02, override=True, max_workers=4)
        fit = mixed_norm_report(sweep, p=math.inf, q=4.0)
        assert fit.predicted_slope == pytest.approx(0.75 * min(1.0, kappa))
        assert fit.details['bound_consistent']
        assert fit.details['p_independent']
