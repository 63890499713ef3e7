"""
Tests for alpha sweeps, rate fits and the rate-competition experiments.

Taylor-Green data stay an exact heat-like mode for every alpha on the
[0, 2pi) box, so u_alpha(t) = exp(-t 2^(alpha/2)) u0 gives a closed-form
error against the alpha = 2 reference.
"""
import math

import numpy as np
import pytest

from flow.convergence_lab import (
    COMBINED,
    PRESSURE_BMO,
    VELOCITY_SUP,
    DataFamilySpec,
    base_velocity,
    build_family,
    default_workers,
    fit_rate,
    fit_rows,
    horizon_constant_scan,
    long_horizon_report,
    measurement_floor,
    mhd_sweep,
    mixed_norm_report,
    prolong,
    rate_envelope,
    resolve_horizon,
    run_sweep,
    small_data_family,
    sweep_error_rows,
)
from flow.errors import PicardDivergenceError, SweepError
from flow.mild_solver import SolverConfig, hs_norm_of
from flow.norms import NormSpec
from flow.presets import sup_magnitude, taylor_green
from flow.spectral_core import GridSpec
from utils.logger import Logger

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

ALPHAS = (1.9, 1.95, 1.975, 1.99)
HORIZON = 0.01


def tg_error(alpha, t):
    return math.exp(-t * 2.0 ** (alpha / 2.0)) - math.exp(-2.0 * t)


@pytest.fixture(scope="module")
def grid16():
    return GridSpec(dim=2, n=16)


@pytest.fixture(scope="module")
def cfg16(grid16):
    return SolverConfig(grid=grid16, dt=1e-3, t_end=0.1, snapshots=10)


@pytest.fixture(scope="module")
def cfg32():
    return SolverConfig(grid=GridSpec(dim=2, n=32), dt=1e-3, t_end=0.1, snapshots=10)


@pytest.fixture(scope="module")
def tg_sweep(cfg16):
    spec = DataFamilySpec(base_preset='taylor_green', alphas=ALPHAS)
    return run_sweep(spec, cfg16, horizon=HORIZON, override=True, max_workers=2)


class TestDataFamilySpec:
    """Family validation."""

    def test_alphas_sorted(self):
        assert DataFamilySpec(alphas=(1.99, 1.9, 1.95)).alphas == (1.9, 1.95, 1.99)

    @pytest.mark.parametrize("kwargs,match", [
        ({'alphas': (1.4, 1.9)}, "alphas must lie"),
        ({'alphas': (2.1,)}, "alphas must lie"),
        ({'alphas': ()}, "empty"),
        ({'kappa': 0.0}, "kappa"),
        ({'c_pert': -1.0}, "c_pert"),
        ({'epsilon': 1.0}, "epsilon"),
        ({'base_preset': 'abc_flow'}, "preset"),
    ])
    def test_rejects(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            DataFamilySpec(**kwargs)


class TestBuildFamily:
    """Perturbed initial data."""

    def test_gap_follows_power_law(self, grid16):
        spec = DataFamilySpec(c_pert=1.0, kappa=1.0, alphas=(1.9, 1.99))
        base, family = build_family(spec, grid16)
        gaps = {alpha: sup_magnitude(u - base) for alpha, u in family}
        assert gaps[1.9] == pytest.approx(0.1, rel=1e-9)
        assert gaps[1.99] == pytest.approx(0.01, rel=1e-9)

    def test_zero_perturbation_is_identical(self, grid16):
        base, family = build_family(DataFamilySpec(alphas=ALPHAS), grid16)
        assert all(np.array_equal(u.coeffs, base.coeffs) for _, u in family)

    def test_norms_stay_comparable(self, grid16):
        spec = DataFamilySpec(c_pert=0.5, alphas=ALPHAS)
        base, family = build_family(spec, grid16)
        norms = [hs_norm_of(u, 1.5) for _, u in family] + [hs_norm_of(base, 1.5)]
        assert max(norms) / min(norms) <= 1.5

    def test_family_is_solenoidal(self, grid16):
        _, family = build_family(DataFamilySpec(c_pert=1.0, alphas=ALPHAS), grid16)
        assert all(u.divergence_residual() < 1e-12 for _, u in family)


class TestFitRate:
    """Log-log least squares."""

    def test_exact_power_law(self):
        alphas = [1.9, 1.95, 1.975, 1.99]
        fit = fit_rate([3.0 * (2 - a) for a in alphas], alphas)
        assert fit.slope == pytest.approx(1.0, abs=1e-10)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.passed

    def test_two_term_law_tracks_weaker_exponent(self):
        alphas = [1.9, 1.95, 1.975, 1.99, 1.995]
        errors = [rate_envelope(a, 0.5) for a in alphas]
        fit = fit_rate(errors, alphas, predicted_slope=0.5)
        assert 0.5 < fit.slope < 0.7
        assert fit.passed

    def test_two_term_law_with_strong_data(self):
        alphas = [1.9, 1.95, 1.975, 1.99, 1.995]
        fit = fit_rate([rate_envelope(a, 2.0) for a in alphas], alphas)
        assert fit.slope == pytest.approx(1.0, abs=0.1)

    def test_rate_envelope_infinite_kappa(self):
        assert rate_envelope(1.9, math.inf) == pytest.approx(0.1)

    def test_excluded_points(self):
        alphas = [1.9, 1.95, 1.975, 1.99]
        errors = [2 - a for a in alphas[:3]] + [1.0]
        fit = fit_rate(errors, alphas, excluded=[False, False, False, True])
        assert fit.excluded == [1.99]
        assert fit.slope == pytest.approx(1.0, abs=1e-10)
        assert fit.to_dict()['excluded'] == [1.99]

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit_rate([0.1, 0.05], [1.9, 1.95])

    def test_non_positive_error(self):
        with pytest.raises(ValueError, match="non-positive"):
            fit_rate([0.1, 0.0, 0.01], [1.9, 1.95, 1.99])

    def test_alpha_two_rejected(self):
        with pytest.raises(ValueError, match="alpha < 2"):
            fit_rate([0.1, 0.05, 0.01], [1.9, 1.95, 2.0])

    def test_to_dict_keys(self):
        fit = fit_rate([0.1, 0.05, 0.01], [1.9, 1.95, 1.99])
        assert {'norm_kind', 'slope', 'intercept', 'r_squared', 'predicted', 'pass'} <= set(fit.to_dict())


class TestResolveHorizon:
    """Horizon selection against T_0."""

    def test_default_below_one_step(self, cfg16):
        with pytest.raises(ValueError, match="shorter than one step"):
            resolve_horizon(0.5, 1.6, cfg16, None, False)

    def test_requires_override(self, cfg16):
        with pytest.raises(ValueError, match="override"):
            resolve_horizon(0.5, 1.6, cfg16, 0.01, False)

    def test_override_snaps_to_lattice(self, cfg16):
        T, floor = resolve_horizon(0.5, 1.6, cfg16, 0.0105, True)
        assert T == pytest.approx(0.01)
        assert floor < T

    def test_default_cap(self, cfg16):
        T, floor = resolve_horizon(0.5, 1e-3, cfg16, None, False)
        assert floor > 0.05
        assert T == pytest.approx(0.05)


class TestRunSweep:
    """Taylor-Green sweeps against the closed form."""

    def test_errors_match_closed_form(self, tg_sweep):
        errors = tg_sweep.errors(NormSpec.sup())
        for alpha, error in zip(tg_sweep.alphas, errors):
            assert error == pytest.approx(tg_error(alpha, HORIZON), rel=1e-6)

    def test_errors_decrease_towards_classical(self, tg_sweep):
        errors = tg_sweep.errors(NormSpec.sup())
        assert all(a > b for a, b in zip(errors, errors[1:]))

    def test_rate_is_linear(self, tg_sweep):
        rows = sweep_error_rows(tg_sweep)
        fit = fit_rows(rows, VELOCITY_SUP, 1.0)
        assert fit.slope == pytest.approx(1.0, abs=0.05)
        assert fit_rows(rows, PRESSURE_BMO, 1.0).passed

    def test_sweep_metadata(self, tg_sweep):
        assert tg_sweep.horizon == pytest.approx(HORIZON)
        assert tg_sweep.horizon_override
        assert tg_sweep.alphas == list(ALPHAS)
        assert tg_sweep.reference.config.alpha == 2.0

    def test_classical_only(self, cfg16):
        spec = DataFamilySpec(alphas=(2.0,))
        sweep = run_sweep(spec, cfg16, horizon=0.005, override=True, max_workers=1)
        assert sweep.errors(NormSpec.sup()) == [0.0]

    def test_deterministic(self, cfg16, tg_sweep):
        spec = DataFamilySpec(base_preset='taylor_green', alphas=ALPHAS)
        again = run_sweep(spec, cfg16, horizon=HORIZON, override=True, max_workers=1)
        assert again.errors(NormSpec.sup()) == tg_sweep.errors(NormSpec.sup())

    def test_progress_callback_and_log(self, cfg16):
        seen = []
        logger = Logger()
        spec = DataFamilySpec(alphas=(1.9, 1.95))
        run_sweep(spec, cfg16, horizon=0.002, override=True, max_workers=2,
                  callback=lambda done, total, row: seen.append((done, total, row['error'])),
                  logger=logger)
        assert sorted(d for d, _, _ in seen) == [1, 2, 3]
        assert all(total == 3 and error is None for _, total, error in seen)
        assert sum(1 for e in logger.get_logs() if e['action'] == 'Sweep') == 3

    def test_failure_names_alpha(self, cfg16):
        spec = DataFamilySpec(base_preset='random_smooth', alphas=(1.9, 1.95))
        cfg = SolverConfig(grid=cfg16.grid, dt=1e-3, t_end=0.1, picard_max_iter=1)
        with pytest.raises(SweepError) as info:
            run_sweep(spec, cfg, horizon=0.002, override=True, max_workers=2)
        assert isinstance(info.value.cause, PicardDivergenceError)
        assert info.value.alpha in (1.9, 1.95, 2.0)


class TestErrorRows:
    """Result rows and mixed-norm fits."""

    def test_row_layout(self, tg_sweep):
        rows = sweep_error_rows(tg_sweep)
        assert len(rows) == 2 * len(ALPHAS)
        assert set(rows[0]) == {'alpha', 'beta', 'kappa', 'norm_kind', 'error', 'excluded'}
        assert {r['norm_kind'] for r in rows} == {VELOCITY_SUP, PRESSURE_BMO}

    def test_kernel_only_rows_carry_infinite_kappa(self, tg_sweep):
        assert tg_sweep.spec.c_pert == 0.0
        assert all(math.isinf(r['kappa']) for r in sweep_error_rows(tg_sweep))

    def test_perturbed_rows_carry_kappa(self, cfg16):
        spec = DataFamilySpec(alphas=(1.9, 1.95, 1.99), kappa=0.5, c_pert=0.1)
        sweep = run_sweep(spec, cfg16, horizon=0.005, override=True, max_workers=2)
        assert {r['kappa'] for r in sweep_error_rows(sweep)} == {0.5}

    def test_floor_exclusion(self, tg_sweep):
        rows = [r for r in sweep_error_rows(tg_sweep, floor=1e-6) if r['norm_kind'] == VELOCITY_SUP]
        flags = {r['alpha']: r['excluded'] for r in rows}
        assert flags[1.99] and not flags[1.9]

    def test_mixed_norm_details(self, tg_sweep):
        fit = mixed_norm_report(tg_sweep, p=2.0, q=4.0)
        assert fit.predicted_slope == pytest.approx(0.75)
        assert set(fit.details['p_slopes']) == {'1', '2', 'inf'}
        assert fit.details['bound_consistent']
        assert fit.norm_kind == 'lplq(2,4)'

    def test_mixed_norm_rejects_q_two(self, tg_sweep):
        with pytest.raises(ValueError, match="q must lie"):
            mixed_norm_report(tg_sweep, p=2.0, q=2.0)


class TestMHDSweep:
    """Velocity/magnetic sweeps."""

    def test_invalid_mode(self, cfg16):
        with pytest.raises(ValueError, match="mode"):
            mhd_sweep(DataFamilySpec(alphas=ALPHAS), cfg16, mode='corner')

    def test_invalid_pin(self, cfg16):
        with pytest.raises(ValueError, match="beta_pin"):
            mhd_sweep(DataFamilySpec(alphas=ALPHAS), cfg16, mode='pinned', beta_pin=1.2)

    def test_diagonal(self, cfg16):
        spec = DataFamilySpec(alphas=(1.9, 1.95, 1.99))
        report = mhd_sweep(spec, cfg16, mode='diagonal', horizon=0.005, override=True, max_workers=2)
        assert [r['beta'] for r in report['rows']] == [1.9, 1.95, 1.99]
        assert all(r['norm_kind'] == COMBINED and r['error'] > 0 for r in report['rows'])
        assert report['fit'].slope == pytest.approx(1.0, abs=0.15)
        assert report['passed']

    @pytest.mark.parametrize("kappa, c_pert", [(0.5, 0.1), (2.0, 0.005)])
    def test_diagonal_rate_competition(self, cfg32, kappa, c_pert):
        spec = DataFamilySpec(alphas=(1.9, 1.95, 1.99), kappa=kappa, c_pert=c_pert)
        report = mhd_sweep(spec, cfg32, mode='diagonal', horizon=0.02, override=True, max_workers=2)
        assert report['fit'].predicted_slope == min(1.0, kappa)
        assert report['fit'].slope == pytest.approx(min(1.0, kappa), abs=0.15)
        assert all(r['kappa'] == kappa for r in report['rows'])

    def test_pinned(self, cfg32):
        spec = DataFamilySpec(alphas=(1.99, 1.995, 1.999))
        report = mhd_sweep(spec, cfg32, mode='pinned', beta_pin=1.95, horizon=0.02,
                           override=True, max_workers=2)
        assert report['fit'] is None
        assert all(r['beta'] == 1.95 for r in report['rows'])
        # the magnetic kernel gap at beta = 1.95 dominates every alpha
        assert report['plateau'] < 0.25
        assert report['passed']


class TestSmallDataAndRefinement:
    """Small-data rescaling, prolongation and the measurement floor."""

    @pytest.mark.parametrize("preset", ['taylor_green', 'random_smooth'])
    def test_small_data_norm(self, grid16, preset):
        spec = small_data_family(DataFamilySpec(base_preset=preset, c_pert=1.0), grid16, 1e-2)
        assert hs_norm_of(base_velocity(spec, grid16), 1.5) == pytest.approx(1e-2, rel=1e-10)
        assert spec.c_pert < 1.0

    def test_small_data_rejects_non_positive(self, grid16):
        with pytest.raises(ValueError):
            small_data_family(DataFamilySpec(), grid16, 0.0)

    def test_prolong_matches_fine_preset(self, grid16):
        fine = GridSpec(dim=2, n=32)
        padded = prolong(taylor_green(grid16), fine)
        assert np.max(np.abs(padded.coeffs - taylor_green(fine).coeffs)) < 1e-15

    def test_prolong_rejects_coarser(self, grid16):
        with pytest.raises(ValueError, match="prolong"):
            prolong(taylor_green(grid16), GridSpec(dim=2, n=8))

    def test_measurement_floor_taylor_green(self, cfg16):
        assert measurement_floor(DataFamilySpec(), cfg16, 0.005) < 1e-12

    def test_horizon_scan(self, cfg16):
        spec = DataFamilySpec(alphas=(1.9, 1.95, 1.99))
        scan = horizon_constant_scan(spec, cfg16, [0.002, 0.004, 0.006], max_workers=2)
        assert len(scan['c_hat']) == 3
        assert all(c > 0 for c in scan['c_hat'])
        assert set(scan['coefficients']) == {'a0', 'a1', 'a2'}

    def test_horizon_scan_needs_three(self, cfg16):
        with pytest.raises(ValueError, match="at least 3"):
            horizon_constant_scan(DataFamilySpec(), cfg16, [0.002, 0.004])

    def test_long_horizon(self, cfg16):
        spec = DataFamilySpec(alphas=(1.9, 1.95, 1.99))
        report = long_horizon_report(spec, cfg16, steps=40, max_workers=2)
        assert report['picard_failure'] is None
        assert report['energy_monotone']
        assert report['passed']
        assert report['horizon'] == pytest.approx(40 * report['dt'])


class TestWorkers:
    """Worker-count resolution."""

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv('FNSLAB_WORKERS', '3')
        assert default_workers() == 3

    def test_environment_rejects_zero(self, monkeypatch):
        monkeypatch.setenv('FNSLAB_WORKERS', '0')
        with pytest.raises(ValueError, match="FNSLAB_WORKERS"):
            default_workers()

    def test_physical_cores(self, monkeypatch):
        monkeypatch.delenv('FNSLAB_WORKERS', raising=False)
        assert default_workers() >= 1
