# FNSLab Flow Module
from .errors import FlowError, NumericalFailure, PicardDivergenceError, EnergyViolationError, SweepError, OutputExistsError
from .spectral_core import GridSpec, SpectralField, FractionalSymbol, symbol_eval, dealias_mask, leray_project, riesz_transform, nonlinear_advection
from .field_io import write_field, read_field, encode_field, decode_field
from .presets import make_preset, taylor_green, shear, random_smooth
from .fractional_kernels import SemigroupMultiplier, semigroup_apply, QuadratureConfig, kernel_distance_hms, grad_kernel_distance_hms, certify_two_sided_bound, grad_kernel_l1_check, alpha_derivative_sup, shell_lower_bound, kernel_distance_table
from .mild_solver import SolverConfig, SolveRecord, existence_time, existence_time_mhd, uniform_time_floor, step_picard, step_etd_rk2, recover_pressure, solve_ns, solve_mhd, stability_horizon, hs_norm_of
from .norms import NormSpec, norm, bmo_discrete, trajectory_norm, lq_norm, product_law_ratio
from .convergence_lab import DataFamilySpec, RateFitResult, build_family, run_sweep, fit_rate, competition_report, mixed_norm_report, mhd_sweep, small_data_family, long_horizon_report, horizon_constant_scan, measurement_floor

__version__ = "0.1.0"
