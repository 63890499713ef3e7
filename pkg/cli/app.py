"""
FNSLab Command-Line Application
Kernel distances, fractional NS/MHD solves, norms and convergence sweeps
"""
import argparse
import math
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from flow import __version__
from flow.convergence_lab import (
    DataFamilySpec,
    base_velocity,
    competition_report,
    default_workers,
    fit_rate,
    long_horizon_report,
    measurement_floor,
    mhd_sweep,
    mixed_norm_report,
    predicted_solution_slope,
    resolve_horizon,
)
from flow.errors import FlowError
from flow.field_io import read_field, write_field
from flow.fractional_kernels import (
    QuadratureConfig,
    certify_two_sided_bound,
    grad_kernel_l1_check,
)
from flow.mild_solver import SCHEMES, SolverConfig, hs_norm_of, solve_mhd, solve_ns, stability_horizon
from flow.norms import NormSpec, norm
from flow.presets import PRESETS, make_preset
from flow.spectral_core import DEFAULT_BOX_LENGTH, GridSpec
from cli import io as results_io
from utils.logger import Logger


REQUIRED = {
    'solve': ['alpha'],
    'solve-mhd': ['alpha', 'beta'],
    'norm': ['field'],
    'fit': ['results'],
}

# Config-file keys whose parser destination differs from the key itself
CONFIG_ALIASES = {
    'grid.n': 'n',
    'grid.L': 'box_length',
    'grid.dim': 'dim',
    'data.preset': 'preset',
    'C': 'C_const',
}

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_IO = 3


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument('--config', help='key = value config file; explicit flags win')
    p.add_argument('--out', help='output directory')
    p.add_argument('--force', action='store_true', help='overwrite an existing output directory')
    p.add_argument('--workers', type=int, help='parallel solves (default: FNSLAB_WORKERS or physical cores)')


def _add_grid(p: argparse.ArgumentParser, dim: int = 2, n: int = 64):
    p.add_argument('--dim', type=int, default=dim, choices=(2, 3))
    p.add_argument('--n', type=int, default=n, help='grid points per axis (power of two)')
    p.add_argument('--box-length', dest='box_length', type=float, default=DEFAULT_BOX_LENGTH)


def _add_solver(p: argparse.ArgumentParser):
    p.add_argument('--dt', type=float, default=1e-3)
    p.add_argument('--t-end', dest='t_end', type=float, default=0.1)
    p.add_argument('--scheme', choices=SCHEMES, default='picard_duhamel')
    p.add_argument('--snapshots', type=int, default=32)
    p.add_argument('--picard-tol', dest='picard_tol', type=float, default=1e-10)
    p.add_argument('--picard-max-iter', dest='picard_max_iter', type=int, default=50)
    p.add_argument('--C', dest='C_const', type=float, default=1.0, help='existence-time constant')
    p.add_argument('--horizon-factor', dest='horizon_factor', type=float, default=1.0)


def _add_data(p: argparse.ArgumentParser):
    p.add_argument('--preset', choices=tuple(PRESETS), default='taylor_green')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--spectrum-decay', dest='spectrum_decay', type=float, default=4.0)
    p.add_argument('--amplitude', type=float)


def _add_family(p: argparse.ArgumentParser):
    p.add_argument('--alpha-grid', dest='alpha_grid', type=float_list,
                   default=[1.9, 1.925, 1.95, 1.975, 1.99, 1.995])
    p.add_argument('--c-pert', dest='c_pert', type=float, default=0.0)
    p.add_argument('--epsilon', type=float, default=0.5)
    p.add_argument('--horizon', type=float, help='sweep horizon (default min(T_0, 0.05))')
    p.add_argument('--override', action='store_true', help='allow a horizon above the uniform floor T_0')
    p.add_argument('--perturbation-seed', dest='perturbation_seed', type=int, default=12345)
    p.add_argument('--measure-floor', dest='measure_floor', action='store_true',
                   help='exclude errors below 100x the n/2n discretization error')


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog='fnslab', description=__doc__.strip().splitlines()[0])
    parser.add_argument('--version', action='version', version=f"fnslab {__version__}")
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True
    parsers = {}

    p = sub.add_parser('kernel-distance', help='sup_t H^-s distance between fractional and heat kernels')
    _add_common(p)
    p.add_argument('--alpha-grid', dest='alpha_grid', type=float_list, default=[1.85, 1.9, 1.95, 1.99, 1.995])
    p.add_argument('--s', type=float, default=2.0)
    p.add_argument('--T', type=float, default=1.0)
    p.add_argument('--dim', type=int, default=3, choices=(2, 3))
    p.add_argument('--gradient', action='store_true', help='use the gradient kernels')
    p.add_argument('--l1-check', dest='l1_check', action='store_true',
                   help='also report ||grad h_alpha(t)||_L1 t^(1/alpha) at t = T')
    parsers['kernel-distance'] = p

    p = sub.add_parser('solve', help='fractional Navier-Stokes solve')
    _add_common(p)
    _add_grid(p)
    _add_solver(p)
    _add_data(p)
    p.add_argument('--alpha', type=float)
    p.add_argument('--input', help='initial velocity field file')
    parsers['solve'] = p

    p = sub.add_parser('solve-mhd', help='fractional MHD solve')
    _add_common(p)
    _add_grid(p)
    _add_solver(p)
    _add_data(p)
    p.add_argument('--alpha', type=float)
    p.add_argument('--beta', type=float)
    p.add_argument('--input', help='initial velocity field file')
    p.add_argument('--b-input', dest='b_input', help='initial magnetic field file')
    p.add_argument('--b-preset', dest='b_preset', choices=tuple(PRESETS), default='random_smooth')
    p.add_argument('--b-amplitude', dest='b_amplitude', type=float, default=0.5)
    parsers['solve-mhd'] = p

    p = sub.add_parser('norm', help='norm of a field file (or of a difference of two)')
    _add_common(p)
    p.add_argument('--field', help='field file')
    p.add_argument('--other', help='second field file; the norm of field - other is reported')
    p.add_argument('--kind', default='sup', help='sup, l2, hs:S, hminus:S, bmo[:LEVEL]')
    p.add_argument('--box-length', dest='box_length', type=float, default=DEFAULT_BOX_LENGTH)
    parsers['norm'] = p

    p = sub.add_parser('converge', help='alpha sweep and rate-competition fit')
    _add_common(p)
    _add_grid(p)
    _add_solver(p)
    _add_data(p)
    _add_family(p)
    p.add_argument('--kappa', type=float_list, default=[1.0])
    p.add_argument('--mixed-q', dest='mixed_q', type=float, help='add the L^p_t L^q_x report for this q')
    p.add_argument('--mixed-p', dest='mixed_p', type=float_list, default=[1.0, 2.0, math.inf])
    p.add_argument('--long-horizon', dest='long_horizon', action='store_true',
                   help='small-data run to 10x the local existence time')
    parsers['converge'] = p

    p = sub.add_parser('converge-mhd', help='MHD alpha/beta sweep')
    _add_common(p)
    _add_grid(p)
    _add_solver(p)
    _add_data(p)
    _add_family(p)
    p.add_argument('--kappa', type=float, default=1.0)
    p.add_argument('--kappa2', type=float, default=1.0)
    p.add_argument('--c-pert2', dest='c_pert2', type=float, default=0.0)
    p.add_argument('--b-amplitude', dest='b_amplitude', type=float, default=0.5)
    p.add_argument('--mode', choices=('diagonal', 'pinned'), default='diagonal')
    p.add_argument('--beta-pin', dest='beta_pin', type=float, default=1.95)
    parsers['converge-mhd'] = p

    p = sub.add_parser('fit', help='fit rates from a results CSV')
    _add_common(p)
    p.add_argument('--results', help='results.csv from converge / converge-mhd')
    p.add_argument('--predicted', type=float, help='predicted slope (default min(1, kappa))')
    parsers['fit'] = p

    return parser, parsers


def _config_defaults(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser,
                     values: Dict[str, str]) -> Dict[str, object]:
    """Map config keys to parser destinations of this subcommand"""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = CONFIG_ALIASES.get(key, key.replace('.', '_').replace('-', '_'))
        action = actions.get(dest)
        if action is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
                parser.error(f"config key {key}: expected a boolean, got {raw!r}")
            defaults[dest] = raw.lower() in ('true', '1', 'yes')
        else:
            # argparse converts string defaults with the action's type
            defaults[dest] = raw
    return defaults


def parse_cli(argv: Optional[Sequence[str]] = None) -> Tuple[argparse.Namespace, results_io.Manifest]:
    """
    Parse arguments, merge --config values under explicit flags and build the Manifest

    Raises:
        SystemExit: code 2 on any usage error
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, parsers = build_parser()
    args = parser.parse_args(argv)
    sub = parsers[args.command]
    if args.config:
        try:
            values = results_io.load_config(args.config)
        except OSError as e:
            parser.error(f"cannot read config {args.config}: {e}")
        except ValueError as e:
            parser.error(str(e))
        sub.set_defaults(**_config_defaults(parser, sub, values))
        args = parser.parse_args(argv)

    missing = [name for name in REQUIRED.get(args.command, []) if getattr(args, name) is None]
    if missing:
        sub.error("the following arguments are required: " + ", ".join(f"--{m.replace('_', '-')}" for m in missing))

    manifest = results_io.Manifest(
        command=args.command,
        seed=getattr(args, 'seed', 0) or 0,
        tool_version=__version__,
        timestamp=results_io.now_stamp(),
    )
    for key, value in vars(args).items():
        if key not in ('command', 'config', 'out', 'force'):
            manifest.set(key, value)
    if args.config:
        manifest.add_input(args.config)
    for key in ('input', 'b_input', 'field', 'other', 'results'):
        path = getattr(args, key, None)
        if path and os.path.exists(path):
            manifest.add_input(path)
    return args, manifest


def _grid(args) -> GridSpec:
    return GridSpec(dim=args.dim, n=args.n, box_length=args.box_length)


def _solver_config(args, grid: GridSpec, alpha: float = 2.0, beta: Optional[float] = None,
                   t_end: Optional[float] = None) -> SolverConfig:
    return SolverConfig(
        grid=grid, alpha=alpha, beta=beta, dt=args.dt,
        t_end=args.t_end if t_end is None else t_end,
        picard_tol=args.picard_tol, picard_max_iter=args.picard_max_iter,
        scheme=args.scheme, snapshots=args.snapshots,
        C_const=args.C_const, horizon_factor=args.horizon_factor,
    )


def _workers(args) -> int:
    return args.workers or default_workers()


def _label(value: float) -> str:
    return format(value, 'g')


class CommandRunner:
    """Runs one parsed subcommand, logging to stderr and writing under out_dir"""

    def __init__(self, args: argparse.Namespace, manifest: results_io.Manifest):
        self.args = args
        self.manifest = manifest
        self.logger = Logger(callback=self.on_log_entry)
        self.out_dir: Optional[str] = None

    def on_log_entry(self, entry: dict):
        """Echo log entries to stderr"""
        line = f"[{entry['timestamp']}] {entry['action']} - {entry['result']}"
        if entry['details']:
            line += f"\n   {entry['details']}"
        print(line, file=sys.stderr)

    def _open_output(self, default: Optional[str]):
        out = self.args.out or default
        if out is None:
            return
        self.out_dir = results_io.prepare_output_dir(out, self.args.force)

    def finish(self):
        if self.out_dir is None:
            return
        path = results_io.write_manifest(self.manifest, self.out_dir)
        self.logger.log_output(path)
        self.logger.export_to_file(os.path.join(self.out_dir, 'run.log'))

    def run(self) -> int:
        handler = {
            'kernel-distance': self.kernel_distance,
            'solve': self.solve,
            'solve-mhd': self.solve_mhd,
            'norm': self.norm,
            'converge': self.converge,
            'converge-mhd': self.converge_mhd,
            'fit': self.fit,
        }[self.args.command]
        handler()
        self.finish()
        return EXIT_OK

    # === KERNELS ===

    def kernel_distance(self):
        args = self.args
        self._open_output('runs/kernel-distance')
        report = certify_two_sided_bound(args.s, args.T, args.alpha_grid, QuadratureConfig(), args.dim,
                                         args.gradient, _workers(args))
        rows = report.rows()
        for row in rows:
            self.logger.log_kernel_distance(row['alpha'], args.s, args.T, row['value'])
        self.logger.log_output(results_io.write_csv(os.path.join(self.out_dir, 'kernel_distance.csv'),
                                                    rows, results_io.KERNEL_DISTANCE_COLUMNS))
        self.logger.log_fit(report.fitted_on, report.slope, 1.0, report.passed)
        certification = {
            's': report.s, 'T': report.T, 'dim': report.dim, 'fitted_on': report.fitted_on,
            'C': report.fitted_upper_C, 'c': report.fitted_lower_c, 'slope': report.slope,
            'quadrature_error_bound': report.quadrature_error_bound, 'pass': report.passed,
        }
        if args.l1_check:
            certification['grad_l1_ratio'] = {
                _label(alpha): grad_kernel_l1_check(alpha, args.T) for alpha in report.alphas
            }
        self.logger.log_output(results_io.write_json(os.path.join(self.out_dir, 'certification.json'),
                                                     certification))

    # === SOLVES ===

    def _initial_field(self, path: Optional[str], preset: str, grid: GridSpec, amplitude: Optional[float],
                       seed: int):
        if path:
            field, _ = read_field(path, grid.box_length)
            if field.grid != grid:
                raise ValueError(f"{path} holds a {field.grid} field, run grid is {grid}")
            return field
        return make_preset(preset, grid, seed=seed, spectrum_decay=self.args.spectrum_decay, amplitude=amplitude)

    def _write_snapshots(self, record, alpha: float):
        rows = []
        for i, t in enumerate(record.times):
            row = {'index': i, 't': t}
            named = [('velocity', 'u', record.velocity[i]), ('pressure', 'p', record.pressure[i])]
            if record.magnetic is not None:
                named.append(('magnetic', 'b', record.magnetic[i]))
            for column, prefix, field in named:
                name = f"{prefix}_{i:04d}.fnsf"
                write_field(os.path.join(self.out_dir, 'snapshots', name), field, alpha)
                row[column] = name
            rows.append(row)
        columns = ['index', 't', 'velocity', 'pressure'] + (['magnetic'] if record.magnetic is not None else [])
        results_io.write_csv(os.path.join(self.out_dir, 'snapshots.csv'), rows, columns)
        results_io.write_csv(os.path.join(self.out_dir, 'diagnostics.csv'), record.diagnostics_rows(),
                             results_io.DIAGNOSTICS_COLUMNS)

    def solve(self):
        args = self.args
        grid = _grid(args)
        config = _solver_config(args, grid, alpha=args.alpha)
        u0 = self._initial_field(args.input, args.preset, grid, args.amplitude, args.seed)
        self._open_output('runs/solve')
        os.makedirs(os.path.join(self.out_dir, 'snapshots'), exist_ok=True)
        record = solve_ns(u0, config, self.logger)
        self._write_snapshots(record, args.alpha)
        summary = {
            'alpha': args.alpha,
            'hs_index': config.sobolev_index,
            'hs_norm_u0': hs_norm_of(u0, config.sobolev_index),
            'C': config.C_const,
            'stability_horizon': stability_horizon(u0, config) if u0.coeffs.any() else math.inf,
            'steps': config.steps,
        }
        results_io.write_json(os.path.join(self.out_dir, 'summary.json'), summary)

    def solve_mhd(self):
        args = self.args
        grid = _grid(args)
        config = _solver_config(args, grid, alpha=args.alpha, beta=args.beta)
        u0 = self._initial_field(args.input, args.preset, grid, args.amplitude, args.seed)
        b0 = self._initial_field(args.b_input, args.b_preset, grid, args.b_amplitude, args.seed + 1)
        self._open_output('runs/solve-mhd')
        os.makedirs(os.path.join(self.out_dir, 'snapshots'), exist_ok=True)
        record = solve_mhd(u0, b0, config, self.logger)
        self._write_snapshots(record, args.alpha)
        summary = {
            'alpha': args.alpha,
            'beta': args.beta,
            'hs_index': config.sobolev_index,
            'hs_norm_u0': hs_norm_of(u0, config.sobolev_index),
            'hs_norm_b0': hs_norm_of(b0, config.sobolev_index),
            'C': config.C_const,
            'steps': config.steps,
        }
        results_io.write_json(os.path.join(self.out_dir, 'summary.json'), summary)

    # === NORMS ===

    def norm(self):
        args = self.args
        spec = NormSpec.parse(args.kind)
        field, _ = read_field(args.field, args.box_length)
        if args.other:
            other, _ = read_field(args.other, args.box_length)
            field = field - other
        value = norm(field, spec)
        print(results_io.format_value(value))
        self._open_output(None)
        if self.out_dir:
            results_io.write_json(os.path.join(self.out_dir, 'norm.json'), {'kind': spec.label, 'value': value})

    # === SWEEPS ===

    def _family(self, kappa: float, **extra) -> DataFamilySpec:
        args = self.args
        return DataFamilySpec(
            base_preset=args.preset, seed=args.seed, spectrum_decay=args.spectrum_decay,
            base_amplitude=args.amplitude, kappa=kappa, c_pert=args.c_pert,
            alphas=tuple(args.alpha_grid), epsilon=args.epsilon,
            perturbation_seed=args.perturbation_seed, **extra
        )

    def _floor(self, spec: DataFamilySpec, config: SolverConfig) -> float:
        args = self.args
        if not args.measure_floor:
            return 0.0
        base = base_velocity(spec, config.grid)
        T, _ = resolve_horizon(spec.epsilon, hs_norm_of(base, config.sobolev_index), config,
                               args.horizon, args.override)
        floor = measurement_floor(spec, config, T)
        self.manifest.set('measurement_floor', floor)
        return floor

    def converge(self):
        args = self.args
        grid = _grid(args)
        template = _solver_config(args, grid, t_end=args.dt)
        self._open_output('runs/converge')
        workers = _workers(args)

        if args.long_horizon:
            spec = self._family(args.kappa[0])
            report = long_horizon_report(spec, template, max_workers=workers, logger=self.logger)
            self.manifest.set('horizon_resolved', report['horizon'])
            fits = [report['fit'].to_dict()] if report['fit'] else []
            extra = {'long_horizon': {k: report[k] for k in ('horizon', 'dt', 'picard_failure',
                                                              'energy_monotone', 'passed')}}
            results_io.write_results({'error_rows': report['rows'], 'fits': fits, 'extra': extra}, self.out_dir)
            return

        spec = self._family(args.kappa[0])
        floor = self._floor(spec, template)
        comp = competition_report(args.kappa, args.alpha_grid, template, spec, args.horizon,
                                  args.override, floor, workers, self.logger)
        diagnostics = {}
        mixed = []
        for kappa, sweep in comp['sweeps'].items():
            self.manifest.set(f"horizon_resolved.kappa_{_label(kappa)}", sweep.horizon)
            self.manifest.set(f"uniform_floor.kappa_{_label(kappa)}", sweep.uniform_floor)
            diagnostics[f"kappa_{_label(kappa)}_reference"] = sweep.reference.diagnostics_rows()
            for alpha in sweep.keys:
                diagnostics[f"kappa_{_label(kappa)}_alpha_{_label(alpha)}"] = sweep.records[alpha].diagnostics_rows()
            if args.mixed_q:
                for p in args.mixed_p:
                    result = mixed_norm_report(sweep, p, args.mixed_q, floor)
                    entry = result.to_dict()
                    entry['kappa'] = kappa
                    mixed.append(entry)
                    self.logger.log_fit(result.norm_kind, result.slope, result.predicted_slope, result.passed)
        report = {
            'error_rows': comp['error_rows'],
            'fits': comp['rows'],
            'extra': {'passed': comp['passed'], 'mixed': mixed},
            'diagnostics': diagnostics,
        }
        results_io.write_results(report, self.out_dir)

    def converge_mhd(self):
        args = self.args
        grid = _grid(args)
        template = _solver_config(args, grid, t_end=args.dt)
        self._open_output('runs/converge-mhd')
        spec = self._family(args.kappa, kappa2=args.kappa2, c_pert2=args.c_pert2,
                            magnetic_amplitude=args.b_amplitude)
        result = mhd_sweep(spec, template, args.mode, args.beta_pin, args.horizon, args.override,
                           _workers(args), self.logger)
        sweep = result['sweep']
        self.manifest.set('horizon_resolved', sweep.horizon)
        diagnostics = {'reference': sweep.reference.diagnostics_rows()}
        for alpha, beta in sweep.keys:
            diagnostics[f"alpha_{_label(alpha)}_beta_{_label(beta)}"] = sweep.records[(alpha, beta)].diagnostics_rows()
        report = {
            'error_rows': result['rows'],
            'fits': [result['fit'].to_dict()] if result['fit'] else [],
            'extra': {'mode': result['mode'], 'beta_pin': result['beta_pin'],
                      'plateau': result['plateau'], 'passed': result['passed']},
            'diagnostics': diagnostics,
        }
        results_io.write_results(report, self.out_dir)

    def fit(self):
        args = self.args
        rows = results_io.read_csv(args.results)
        default_out = os.path.join(os.path.dirname(os.path.abspath(args.results)), 'fit')
        self._open_output(default_out)
        error_rows = []
        for row in rows:
            error_rows.append({
                'alpha': float(row['alpha']),
                'beta': float(row['beta']) if row.get('beta') else None,
                'kappa': float(row['kappa']) if row.get('kappa') else None,
                'norm_kind': row['norm_kind'],
                'error': float(row['error']),
                'excluded': row.get('excluded_flag', 'false') == 'true',
            })
        fits = []
        groups = {}
        for row in error_rows:
            if row['alpha'] >= 2.0:
                continue
            group = groups.setdefault((row['kappa'], row['norm_kind']), {})
            # kernel-only sweeps at several kappa repeat the same points
            group.setdefault((row['alpha'], row['beta']), row)
        for (kappa, kind), points in groups.items():
            chosen = list(points.values())
            if args.predicted is not None:
                predicted = args.predicted
            else:
                predicted = predicted_solution_slope(math.inf if kappa is None else kappa)
            result = fit_rate([r['error'] for r in chosen], [r['alpha'] for r in chosen], kind, predicted,
                              excluded=[r['excluded'] for r in chosen])
            self.logger.log_fit(kind, result.slope, result.predicted_slope, result.passed)
            entry = result.to_dict()
            entry['kappa'] = kappa
            fits.append(entry)
        results_io.write_json(os.path.join(self.out_dir, 'fit.json'), {'fits': fits})
        results_io.write_csv(os.path.join(self.out_dir, 'plot.csv'), results_io.plot_rows(error_rows),
                             results_io.PLOT_COLUMNS)


def run_app(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        Exit code: 0 success, 1 numerical failure, 2 usage error, 3 I/O error
    """
    try:
        args, manifest = parse_cli(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    runner = CommandRunner(args, manifest)
    try:
        return runner.run()
    except FlowError as e:
        print(f"Error: {e}", file=sys.stderr)
        runner.finish()
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
