"""
Mild Solver Module
Time integration of the mild (Duhamel) formulation of fractional
Navier-Stokes and MHD on the periodic grid, plus existence-time formulas.
"""
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import EnergyViolationError, PicardDivergenceError
from .norms import NormSpec, norm
from .spectral_core import (
    FractionalSymbol,
    GridSpec,
    SpectralField,
    leray_project,
    nonlinear_advection,
    product_tensor,
)

if TYPE_CHECKING:
    from utils.logger import Logger


SCHEMES = ('picard_duhamel', 'etd_rk2')

# Gauss-Legendre nodes on [0, 1]
GAUSS_FRACTIONS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))

DIVERGENCE_TOL = 1e-8


def default_sobolev_index(dim: int) -> float:
    """s = 2 in 3D, 1.5 in 2D; both exceed dim/2"""
    return 2.0 if dim == 3 else 1.5


@dataclass(frozen=True)
class SolverConfig:
    """
    Time-stepping parameters

    Attributes:
        grid: Periodic grid
        alpha: Velocity dissipation order in (1, 2]
        beta: Magnetic dissipation order in (1, 2] (MHD only; defaults to alpha)
        dt: Fixed time step
        t_end: Final time, a multiple of dt
        picard_tol: Relative L2 stopping tolerance of the per-step Picard loop
        picard_max_iter: Picard iteration cap
        scheme: picard_duhamel or etd_rk2
        snapshots: Number of evenly spaced snapshot intervals
        snapshot_times: Explicit snapshot times (multiples of dt), overrides snapshots
        hs_index: Sobolev index of the horizon check (dimension default when None)
        C_const: Constant of the existence-time formula
        horizon_factor: Multiplier on the existence time before warning
        energy_tol: Allowed relative energy growth per step
    """
    grid: GridSpec
    alpha: float = 2.0
    beta: Optional[float] = None
    dt: float = 1e-3
    t_end: float = 0.1
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    scheme: str = 'picard_duhamel'
    snapshots: int = 32
    snapshot_times: Optional[Tuple[float, ...]] = None
    hs_index: Optional[float] = None
    C_const: float = 1.0
    horizon_factor: float = 1.0
    energy_tol: float = 1e-6

    def __post_init__(self):
        FractionalSymbol(self.alpha)
        if self.beta is not None:
            FractionalSymbol(self.beta)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.dt <= self.t_end * (1.0 + 1e-12):
            raise ValueError(f"dt ({self.dt}) must not exceed t_end ({self.t_end})")
        if not self.picard_tol > 0:
            raise ValueError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iter < 1:
            raise ValueError(f"picard_max_iter must be >= 1, got {self.picard_max_iter}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if self.snapshots < 1:
            raise ValueError(f"snapshots must be >= 1, got {self.snapshots}")
        if not self.C_const > 0:
            raise ValueError(f"C_const must be positive, got {self.C_const}")
        self._step_index(self.t_end, 't_end')
        for t in self.snapshot_times or ():
            if not 0 <= t <= self.t_end * (1.0 + 1e-12):
                raise ValueError(f"snapshot time {t} outside [0, t_end]")
            self._step_index(t, 'snapshot time')

    def _step_index(self, t: float, label: str) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(abs(t), self.dt):
            raise ValueError(f"{label} {t} is not a multiple of dt={self.dt}")
        return k

    @property
    def steps(self) -> int:
        return self._step_index(self.t_end, 't_end')

    @property
    def magnetic_order(self) -> float:
        return self.alpha if self.beta is None else self.beta

    @property
    def sobolev_index(self) -> float:
        return default_sobolev_index(self.grid.dim) if self.hs_index is None else self.hs_index

    def snapshot_steps(self) -> List[int]:
        """Step indices at which snapshots are stored, always including 0 and the last step"""
        if self.snapshot_times:
            chosen = {self._step_index(t, 'snapshot time') for t in self.snapshot_times}
        else:
            chosen = set(np.round(np.linspace(0, self.steps, self.snapshots + 1)).astype(int).tolist())
        chosen.update({0, self.steps})
        return sorted(chosen)


@dataclass
class SolveRecord:
    """
    Snapshots and per-step diagnostics of one time march

    diagnostics holds equal-length lists keyed by t, energy_kin, energy_mag,
    div_residual, picard_iters (one entry per step, plus t = 0).
    """
    config: SolverConfig
    times: List[float] = field(default_factory=list)
    velocity: List[SpectralField] = field(default_factory=list)
    pressure: List[SpectralField] = field(default_factory=list)
    magnetic: Optional[List[SpectralField]] = None
    diagnostics: Dict[str, list] = field(default_factory=lambda: {
        't': [], 'energy_kin': [], 'energy_mag': [], 'div_residual': [], 'picard_iters': []
    })

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    def snapshot_index(self, t: float) -> int:
        """Index of the snapshot stored at time t"""
        for i, ts in enumerate(self.times):
            if abs(ts - t) <= 1e-9 * max(abs(t), self.config.dt):
                return i
        raise KeyError(f"no snapshot at t={t}")

    def velocity_at(self, t: float) -> SpectralField:
        return self.velocity[self.snapshot_index(t)]

    def diagnostics_rows(self) -> List[dict]:
        keys = list(self.diagnostics)
        return [dict(zip(keys, values)) for values in zip(*(self.diagnostics[k] for k in keys))]


@dataclass
class ExistenceTimeReport:
    """Existence times over an alpha sample and the uniform floor T_0"""
    T_alpha: Dict[float, float]
    T_0: float
    epsilon: float
    C_const: float
    data_norms: Dict[float, float]

    @property
    def floor_holds(self) -> bool:
        return all(self.T_0 <= t for t in self.T_alpha.values())


def existence_time(alpha: float, data_norm_hs: float, C_const: float = 1.0) -> float:
    """
    Local existence time T_alpha = ½((1 - 1/alpha)/(4 C ‖u0‖_{H^s}))^(alpha/(alpha-1))

    Args:
        alpha: Dissipation order, alpha > 1
        data_norm_hs: H^s norm of the initial data
        C_const: Constant of the contraction estimate

    Returns:
        Positive existence time
    """
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1 for a positive existence time, got {alpha}")
    if not data_norm_hs > 0:
        raise ValueError(f"data norm must be positive, got {data_norm_hs}")
    if not C_const > 0:
        raise ValueError(f"C_const must be positive, got {C_const}")
    base = (1.0 - 1.0 / alpha) / (4.0 * C_const * data_norm_hs)
    return 0.5 * base ** (alpha / (alpha - 1.0))


def existence_time_mhd(alpha: float, beta: float, u_norm: float, b_norm: float,
                       C_const: float = 1.0) -> float:
    """
    T_{alpha,beta}: the smaller of the velocity and magnetic existence times

    A zero magnetic (or velocity) norm imposes no restriction from that field.
    """
    if not alpha > 1.0 or not beta > 1.0:
        raise ValueError(f"alpha and beta must exceed 1, got ({alpha}, {beta})")
    if u_norm < 0 or b_norm < 0:
        raise ValueError("field norms must be non-negative")
    times = []
    if u_norm > 0:
        times.append(existence_time(alpha, u_norm, C_const))
    if b_norm > 0:
        times.append(existence_time(beta, b_norm, C_const))
    return min(times) if times else math.inf


def _uniform_floor_value(epsilon: float, data_norm_hs_limit: float, C_const: float) -> float:
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not data_norm_hs_limit > 0:
        raise ValueError(f"data norm must be positive, got {data_norm_hs_limit}")
    if not C_const > 0:
        raise ValueError(f"C_const must be positive, got {C_const}")
    A = (1.0 - 1.0 / (1.0 + epsilon)) / (4.0 * C_const * data_norm_hs_limit)
    if A < 1.0:
        return 0.5 * A ** (2.0 / epsilon)
    return 0.5 * A ** (1.0 + epsilon)


def existence_report(epsilon: float, data_norm_hs_limit: float, C_const: float = 1.0,
                     alphas: Optional[Sequence[float]] = None,
                     data_norms: Optional[Dict[float, float]] = None) -> ExistenceTimeReport:
    """
    T_alpha over an alpha sample in (1+epsilon, 2] against the floor T_0

    Args:
        epsilon: Lower gap of the alpha range
        data_norm_hs_limit: ‖u0,2‖_{H^s}
        C_const: Contraction constant
        alphas: Sample of alphas; 64 evenly spaced points by default
        data_norms: Per-alpha ‖u0,alpha‖_{H^s}; 3/2 × the limit norm by default
    """
    T_0 = _uniform_floor_value(epsilon, data_norm_hs_limit, C_const)
    if alphas is None:
        alphas = np.linspace(1.0 + epsilon, 2.0, 65)[1:]
    norms = {}
    times = {}
    for alpha in alphas:
        a = float(alpha)
        norms[a] = data_norms[a] if data_norms else 1.5 * data_norm_hs_limit
        times[a] = existence_time(a, norms[a], C_const)
    return ExistenceTimeReport(T_alpha=times, T_0=T_0, epsilon=epsilon, C_const=C_const, data_norms=norms)


def uniform_time_floor(epsilon: float, data_norm_hs_limit: float, C_const: float = 1.0) -> float:
    """
    Uniform-in-alpha existence floor T_0 = ½ max[A^(2/eps), A^(1+eps)]

    A = (1 - 1/(1+eps))/(4 C ‖u0,2‖_{H^s}); the first power applies when A < 1.
    The floor is checked against T_alpha over a dense alpha sample using
    the inflated norm 3/2 ‖u0,2‖; a violation is reported as a warning.
    """
    report = existence_report(epsilon, data_norm_hs_limit, C_const)
    if not report.floor_holds:
        worst = min(report.T_alpha, key=report.T_alpha.get)
        warnings.warn(
            f"T_0={report.T_0:.6g} exceeds T_alpha={report.T_alpha[worst]:.6g} at alpha={worst:.4g}",
            RuntimeWarning,
        )
    return report.T_0


def hs_norm_of(u: SpectralField, s: float) -> float:
    return norm(u, NormSpec.hs(s))


def stability_horizon(u0: SpectralField, config: SolverConfig,
                      b0: Optional[SpectralField] = None) -> float:
    """existence_time at the measured H^s norm of the data, times config.horizon_factor"""
    s = config.sobolev_index
    u_norm = hs_norm_of(u0, s)
    b_norm = 0.0 if b0 is None else hs_norm_of(b0, s)
    T = existence_time_mhd(config.alpha, config.magnetic_order, u_norm, b_norm, config.C_const)
    return T * config.horizon_factor


def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z"""
    return special.exprel(z)


def phi2(z: np.ndarray) -> np.ndarray:
    """(e^z - 1 - z)/z^2, by Taylor series near 0"""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    out[small] = 0.5 + zs / 6.0 + zs ** 2 / 24.0 + zs ** 3 / 120.0 + zs ** 4 / 720.0
    zl = z[~small]
    out[~small] = (special.exprel(zl) - 1.0) / zl
    return out


class Propagator:
    """
    Semigroup factors of one dissipation order for a fixed step dt

    Holds exp(-dt|ξ|^order), the factors at the Gauss nodes, the exponential
    collocation weights of the Picard loop and the ETD-RK2 phi-factors.
    """

    def __init__(self, grid: GridSpec, order: float, dt: float):
        lam = FractionalSymbol(order).on_grid(grid)
        self.grid = grid
        self.order = order
        self.dt = dt
        taus = [dt * f for f in GAUSS_FRACTIONS]
        gap = taus[1] - taus[0]
        self.full = np.exp(-lam * dt)
        self.nodes = [np.exp(-lam * tau) for tau in taus]
        self.rest = [np.exp(-lam * (dt - tau)) for tau in taus]
        # ∫_0^τ e^{-λ(τ-σ)} ℓ_m(σ) dσ for the linear interpolant through the nodes
        self.collocation = []
        for tau in taus:
            p1 = tau * phi1(-lam * tau)
            p2 = tau * tau * phi2(-lam * tau)
            self.collocation.append(((taus[1] * p1 - p2) / gap, (p2 - taus[0] * p1) / gap))
        self.etd_phi1 = dt * phi1(-lam * dt)
        self.etd_phi2 = dt * phi2(-lam * dt)


@lru_cache(maxsize=16)
def propagator(grid: GridSpec, order: float, dt: float) -> Propagator:
    return Propagator(grid, order, dt)


def _project(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    return leray_project(SpectralField(grid, coeffs)).coeffs


def _ns_nonlinearity(grid: GridSpec) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """N(u) = -P div(u ⊗ u)"""
    def apply(states):
        u = SpectralField(grid, states[0])
        return [-_project(nonlinear_advection(u, u).coeffs, grid)]
    return apply


def _mhd_nonlinearity(grid: GridSpec) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """Velocity: -P[(u·∇)u - (b·∇)b]; induction: -P[(u·∇)b - (b·∇)u]"""
    def apply(states):
        u = SpectralField(grid, states[0])
        b = SpectralField(grid, states[1])
        nu = nonlinear_advection(u, u).coeffs - nonlinear_advection(b, b).coeffs
        nb = nonlinear_advection(u, b).coeffs - nonlinear_advection(b, u).coeffs
        return [-_project(nu, grid), -_project(nb, grid)]
    return apply


def _l2_squared(arrays: Sequence[np.ndarray]) -> float:
    return float(sum(np.sum(np.abs(a) ** 2) for a in arrays))


def _picard_system(states: List[np.ndarray], props: List[Propagator], nonlinear: Callable,
                   tol: float, max_iter: int, time: Optional[float] = None) -> Tuple[List[np.ndarray], int]:
    """
    One Duhamel step with 2-point Gauss quadrature in τ

    The node values v_k = E(τ_k)u + ∫_0^{τ_k} E(τ_k-σ)N(v(σ))dσ are found by
    Picard iteration, N being interpolated linearly between the nodes.
    """
    nodes = [[p.nodes[k] * x for p, x in zip(props, states)] for k in range(2)]
    free = [[v.copy() for v in node] for node in nodes]
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        n_vals = [nonlinear(node) for node in nodes]
        updated = []
        for k in range(2):
            updated.append([
                free[k][f] + props[f].collocation[k][0] * n_vals[0][f] + props[f].collocation[k][1] * n_vals[1][f]
                for f in range(len(states))
            ])
        change = _l2_squared([updated[k][f] - nodes[k][f] for k in range(2) for f in range(len(states))])
        size = _l2_squared([v for node in updated for v in node])
        residual = math.sqrt(change / size) if size > 0 else math.sqrt(change)
        nodes = updated
        if residual < tol:
            n_vals = [nonlinear(node) for node in nodes]
            half = 0.5 * props[0].dt
            result = [
                props[f].full * states[f]
                + half * (props[f].rest[0] * n_vals[0][f] + props[f].rest[1] * n_vals[1][f])
                for f in range(len(states))
            ]
            return result, iteration
    raise PicardDivergenceError(residual, max_iter, time)


def _etd_rk2_system(states: List[np.ndarray], props: List[Propagator],
                    nonlinear: Callable) -> List[np.ndarray]:
    """Cox-Matthews ETD-RK2 with exact semigroup factors"""
    n0 = nonlinear(states)
    stage = [p.full * x + p.etd_phi1 * n for p, x, n in zip(props, states, n0)]
    n1 = nonlinear(stage)
    return [a + p.etd_phi2 * (m - n) for p, a, m, n in zip(props, stage, n1, n0)]


def _require_solenoidal(f: SpectralField, name: str):
    if not f.is_vector:
        raise ValueError(f"{name} must be a vector field")
    if f.divergence_residual() > DIVERGENCE_TOL:
        raise ValueError(f"{name} is not divergence-free (residual {f.divergence_residual():.3e})")


def _require_grid(f: SpectralField, config: SolverConfig, name: str):
    if f.grid != config.grid:
        raise ValueError(f"grid mismatch: {name} on {f.grid}, config on {config.grid}")


def step_picard(u: SpectralField, dt: float, config: SolverConfig) -> SpectralField:
    """
    Advance u by dt with the Picard-Duhamel scheme

    Raises:
        PicardDivergenceError: the node iteration did not reach config.picard_tol
    """
    _require_grid(u, config, 'u')
    _require_solenoidal(u, 'u')
    prop = propagator(u.grid, config.alpha, dt)
    out, _ = _picard_system([u.coeffs], [prop], _ns_nonlinearity(u.grid),
                            config.picard_tol, config.picard_max_iter)
    return SpectralField(u.grid, out[0], solenoidal=True)


def step_etd_rk2(u: SpectralField, dt: float, config: SolverConfig) -> SpectralField:
    """Advance u by dt with ETD-RK2"""
    _require_grid(u, config, 'u')
    prop = propagator(u.grid, config.alpha, dt)
    out = _etd_rk2_system([u.coeffs], [prop], _ns_nonlinearity(u.grid))
    return SpectralField(u.grid, out[0], solenoidal=u.solenoidal)


def recover_pressure(u: SpectralField, b: Optional[SpectralField] = None) -> SpectralField:
    """
    Pressure p = Σ R_i R_j (u_i u_j) from the velocity

    With a magnetic field the Lorentz stress enters with the sign of the
    momentum equation, p = Σ R_i R_j (u_i u_j - b_i b_j).
    The b b stress is subtracted; it is the Lorentz force, not a second
    advection term.

    Returns:
        Zero-mean scalar field
    """
    if not u.is_vector:
        raise ValueError("recover_pressure needs a vector velocity")
    grid = u.grid
    stress = product_tensor(u, u)
    if b is not None:
        if b.grid != grid:
            raise ValueError(f"grid mismatch: {u.grid} vs {b.grid}")
        stress = stress - product_tensor(b, b)
    xi = grid.odd_wavenumbers
    k2 = grid.odd_k_squared
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]
    # R_i R_j has symbol -ξ_i ξ_j/|ξ|²
    contracted = np.einsum('i...,j...,ij...->...', xi, xi, stress)
    p_hat = -contracted * inv_k2 * grid.dealias
    return SpectralField(grid, p_hat)


def kinetic_energy(u: SpectralField) -> float:
    """½‖u‖²_{L²} (mean measure)"""
    return 0.5 * _l2_squared([u.coeffs])


def _warn_horizon(config: SolverConfig, horizon: float, logger: Optional["Logger"]):
    if config.t_end > horizon:
        message = (f"t_end={config.t_end:g} exceeds the stability horizon {horizon:.4g} "
                   f"(C={config.C_const:g}); Picard contraction is not guaranteed")
        warnings.warn(message, RuntimeWarning)
        if logger:
            logger.log_step_warning(message)


def _march(config: SolverConfig, fields: List[SpectralField], orders: List[float],
           nonlinear: Callable, kind: str, logger: Optional["Logger"]) -> SolveRecord:
    grid = config.grid
    props = [propagator(grid, order, config.dt) for order in orders]
    magnetic = len(fields) == 2
    record = SolveRecord(config=config, magnetic=[] if magnetic else None)
    snapshot_steps = set(config.snapshot_steps())

    def store(step: int, states: List[np.ndarray], iterations: int):
        t = step * config.dt
        u = SpectralField(grid, states[0], solenoidal=True)
        b = SpectralField(grid, states[1], solenoidal=True) if magnetic else None
        diag = record.diagnostics
        diag['t'].append(t)
        diag['energy_kin'].append(kinetic_energy(u))
        diag['energy_mag'].append(kinetic_energy(b) if magnetic else 0.0)
        residual = u.divergence_residual()
        if magnetic:
            residual = max(residual, b.divergence_residual())
        diag['div_residual'].append(residual)
        diag['picard_iters'].append(iterations)
        if step in snapshot_steps:
            record.times.append(t)
            record.velocity.append(u)
            record.pressure.append(recover_pressure(u, b))
            if magnetic:
                record.magnetic.append(b)

    states = [f.coeffs.copy() for f in fields]
    store(0, states, 0)
    energy = _l2_squared(states)
    for step in range(1, config.steps + 1):
        t = step * config.dt
        try:
            if config.scheme == 'picard_duhamel':
                states, iterations = _picard_system(states, props, nonlinear, config.picard_tol,
                                                    config.picard_max_iter, time=t)
            else:
                states, iterations = _etd_rk2_system(states, props, nonlinear), 0
        except PicardDivergenceError as e:
            if logger:
                logger.log_solve(kind, config.alpha, config.t_end, step, False, str(e))
            raise
        updated = _l2_squared(states)
        if updated > energy * (1.0 + config.energy_tol):
            if logger:
                logger.log_solve(kind, config.alpha, config.t_end, step, False, "energy increase")
            raise EnergyViolationError(t, 0.5 * energy, 0.5 * updated)
        energy = updated
        store(step, states, iterations)

    if logger:
        logger.log_solve(kind, config.alpha, config.t_end, config.steps, True,
                         f"scheme={config.scheme} snapshots={len(record.times)}")
    return record


def solve_ns(u0: SpectralField, config: SolverConfig, logger: Optional["Logger"] = None) -> SolveRecord:
    """
    March fractional Navier-Stokes from u0 to config.t_end

    Args:
        u0: Divergence-free initial velocity on config.grid
        config: Solver parameters
        logger: Optional activity logger

    Returns:
        SolveRecord with velocity and pressure snapshots

    Raises:
        PicardDivergenceError: a step failed to contract
        EnergyViolationError: energy grew beyond config.energy_tol in one step
    """
    _require_grid(u0, config, 'u0')
    _require_solenoidal(u0, 'u0')
    if np.any(u0.coeffs):
        _warn_horizon(config, stability_horizon(u0, config), logger)
    return _march(config, [u0], [config.alpha], _ns_nonlinearity(config.grid), 'NS', logger)


def solve_mhd(u0: SpectralField, b0: SpectralField, config: SolverConfig,
              logger: Optional["Logger"] = None) -> SolveRecord:
    """
    March the fractional MHD system; the induction equation dissipates with order config.beta

    Returns:
        SolveRecord with velocity, pressure and magnetic snapshots
    """
    _require_grid(u0, config, 'u0')
    _require_grid(b0, config, 'b0')
    _require_solenoidal(u0, 'u0')
    _require_solenoidal(b0, 'b0')
    if np.any(u0.coeffs) or np.any(b0.coeffs):
        _warn_horizon(config, stability_horizon(u0, config, b0), logger)
    return _march(config, [u0, b0], [config.alpha, config.magnetic_order],
                  _mhd_nonlinearity(config.grid), 'MHD', logger)
