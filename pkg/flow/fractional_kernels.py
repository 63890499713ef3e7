"""
Fractional Kernels Module
Fractional heat semigroup multipliers and H^-s distances between the
fractional kernel h_alpha (symbol exp(-t|ξ|^alpha)) and the heat kernel h.
"""
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .quadrature import adaptive_integrate
from .spectral_core import FractionalSymbol, GridSpec, SpectralField


# Surface area of the unit sphere
SPHERE_AREA = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class SemigroupMultiplier:
    """exp(-t|ξ|^alpha), the Fourier symbol of h_alpha(t, .)"""
    alpha: float
    t: float

    def __post_init__(self):
        FractionalSymbol(self.alpha)
        if not self.t >= 0:
            raise ValueError(f"semigroup time must be >= 0, got {self.t}")

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        if self.t == 0:
            return np.ones(grid.shape)
        return np.exp(-self.t * FractionalSymbol(self.alpha).on_grid(grid))


def semigroup_factor(grid: GridSpec, alpha: float, t: float) -> np.ndarray:
    """Mode-wise exp(-t|ξ|^alpha) on a grid"""
    return SemigroupMultiplier(alpha, t).on_grid(grid)


def semigroup_apply(m: SemigroupMultiplier, f: SpectralField) -> SpectralField:
    """Convolve f with h_alpha(t, .), i.e. multiply each mode by exp(-t|ξ|^alpha)"""
    return f.with_coeffs(f.coeffs * m.on_grid(f.grid))


@dataclass(frozen=True)
class QuadratureConfig:
    """
    Accuracy controls for the radial H^-s integrals

    Tolerances apply to the squared norm divided by ((2 - alpha) t)^2, which
    keeps them meaningful as alpha -> 2.
    """
    panel_tol: float = 1e-12
    rel_tol: float = 1e-13
    tail_tol: float = 1e-10
    coarse_points: int = 64
    min_time_fraction: float = 1e-12
    refine_xatol: float = 1e-6
    max_panels: int = 4000


def _validate(alpha: float, s: float, dim: int, gradient: bool):
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    if dim not in SPHERE_AREA:
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    s_min = dim / 2.0 + (1.0 if gradient else 0.0)
    if not s > s_min:
        kind = "gradient-kernel" if gradient else "kernel"
        raise ValueError(
            f"s must exceed {s_min:g} for the {kind} distance in dimension {dim} "
            f"(integral diverges as t -> 0), got {s}"
        )


def _kernel_gap(r: np.ndarray, alpha: float, t: float) -> np.ndarray:
    """|exp(-t r^alpha) - exp(-t r^2)| without cancellation near alpha = 2"""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    pos = r > 0
    rp = r[pos]
    r2 = rp * rp
    # r^alpha - r^2 = r^2 expm1((alpha - 2) ln r)
    spread = np.abs(r2 * np.expm1((alpha - 2.0) * np.log(rp)))
    smaller = np.minimum(rp ** alpha, r2)
    out[pos] = np.exp(-t * smaller) * -np.expm1(-t * spread)
    return out


def radial_integrand(r: np.ndarray, alpha: float, t: float, s: float, dim: int,
                     gradient: bool = False) -> np.ndarray:
    """ω_d |exp(-t r^alpha) - exp(-t r^2)|^2 r^(d-1+2g) (1+r^2)^-s, g = 1 for the gradient"""
    power = dim - 1 + (2 if gradient else 0)
    gap = _kernel_gap(r, alpha, t)
    return SPHERE_AREA[dim] * gap * gap * r ** power * (1.0 + r * r) ** (-s)


def tail_bound(R: float, alpha: float, t: float, s: float, dim: int, gradient: bool = False) -> float:
    """
    Upper bound of the radial integral over [R, inf), R >= 1

    Uses |gap| <= exp(-t r^alpha) and (1+r^2)^-s <= r^-2s for r >= 1, then
    the exact incomplete-gamma integral of exp(-2t r^alpha) r^p.
    """
    if R < 1.0:
        raise ValueError("tail bound needs R >= 1")
    p = dim - 1 + (2 if gradient else 0) - 2.0 * s
    x = 2.0 * t * R ** alpha
    omega = SPHERE_AREA[dim]
    if p + 1.0 > 0:
        a = (p + 1.0) / alpha
        upper = special.gammaincc(a, x) * special.gamma(a)
        return omega * upper * (2.0 * t) ** (-a) / alpha
    a = 1.0 / alpha
    upper = special.gammaincc(a, x) * special.gamma(a)
    return omega * R ** p * upper * (2.0 * t) ** (-a) / alpha


def squared_distance(alpha: float, s: float, t: float, dim: int = 3, gradient: bool = False,
                     quad: Optional[QuadratureConfig] = None) -> Tuple[float, float]:
    """
    ‖h_alpha(t) - h(t)‖²_{H^-s} (or of the gradients) at one time

    Returns:
        Tuple of (squared norm, rigorous quadrature + tail error bound)
    """
    quad = quad or QuadratureConfig()
    if t == 0 or alpha == 2.0:
        return 0.0, 0.0
    scale = ((2.0 - alpha) * t) ** 2
    r_peak = t ** (-1.0 / alpha)

    R = max(2.0, 8.0 * r_peak)
    tail = tail_bound(R, alpha, t, s, dim, gradient) / scale
    for _ in range(200):
        if tail <= quad.tail_tol:
            break
        R *= 2.0
        tail = tail_bound(R, alpha, t, s, dim, gradient) / scale

    breakpoints = [1.0] + [r_peak * 2.0 ** j for j in range(-8, 9)]
    result = adaptive_integrate(
        lambda r: radial_integrand(r, alpha, t, s, dim, gradient) / scale,
        0.0, R,
        breakpoints=breakpoints,
        panel_tol=quad.panel_tol,
        max_panels=quad.max_panels,
        rel_tol=quad.rel_tol,
    )
    return result['value'] * scale, (result['error_bound'] + tail) * scale


def _coarse_times(T: float, quad: QuadratureConfig) -> np.ndarray:
    n_geo = quad.coarse_points * 3 // 4
    n_lin = quad.coarse_points - n_geo
    geometric = T * np.logspace(math.log10(quad.min_time_fraction), 0.0, n_geo)
    linear = T * np.arange(1, n_lin + 1) / n_lin
    return np.unique(np.concatenate([geometric, linear]))


def _sup_over_time(alpha: float, s: float, T: float, dim: int, gradient: bool,
                   quad: QuadratureConfig) -> Tuple[float, float, float]:
    times = _coarse_times(T, quad)
    values = []
    for t in times:
        values.append(squared_distance(alpha, s, t, dim, gradient, quad))
    sq = np.array([v[0] for v in values])
    best = int(np.argmax(sq))
    t_best, sq_best, err_best = times[best], sq[best], values[best][1]

    # golden-section/Brent refinement in log t between the neighbouring samples
    lo = math.log(times[max(best - 1, 0)])
    hi = math.log(times[min(best + 1, len(times) - 1)])
    if hi > lo:
        refined = minimize_scalar(
            lambda u: -squared_distance(alpha, s, math.exp(u), dim, gradient, quad)[0],
            bounds=(lo, hi), method='bounded',
            options={'xatol': quad.refine_xatol},
        )
        t_ref = math.exp(refined.x)
        sq_ref, err_ref = squared_distance(alpha, s, t_ref, dim, gradient, quad)
        if sq_ref > sq_best:
            t_best, sq_best, err_best = t_ref, sq_ref, err_ref

    value = math.sqrt(sq_best)
    err = math.sqrt(sq_best + err_best) - math.sqrt(max(sq_best - err_best, 0.0))
    return value, float(t_best), err


def kernel_distance_hms(alpha: float, s: float, T: float, quad: Optional[QuadratureConfig] = None,
                        dim: int = 3) -> Tuple[float, float, float]:
    """
    sup over 0 <= t <= T of ‖h_alpha(t) - h(t)‖_{H^-s}

    Args:
        alpha: Fractional order in (1, 2]
        s: Sobolev index, s > dim/2
        T: Horizon, T > 0
        quad: Quadrature controls
        dim: 2 or 3

    Returns:
        Tuple of (value, maximizing time t_star, error bound on value)
    """
    _validate(alpha, s, dim, gradient=False)
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if alpha == 2.0:
        return 0.0, T, 0.0
    return _sup_over_time(alpha, s, T, dim, False, quad or QuadratureConfig())


def grad_kernel_distance_hms(alpha: float, s: float, T: float, quad: Optional[QuadratureConfig] = None,
                             dim: int = 3) -> Tuple[float, float, float]:
    """Same as kernel_distance_hms for ∇h_alpha - ∇h; needs s > dim/2 + 1"""
    _validate(alpha, s, dim, gradient=True)
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if alpha == 2.0:
        return 0.0, T, 0.0
    return _sup_over_time(alpha, s, T, dim, True, quad or QuadratureConfig())


def kernel_distance_table(
    alphas: Sequence[float],
    s: float,
    T: float,
    dim: int = 3,
    gradient: bool = False,
    quad: Optional[QuadratureConfig] = None,
    max_workers: int = 4,
    callback: Optional[Callable] = None
) -> List[dict]:
    """
    Kernel distances for several alphas using a thread pool

    Args:
        alphas: Fractional orders
        s, T, dim, gradient, quad: As in kernel_distance_hms
        max_workers: Maximum concurrent threads
        callback: Optional callback function(done, total, row)

    Returns:
        List of rows sorted by alpha with keys: alpha, s, T, dim, value, t_star, err_bound, error
    """
    compute = grad_kernel_distance_hms if gradient else kernel_distance_hms
    rows = []
    total = len(alphas)
    done = 0

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        future_to_alpha = {
            executor.submit(compute, alpha, s, T, quad, dim): alpha
            for alpha in alphas
        }
        for future in as_completed(future_to_alpha):
            alpha = future_to_alpha[future]
            row = {'alpha': alpha, 's': s, 'T': T, 'dim': dim,
                   'value': None, 't_star': None, 'err_bound': None, 'error': None}
            try:
                row['value'], row['t_star'], row['err_bound'] = future.result()
            except Exception as e:
                row['error'] = str(e)
            rows.append(row)
            done += 1
            if callback:
                callback(done, total, row)

    rows.sort(key=lambda r: r['alpha'])
    return rows


def rate_bound_holds(C: float, c: float, slope: float) -> bool:
    """0 < c <= 2C and a log-log slope within 0.1 of linear"""
    return 0 < c <= 2.0 * C and 0.9 <= slope <= 1.1


@dataclass
class KernelDistanceReport:
    """Kernel distances over an alpha grid with fitted two-sided rate constants"""
    s: float
    T: float
    dim: int
    alphas: List[float]
    distances: List[float]
    grad_distances: Optional[List[float]]
    t_stars: List[float]
    err_bounds: List[float]
    fitted_upper_C: float
    fitted_lower_c: float
    slope: float
    quadrature_error_bound: float
    fitted_on: str = 'kernel'

    @property
    def passed(self) -> bool:
        return rate_bound_holds(self.fitted_upper_C, self.fitted_lower_c, self.slope)

    def rows(self) -> List[dict]:
        """alpha, s, T, dim, value, t_star, err_bound for the fitted distances"""
        values = self.grad_distances if self.fitted_on == 'gradient' else self.distances
        return [
            {'alpha': alpha, 's': self.s, 'T': self.T, 'dim': self.dim, 'value': value,
             't_star': t_star, 'err_bound': err}
            for alpha, value, t_star, err in zip(self.alphas, values, self.t_stars, self.err_bounds)
        ]


def fit_linear_rate(alphas: Sequence[float], values: Sequence[float], T: float) -> Dict[str, float]:
    """C = max value/(T(2-alpha)), c = min value/((T/2)(2-alpha)), log-log slope"""
    gaps = 2.0 - np.asarray(alphas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if np.any(gaps <= 0):
        raise ValueError("alpha grid must lie strictly below 2 (rate (2 - alpha) would vanish)")
    if np.any(values <= 0):
        raise ValueError("kernel distances must be positive to fit a rate")
    slope, _ = np.polyfit(np.log(gaps), np.log(values), 1)
    return {
        'C': float(np.max(values / (T * gaps))),
        'c': float(np.min(values / (0.5 * T * gaps))),
        'slope': float(slope),
    }


def certify_two_sided_bound(
    s: float,
    T: float,
    alpha_grid: Sequence[float],
    quad: Optional[QuadratureConfig] = None,
    dim: int = 3,
    gradient: bool = False,
    max_workers: int = 4
) -> KernelDistanceReport:
    """
    Check C T (2-alpha) >= sup_t distance >= c (T/2)(2-alpha) on an alpha grid

    Gradient distances are included whenever s > dim/2 + 1; the fit uses them
    when gradient is True.
    """
    alphas = sorted(float(a) for a in alpha_grid)
    if len(alphas) < 2:
        raise ValueError("alpha grid needs at least two points")
    if any(a >= 2.0 for a in alphas):
        raise ValueError("alpha grid must not contain alpha = 2 (rate (2 - alpha) would vanish)")
    with_grad = s > dim / 2.0 + 1.0
    if gradient and not with_grad:
        raise ValueError(f"gradient certification needs s > {dim / 2.0 + 1.0:g}, got {s}")

    def collect(grad: bool) -> List[dict]:
        rows = kernel_distance_table(alphas, s, T, dim, grad, quad, max_workers)
        failed = [r for r in rows if r['error']]
        if failed:
            raise ValueError(f"kernel distance failed at alpha={failed[0]['alpha']}: {failed[0]['error']}")
        return rows

    plain = collect(False)
    grad_rows = collect(True) if with_grad else None
    fit_rows = grad_rows if gradient else plain
    fit = fit_linear_rate(alphas, [r['value'] for r in fit_rows], T)

    return KernelDistanceReport(
        s=s, T=T, dim=dim, alphas=alphas,
        distances=[r['value'] for r in plain],
        grad_distances=None if grad_rows is None else [r['value'] for r in grad_rows],
        t_stars=[r['t_star'] for r in fit_rows],
        err_bounds=[r['err_bound'] for r in fit_rows],
        fitted_upper_C=fit['C'],
        fitted_lower_c=fit['c'],
        slope=fit['slope'],
        quadrature_error_bound=max(r['err_bound'] for r in fit_rows),
        fitted_on='gradient' if gradient else 'kernel',
    )


def shell_lower_bound(alpha: float, s: float, T: float, dim: int = 3) -> float:
    """‖h_alpha(T/2) - h(T/2)‖_{H^-s} restricted to the shell 2 < |ξ| < 4"""
    _validate(alpha, s, dim, gradient=False)
    if alpha == 2.0:
        return 0.0
    t = 0.5 * T
    result = adaptive_integrate(lambda r: radial_integrand(r, alpha, t, s, dim), 2.0, 4.0)
    return math.sqrt(max(result['value'], 0.0))


def alpha_derivative_sup(t: float, alpha_lo: float = 1.0, alpha_hi: float = 2.0,
                         alpha_samples: int = 33) -> Tuple[float, float, float]:
    """
    sup over r > 0 and alpha in [alpha_lo, alpha_hi] of |d/dalpha exp(-t r^alpha)|

    The derivative is -t r^alpha ln(r) exp(-t r^alpha).

    Returns:
        Tuple of (value, r_star, alpha_star)
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if not 0 < alpha_lo <= alpha_hi:
        raise ValueError(f"need 0 < alpha_lo <= alpha_hi, got [{alpha_lo}, {alpha_hi}]")

    def magnitude(log_r: float, alpha: float) -> float:
        y = t * math.exp(alpha * log_r)
        return y * abs(log_r) * math.exp(-y)

    best = (0.0, 1.0, alpha_lo)
    log_t = math.log(t)
    for alpha in np.linspace(alpha_lo, alpha_hi, alpha_samples):
        # y = t r^alpha in [1e-8, 50] covers the maximizer on both sides of r = 1
        log_r = (np.linspace(math.log(1e-8), math.log(50.0), 4001) - log_t) / alpha
        y = t * np.exp(alpha * log_r)
        vals = y * np.abs(log_r) * np.exp(-y)
        i = int(np.argmax(vals))
        lo, hi = log_r[max(i - 1, 0)], log_r[min(i + 1, len(log_r) - 1)]
        refined = minimize_scalar(lambda u: -magnitude(u, alpha), bounds=(lo, hi), method='bounded')
        value = max(float(vals[i]), -float(refined.fun))
        log_best = refined.x if -refined.fun >= vals[i] else log_r[i]
        if value > best[0]:
            best = (value, math.exp(log_best), float(alpha))
    return best


def grad_kernel_l1_check(alpha: float, t: float, n: int = 2 ** 18, box_length: float = 400.0) -> float:
    """
    ‖∂_x h_alpha(t, .)‖_{L^1} t^(1/alpha) on a long periodic line

    The kernel derivative is synthesized from its symbol iξ exp(-t|ξ|^alpha).
    For alpha = 2 the exact value is 1/sqrt(pi).
    """
    FractionalSymbol(alpha)
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    k = np.fft.fftfreq(n, d=1.0 / n)
    xi = 2.0 * math.pi * k / box_length
    xi[n // 2] = 0.0
    symbol = 1j * xi * np.exp(-t * np.abs(xi) ** alpha)
    samples = np.fft.ifft(symbol) * (n / box_length)
    l1 = float(np.sum(np.abs(samples.real))) * (box_length / n)
    return l1 * t ** (1.0 / alpha)
