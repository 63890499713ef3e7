"""
Spectral Core Module
Periodic-grid Fourier representation of fields and the spectral operators
acting on them: fractional Laplacian symbol, Leray projection, Riesz
transforms and dealiased nonlinear products.

Coefficients are normalized so that a physical field is the plain sum of
its Fourier modes (forward transform divides by n**dim).
"""
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft


DEFAULT_BOX_LENGTH = 2.0 * math.pi


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform periodic grid on [0, L)^dim

    Attributes:
        dim: Spatial dimension (2 or 3)
        n: Points per axis (power of two, at least 8)
        box_length: Physical period L of the box
    """
    dim: int
    n: int
    box_length: float = DEFAULT_BOX_LENGTH

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"grid.dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"grid.n must be a power of two >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ValueError(f"grid.L must be positive, got {self.box_length}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        """Array axes holding space in a (components, *shape) array"""
        return tuple(range(1, self.dim + 1))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @cached_property
    def integer_modes(self) -> np.ndarray:
        """Integer wavenumbers k in [-n/2, n/2), FFT ordering, shape (dim, *shape)"""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)
        return _frozen(np.stack(np.meshgrid(*([k] * self.dim), indexing='ij')))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Physical wavevectors k * 2π/L, shape (dim, *shape)"""
        return _frozen(self.integer_modes * (2.0 * math.pi / self.box_length))

    @cached_property
    def odd_wavenumbers(self) -> np.ndarray:
        """Wavevectors for odd-order operators, Nyquist component set to zero"""
        xi = np.array(self.wavenumbers)
        xi[self.integer_modes == -(self.n // 2)] = 0.0
        return _frozen(xi)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|ξ|² at every mode (the classical Laplacian symbol)"""
        return _frozen(np.sum(self.wavenumbers ** 2, axis=0))

    @cached_property
    def odd_k_squared(self) -> np.ndarray:
        return _frozen(np.sum(self.odd_wavenumbers ** 2, axis=0))

    @cached_property
    def dealias(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every |k_j| < n/3"""
        keep = np.all(3 * np.abs(self.integer_modes) < self.n, axis=0)
        return _frozen(keep)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Physical sample positions, shape (dim, *shape)"""
        x = np.arange(self.n) * self.spacing
        return _frozen(np.stack(np.meshgrid(*([x] * self.dim), indexing='ij')))


@dataclass
class SpectralField:
    """
    Real scalar or vector field stored as Fourier coefficients

    Attributes:
        grid: Grid the field lives on
        coeffs: Complex array of shape (components, *grid.shape)
        solenoidal: True when the field is known to be divergence-free
    """
    grid: GridSpec
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim == self.grid.dim:
            self.coeffs = self.coeffs[np.newaxis]
        if self.coeffs.shape[1:] != self.grid.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )
        if self.components not in (1, self.grid.dim):
            raise ValueError(f"field must have 1 or {self.grid.dim} components")

    @classmethod
    def from_physical(cls, grid: GridSpec, values: np.ndarray,
                      solenoidal: bool = False) -> "SpectralField":
        """Build a field from real samples of shape (*shape) or (components, *shape)"""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == grid.dim:
            values = values[np.newaxis]
        coeffs = sfft.fftn(values, axes=grid.spatial_axes, norm='forward')
        return cls(grid, coeffs, solenoidal)

    @classmethod
    def zeros(cls, grid: GridSpec, components: int) -> "SpectralField":
        return cls(grid, np.zeros((components,) + grid.shape, dtype=np.complex128),
                   solenoidal=components == grid.dim)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.components == self.grid.dim

    def to_physical(self) -> np.ndarray:
        """Real samples, shape (components, *shape)"""
        values = sfft.ifftn(self.coeffs, axes=self.grid.spatial_axes, norm='forward')
        return np.ascontiguousarray(values.real)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i:i + 1].copy())

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.solenoidal)

    def with_coeffs(self, coeffs: np.ndarray, solenoidal: Optional[bool] = None) -> "SpectralField":
        flag = self.solenoidal if solenoidal is None else solenoidal
        return SpectralField(self.grid, coeffs, flag)

    def _check_compatible(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")
        if other.components != self.components:
            raise ValueError("component count mismatch")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs,
                             self.solenoidal and other.solenoidal)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs,
                             self.solenoidal and other.solenoidal)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs, self.solenoidal)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.solenoidal)

    __rmul__ = __mul__

    def hermitian_defect(self) -> float:
        """max |c(-ξ) - conj(c(ξ))|, zero for a real field"""
        axes = self.grid.spatial_axes
        flipped = np.roll(np.flip(self.coeffs, axis=axes), shift=1, axis=axes)
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def divergence_residual(self) -> float:
        """L2 (mean measure) norm of div u via Parseval; 0 for scalars"""
        if not self.is_vector:
            return 0.0
        div_hat = np.sum(self.grid.odd_wavenumbers * self.coeffs, axis=0)
        return float(np.sqrt(np.sum(np.abs(div_hat) ** 2)))


@dataclass(frozen=True)
class FractionalSymbol:
    """Fourier multiplier |ξ|^α of the fractional Laplacian, α in (1, 2]"""
    alpha: float

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")

    @property
    def is_classical(self) -> bool:
        return self.alpha == 2.0

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        """|ξ|^α at every grid mode; α=2 returns the classical symbol array itself"""
        if self.is_classical:
            return classical_symbol(grid)
        return grid.k_squared ** (0.5 * self.alpha)


def classical_symbol(grid: GridSpec) -> np.ndarray:
    """|ξ|² at every grid mode"""
    return grid.k_squared


def symbol_eval(sym: FractionalSymbol, xi: Sequence[float]) -> float:
    """
    Evaluate |ξ|^α at a single wavevector

    Args:
        sym: Fractional symbol
        xi: Finite wavevector

    Returns:
        |xi|**alpha, 0 at the origin
    """
    xi = np.asarray(xi, dtype=np.float64)
    if not np.all(np.isfinite(xi)):
        raise ValueError("wavevector must be finite")
    r2 = float(np.dot(xi, xi))
    if r2 == 0.0:
        return 0.0
    if sym.is_classical:
        return r2
    return r2 ** (0.5 * sym.alpha)


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """Boolean mask of modes kept by the 2/3 rule"""
    return grid.dealias


def _safe_inverse(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    nonzero = values != 0
    out[nonzero] = 1.0 / values[nonzero]
    return out


def leray_project(u: SpectralField) -> SpectralField:
    """
    Project a vector field onto divergence-free fields

    Acts per mode as û - ξ(ξ·û)/|ξ|², identity at ξ = 0.
    """
    if not u.is_vector:
        raise ValueError("leray_project needs a vector field")
    xi = u.grid.odd_wavenumbers
    inv_k2 = _safe_inverse(u.grid.odd_k_squared)
    xi_dot_u = np.sum(xi * u.coeffs, axis=0)
    projected = u.coeffs - xi * (xi_dot_u * inv_k2)
    return SpectralField(u.grid, projected, solenoidal=True)


def riesz_symbols(grid: GridSpec) -> np.ndarray:
    """iξ_j/|ξ| for every axis j, zero at ξ = 0; shape (dim, *shape)"""
    inv_k = _safe_inverse(np.sqrt(grid.odd_k_squared))
    return 1j * grid.odd_wavenumbers * inv_k


def riesz_transform(f: SpectralField, axis: int) -> SpectralField:
    """
    Riesz transform R_axis of a scalar field (axis counted from 0)

    Returns:
        Field multiplied mode-wise by iξ_axis/|ξ|, zero mean
    """
    if f.components != 1:
        raise ValueError("riesz_transform needs a scalar field")
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis must be in [0, {f.grid.dim}), got {axis}")
    return SpectralField(f.grid, f.coeffs * riesz_symbols(f.grid)[axis])


def gradient(f: SpectralField) -> SpectralField:
    """∇f of a scalar field"""
    if f.components != 1:
        raise ValueError("gradient needs a scalar field")
    return SpectralField(f.grid, 1j * f.grid.odd_wavenumbers * f.coeffs[0])


def divergence(u: SpectralField) -> SpectralField:
    if not u.is_vector:
        raise ValueError("divergence needs a vector field")
    return SpectralField(u.grid, np.sum(1j * u.grid.odd_wavenumbers * u.coeffs, axis=0))


def product_tensor(u: SpectralField, v: SpectralField) -> np.ndarray:
    """
    Fourier coefficients of the products u_j v_i from dealiased inputs

    Returns:
        Array of shape (u.components, v.components, *shape), entry [j, i] = F(u_j v_i)
    """
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: {u.grid} vs {v.grid}")
    grid = u.grid
    mask = grid.dealias
    up = SpectralField(grid, u.coeffs * mask).to_physical()
    vp = SpectralField(grid, v.coeffs * mask).to_physical()
    products = up[:, np.newaxis] * vp[np.newaxis, :]
    axes = tuple(a + 1 for a in grid.spatial_axes)
    return sfft.fftn(products, axes=axes, norm='forward')


def nonlinear_advection(u: SpectralField, v: SpectralField) -> SpectralField:
    """
    Dealiased div(u ⊗ v), i.e. (u·∇)v when div u = 0

    Component i is Σ_j iξ_j F(u_j v_i), masked by the 2/3 rule.
    """
    if not (u.is_vector and v.is_vector):
        raise ValueError("nonlinear_advection needs two vector fields")
    grid = u.grid
    uv_hat = product_tensor(u, v)
    xi = grid.odd_wavenumbers
    contracted = 1j * np.einsum('j...,ji...->i...', xi, uv_hat)
    return SpectralField(grid, contracted * grid.dealias)
