"""
Presets Module
Divergence-free initial data on the periodic grid
"""
import math
from typing import Callable, Dict, Optional

import numpy as np

from .spectral_core import GridSpec, SpectralField, leray_project


def sup_magnitude(field: SpectralField) -> float:
    """max over grid samples of the pointwise Euclidean magnitude"""
    values = field.to_physical()
    return float(np.max(np.sqrt(np.sum(values ** 2, axis=0))))


def normalize_sup(field: SpectralField, target: float = 1.0) -> SpectralField:
    peak = sup_magnitude(field)
    if peak == 0.0:
        raise ValueError("cannot normalize a zero field")
    return field * (target / peak)


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> SpectralField:
    """
    Taylor-Green vortex at the box fundamental

    2D: (sin x cos y, -cos x sin y); 3D adds cos z to both and a zero third component.
    """
    scale = 2.0 * math.pi / grid.box_length
    x = grid.coordinates * scale
    if grid.dim == 2:
        u = np.sin(x[0]) * np.cos(x[1])
        v = -np.cos(x[0]) * np.sin(x[1])
        values = np.stack([u, v])
    else:
        u = np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2])
        v = -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2])
        values = np.stack([u, v, np.zeros_like(u)])
    return SpectralField.from_physical(grid, amplitude * values, solenoidal=True)


def shear(grid: GridSpec, amplitude: float = 1.0, mode: int = 1) -> SpectralField:
    """Single-mode shear u = (A sin(2π m y / L), 0[, 0]); its self-advection vanishes"""
    y = grid.coordinates[1]
    values = np.zeros((grid.dim,) + grid.shape)
    values[0] = amplitude * np.sin(2.0 * math.pi * mode * y / grid.box_length)
    return SpectralField.from_physical(grid, values, solenoidal=True)


def random_smooth(grid: GridSpec, seed: int = 0, spectrum_decay: float = 4.0,
                  amplitude: float = 1.0) -> SpectralField:
    """
    Random solenoidal field with mode amplitudes ~ |k|^-decay

    The field is band-limited to the dealiased range, has zero mean and
    sup-norm equal to amplitude.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((grid.dim,) + grid.shape)
    field = SpectralField.from_physical(grid, noise)
    k_norm = np.sqrt(np.sum(grid.integer_modes.astype(np.float64) ** 2, axis=0))
    weight = np.zeros_like(k_norm)
    nonzero = k_norm > 0
    weight[nonzero] = k_norm[nonzero] ** (-spectrum_decay)
    coeffs = field.coeffs * weight * grid.dealias
    field = leray_project(SpectralField(grid, coeffs))
    return normalize_sup(field, amplitude)


PRESETS: Dict[str, Callable[..., SpectralField]] = {
    'taylor_green': taylor_green,
    'shear': shear,
    'random_smooth': random_smooth,
}


def make_preset(name: str, grid: GridSpec, seed: int = 0, spectrum_decay: float = 4.0,
                amplitude: Optional[float] = None) -> SpectralField:
    """
    Build a named preset

    Args:
        name: One of taylor_green, shear, random_smooth
        grid: Target grid
        seed: RNG seed (random_smooth only)
        spectrum_decay: Spectral decay exponent (random_smooth only)
        amplitude: Overall scale; preset default when None

    Returns:
        Divergence-free vector field
    """
    if name not in PRESETS:
        raise ValueError(f"unknown data preset {name!r}; choose from {', '.join(PRESETS)}")
    kwargs = {} if amplitude is None else {'amplitude': amplitude}
    if name == 'random_smooth':
        return random_smooth(grid, seed=seed, spectrum_decay=spectrum_decay, **kwargs)
    return PRESETS[name](grid, **kwargs)
