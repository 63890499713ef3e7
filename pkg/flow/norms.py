"""
Norms Module
Discrete norms of grid fields and of differences between trajectories.

All spatial norms use the normalized (mean) measure on the torus, so a
constant field c has L2 norm |c| and the Fourier coefficients of
SpectralField enter Parseval without extra factors.
"""
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.integrate import trapezoid

from .spectral_core import SpectralField

if TYPE_CHECKING:
    from .mild_solver import SolveRecord


KINDS = ('sup', 'l2', 'hs', 'hminus', 'bmo', 'lplq')
DEFAULT_BMO_LEVEL = 4


@dataclass(frozen=True)
class NormSpec:
    """
    Which norm to measure

    Attributes:
        kind: sup, l2, hs, hminus, bmo or lplq
        s: Sobolev index (hs, hminus)
        p: Time exponent in [1, inf] (lplq)
        q: Space exponent in (2, inf) (lplq)
        max_level: Deepest dyadic level (bmo)
    """
    kind: str
    s: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None
    max_level: int = DEFAULT_BMO_LEVEL

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind in ('hs', 'hminus') and not (self.s is not None and self.s > 0):
            raise ValueError(f"{self.kind} needs s > 0, got {self.s}")
        if self.kind == 'lplq':
            if self.p is None or not 1 <= self.p <= math.inf:
                raise ValueError(f"lplq needs 1 <= p <= inf, got {self.p}")
            if self.q is None or not 2 < self.q < math.inf:
                raise ValueError(f"lplq needs 2 < q < inf, got {self.q}")
        if self.kind == 'bmo' and self.max_level < 1:
            raise ValueError(f"bmo needs max_level >= 1, got {self.max_level}")

    @classmethod
    def sup(cls) -> "NormSpec":
        return cls('sup')

    @classmethod
    def l2(cls) -> "NormSpec":
        return cls('l2')

    @classmethod
    def hs(cls, s: float) -> "NormSpec":
        return cls('hs', s=s)

    @classmethod
    def hminus(cls, s: float) -> "NormSpec":
        return cls('hminus', s=s)

    @classmethod
    def bmo(cls, max_level: int = DEFAULT_BMO_LEVEL) -> "NormSpec":
        return cls('bmo', max_level=max_level)

    @classmethod
    def lplq(cls, p: float, q: float) -> "NormSpec":
        return cls('lplq', p=p, q=q)

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """
        Parse 'sup', 'l2', 'hs:2', 'hminus:1.6', 'bmo', 'bmo:5' or 'lplq:inf,4'
        """
        kind, _, args = text.strip().partition(':')
        kind = kind.strip().lower()
        if kind in ('hs', 'hminus'):
            if not args:
                raise ValueError(f"{kind} needs an index, e.g. {kind}:2")
            return cls(kind, s=float(args))
        if kind == 'bmo':
            return cls.bmo(int(args)) if args else cls.bmo()
        if kind == 'lplq':
            parts = args.split(',')
            if len(parts) != 2:
                raise ValueError("lplq needs p,q, e.g. lplq:inf,4")
            return cls.lplq(float(parts[0]), float(parts[1]))
        return cls(kind)

    @property
    def label(self) -> str:
        if self.kind in ('hs', 'hminus'):
            return f"{self.kind}({self.s:g})"
        if self.kind == 'lplq':
            return f"lplq({self.p:g},{self.q:g})"
        return self.kind


def _magnitude(f: SpectralField) -> np.ndarray:
    values = f.to_physical()
    return np.sqrt(np.sum(values ** 2, axis=0))


def lq_norm(f: SpectralField, q: float) -> float:
    """(mean |f|^q)^(1/q) over the grid; q = inf gives the sup norm"""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    mag = _magnitude(f)
    if math.isinf(q):
        return float(np.max(mag))
    return float(np.mean(mag ** q) ** (1.0 / q))


def _sobolev_sum(f: SpectralField, s: float) -> float:
    weight = (1.0 + f.grid.k_squared) ** s
    return math.sqrt(float(np.sum(weight * np.abs(f.coeffs) ** 2)))


def _cube_oscillations(values: np.ndarray, level: int) -> np.ndarray:
    """Mean oscillation on every dyadic cube of side n/2^level"""
    dim = values.ndim
    blocks = 2 ** level
    side = values.shape[0] // blocks
    split = []
    for _ in range(dim):
        split.extend([blocks, side])
    cubes = values.reshape(split)
    inner = tuple(range(1, 2 * dim, 2))
    means = cubes.mean(axis=inner, keepdims=True)
    return np.abs(cubes - means).mean(axis=inner)


def bmo_discrete(f: SpectralField, max_level: int = DEFAULT_BMO_LEVEL) -> float:
    """
    Dyadic BMO seminorm on the grid

    sup over dyadic subcubes Q of the torus at levels 0..max_level of
    mean_Q |f - mean_Q f|. Vector fields take the max over components.
    """
    if max_level < 1:
        raise ValueError(f"max_level must be >= 1, got {max_level}")
    n = f.grid.n
    if 2 ** max_level > n:
        raise ValueError(f"max_level {max_level} too deep for n={n}")
    best = 0.0
    for values in f.to_physical():
        for level in range(max_level + 1):
            best = max(best, float(np.max(_cube_oscillations(values, level))))
    return best


def norm(f: SpectralField, spec: NormSpec) -> float:
    """
    Spatial norm of a single field

    Raises:
        ValueError: for lplq, which needs a trajectory (see trajectory_norm)
    """
    if spec.kind == 'sup':
        return float(np.max(_magnitude(f)))
    if spec.kind == 'l2':
        return math.sqrt(float(np.sum(np.abs(f.coeffs) ** 2)))
    if spec.kind == 'hs':
        return _sobolev_sum(f, spec.s)
    if spec.kind == 'hminus':
        return _sobolev_sum(f, -spec.s)
    if spec.kind == 'bmo':
        return bmo_discrete(f, spec.max_level)
    raise ValueError("lplq is a space-time norm; use trajectory_norm on two SolveRecords")


def trajectory_norm(rec_a: "SolveRecord", rec_b: "SolveRecord", spec: NormSpec,
                    field: str = 'velocity') -> float:
    """
    Norm of the difference of two trajectories over their shared snapshots

    Args:
        rec_a, rec_b: Records on the same grid and snapshot times
        spec: Spatial norms are taken sup-in-time; lplq integrates in time
        field: velocity, pressure or magnetic

    Returns:
        Non-negative real
    """
    if rec_a.grid != rec_b.grid:
        raise ValueError(f"grid mismatch: {rec_a.grid} vs {rec_b.grid}")
    if len(rec_a.times) != len(rec_b.times) or not np.allclose(rec_a.times, rec_b.times, rtol=1e-12, atol=0):
        raise ValueError("records do not share snapshot times")
    if field not in ('velocity', 'pressure', 'magnetic'):
        raise ValueError(f"unknown field {field!r}")
    series_a = getattr(rec_a, field)
    series_b = getattr(rec_b, field)
    if series_a is None or series_b is None:
        raise ValueError(f"records carry no {field} snapshots")

    diffs = [a - b for a, b in zip(series_a, series_b)]
    if spec.kind != 'lplq':
        return max(norm(d, spec) for d in diffs)

    values = np.array([lq_norm(d, spec.q) for d in diffs])
    if math.isinf(spec.p):
        return float(np.max(values))
    integral = trapezoid(values ** spec.p, np.asarray(rec_a.times))
    return float(integral ** (1.0 / spec.p))


def product_law_ratio(f: SpectralField, g: SpectralField, s: float) -> float:
    """‖fg‖_{H^s} / (‖f‖_{H^s} ‖g‖_{H^s}) for scalar fields"""
    if f.components != 1 or g.components != 1:
        raise ValueError("product_law_ratio needs scalar fields")
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")
    product = SpectralField.from_physical(f.grid, f.to_physical() * g.to_physical())
    spec = NormSpec.hs(s)
    denominator = norm(f, spec) * norm(g, spec)
    if denominator == 0:
        raise ValueError("product_law_ratio needs nonzero fields")
    return norm(product, spec) / denominator
