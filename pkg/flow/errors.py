"""
Errors Module
Exception hierarchy shared by the numerical modules and the CLI
"""
from typing import Optional


class FlowError(Exception):
    """Base class for every failure raised by the flow package"""


class NumericalFailure(FlowError):
    """A computation ran but its result cannot be trusted"""


class PicardDivergenceError(NumericalFailure):
    """
    Picard iteration inside a time step did not contract

    Attributes:
        residual: Last relative L2 change between successive iterates
        iterations: Number of iterations performed
    """

    def __init__(self, residual: float, iterations: int, time: Optional[float] = None):
        self.residual = residual
        self.iterations = iterations
        self.time = time
        where = f" at t={time:.6g}" if time is not None else ""
        super().__init__(
            f"Picard iteration failed to contract{where}: residual {residual:.3e} "
            f"after {iterations} iterations (reduce dt)"
        )


class EnergyViolationError(NumericalFailure):
    """Kinetic (+ magnetic) energy grew beyond tolerance during one step"""

    def __init__(self, time: float, before: float, after: float):
        self.time = time
        self.before = before
        self.after = after
        super().__init__(
            f"Energy increased at t={time:.6g}: {before:.17g} -> {after:.17g}"
        )


class SweepError(FlowError):
    """A solve inside an alpha sweep failed; wraps the underlying cause"""

    def __init__(self, alpha: float, cause: Exception, beta: Optional[float] = None):
        self.alpha = alpha
        self.beta = beta
        self.cause = cause
        label = f"alpha={alpha}" if beta is None else f"alpha={alpha}, beta={beta}"
        super().__init__(f"Sweep failed at {label}: {cause}")


class OutputExistsError(FileExistsError):
    """Output directory already holds results and --force was not given"""
