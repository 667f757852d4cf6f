"""Exception types shared across the package."""


class TwoGridError(Exception):
    """Base class for all errors raised by :mod:`twogrid`."""


class MeshError(TwoGridError, ValueError):
    """Invalid mesh input or broken refinement ancestry."""


class SpaceMismatchError(TwoGridError, ValueError):
    """Finite element functions or spaces that cannot be combined."""


class SolverError(TwoGridError, RuntimeError):
    """A linear or nonlinear solve failed."""

    def __init__(self, message, block=None, residual=None):
        super().__init__(message)
        self.block = block
        self.residual = residual


class NewtonConvergenceError(SolverError):
    """Newton iteration did not reach the requested tolerance."""


class ConfigError(TwoGridError, ValueError):
    """Invalid study plan or command line configuration."""
