"""Exception types raised across the package."""


class GridMismatchError(ValueError):
    """Two fields or operators live on different grids."""


class ResolutionError(ValueError):
    """The grid cannot resolve the requested kernel or sweep."""


class DomainError(ValueError):
    """Data fall outside the effective domain of the potential."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance.

    ``residual`` holds the last residual; ``state`` optionally carries the
    arrays needed to reproduce the failure (used for abort dumps).
    """

    def __init__(self, message, residual=float("nan"), state=None):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
        self.state = state or {}
