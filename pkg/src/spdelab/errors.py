"""Exception types shared by the solvers."""


class ResolutionError(ValueError):
    """Discretization too coarse for the requested computation."""


class NoThresholdError(RuntimeError):
    """Rate sign never changes over the searchable noise-level range."""


class MomentOverflowError(ArithmeticError):
    """Moment trajectory overflowed before the horizon; carries the partial solution."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class WindowError(ValueError):
    """Rate-fit window contains too few usable points."""
