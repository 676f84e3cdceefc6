"""Exception types shared across the library."""


class RelaxblError(Exception):
    """Base class for all library errors."""


class SingularMatrix(RelaxblError):
    """A linear solve hit a pivot below the singularity threshold."""


class CharacteristicBoundary(RelaxblError):
    """An eigenvalue sits too close to the imaginary axis, so the
    stable/unstable splitting is not well defined."""


class DegenerateSign(RelaxblError):
    """The transported flux derivative vanishes or changes sign where a
    single-signed speed is required."""


class ConvergenceFailure(RelaxblError):
    """An iterative solver (root finder, Newton) did not converge."""


class NewtonFailure(ConvergenceFailure):
    """Boundary or interface Newton solve failed; carries diagnostics."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NumericalBlowup(RelaxblError):
    """A time step produced non-finite values."""

    def __init__(self, message, step_index=None, time=None):
        super().__init__(message)
        self.step_index = step_index
        self.time = time
