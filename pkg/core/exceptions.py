"""Domain exceptions and the process exit code each one maps to."""


class AsapError(Exception):
    """Base class for every error raised by the ASAP pipeline."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self):
        return self.message


class ConfigError(AsapError):
    """Run configuration could not be parsed or validated."""

    exit_code = 2


class ModelError(AsapError):
    """Invalid platoon parameters or mismatched matrix dimensions."""

    exit_code = 2


class CombinatorialLimitError(AsapError):
    """Exhaustive search would enumerate too many subsets."""

    exit_code = 2


class UnstableSystemError(AsapError):
    """Closed loop has spectral radius >= 1, so no infinite-horizon Gramian exists."""

    exit_code = 3


class ComputationError(AsapError):
    """A linear-algebra kernel (eigen solver, factorization) failed."""


class NotPositiveDefiniteError(ComputationError):
    """A matrix that must be positive definite is not."""


class SolverFailureError(AsapError):
    """The SDP solver failed numerically (as opposed to certifying infeasibility)."""


class NoSafeBoundsError(AsapError):
    """Every grid point of the saturation line search was infeasible."""

    exit_code = 4


class SimulationError(AsapError):
    """A Monte Carlo trajectory produced a non-finite state."""


class ValidationFailureError(AsapError):
    """Certified bounds were contradicted (danger hit or final ellipsoid crossing D)."""

    exit_code = 5
