"""Exception types shared across the package.

Configuration problems (bad input documents, inconsistent parameters) and
numerical failures (solvers that do not converge, unstable operating
points) are kept in separate branches so callers can map them to distinct
exit codes or HTTP statuses.
"""


class FibertrapError(Exception):
    """Base class for all package errors."""


class ConfigError(FibertrapError):
    """A request or input document is malformed or inconsistent."""


class LayoutParseError(ConfigError):
    """Layout text is not valid JSON or does not match the schema."""


class LayoutValidationError(ConfigError):
    """Layout parsed but violates a geometric invariant."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(d.message for d in self.diagnostics)
        super().__init__(f"invalid layout: {lines}")


class SolverError(FibertrapError):
    """A numerical routine failed to produce a usable result."""


class FieldEvaluationError(SolverError):
    """Field requested at a point where the model is singular."""


class ConvergenceError(SolverError):
    """Iterative search stopped without reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnstableConfigurationError(SolverError):
    """Total potential is not confining along at least one axis."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class SaddleSearchError(SolverError):
    """Escape-path search found no saddle point within its range."""


class InfeasibleError(SolverError):
    """Constrained voltage problem has no solution within bounds."""

    def __init__(self, message, minimal_bound=None):
        super().__init__(message)
        self.minimal_bound = minimal_bound
