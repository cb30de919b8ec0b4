"""
Exception types raised by the PABF toolkit.

Value-type problems (bad input, broken state) subclass ValueError, failures of
a numerical procedure subclass RuntimeError.
"""


class PABFError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PABFError, ValueError):
    """Invalid run configuration text."""

    def __init__(self, key, line, message):
        self.key = key
        self.line = line
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{key}: {message}")


class CorruptedStateError(PABFError, ValueError):
    """Non-finite reaction-coordinate value or force sample."""


class BrokenConfigurationError(PABFError, ValueError):
    """A particle configuration the reaction coordinate is undefined on."""


class UnsupportedSystemError(PABFError, ValueError):
    """Operation not available for this system kind."""


class ProjectionPreconditionError(PABFError, ValueError):
    """Density passed to the projection is not strictly positive."""


class InsufficientReplicationError(PABFError, ValueError):
    """Cross-run statistic requested with fewer than two runs."""


class DegenerateReferenceError(PABFError, ValueError):
    """Reference free energy is constant, so the normalized error is undefined."""


class IntegratorBlowupError(PABFError, RuntimeError):
    """Non-finite position after an integration step."""

    def __init__(self, replica, step):
        self.replica = replica
        self.step = step
        self.sweep = None
        super().__init__(
            f"non-finite position in replica {replica} at step {step} (time step too large?)"
        )


class ProjectionSolverError(PABFError, RuntimeError):
    """Conjugate gradients did not reach the tolerance."""

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        self.sweep = None
        super().__init__(
            f"projection solver did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
