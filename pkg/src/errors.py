"""
Exception hierarchy shared by the analytic library, the simulator and the CLI.
"""
from typing import Any, Optional


class LeoCoverageError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LeoCoverageError, ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class UnsupportedAlphaError(DomainError):
    """Closed-form Laplace transforms exist only for alpha in {2, 4}."""


class QuadratureError(LeoCoverageError, RuntimeError):
    """Numerical integration could not reach the requested tolerance."""

    def __init__(self,
                 message: str,
                 best_estimate: Any = None,
                 error_estimate: Optional[float] = None,
                 term: Optional[str] = None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate
        self.term = term

    def with_term(self, term: str) -> "QuadratureError":
        """Return a copy labelled with the metric term that failed."""
        err = type(self)(f"{term}: {self}", self.best_estimate, self.error_estimate, term)
        return err


class TruncationError(QuadratureError):
    """The oscillatory frequency integral did not settle before the panel limit."""


class FitError(LeoCoverageError):
    """The effective-number-of-satellites fit missed its tolerance."""

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class ConfigError(LeoCoverageError):
    """Scenario file could not be parsed or violates an invariant."""

    def __init__(self,
                 message: str,
                 path: Optional[str] = None,
                 line: Optional[int] = None,
                 key: Optional[str] = None):
        location = ""
        if path:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line
        self.key = key
