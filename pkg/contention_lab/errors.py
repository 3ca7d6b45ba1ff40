"""Exception hierarchy shared by the analytic models, the simulator and the CLI."""

from typing import List, Optional


class ContentionLabError(Exception):
    """Base class for every error raised by contention_lab."""


class ModelRangeError(ContentionLabError):
    """A closed-form approximation produced a value outside its validity range."""


class DomainError(ContentionLabError, ValueError):
    """An input lies outside the mathematical domain of a formula."""


class SaturationError(ContentionLabError):
    """A queueing device is at or above full utilization."""


class ThrashingError(ContentionLabError):
    """The contention model has no stable solution (the system thrashes).

    Attributes:
        value: The offending quantity (alpha, or 4ar for the quadratic model).
        limit: The largest admissible value of that quantity.
    """

    def __init__(self, message: str, value: float, limit: float):
        super().__init__(message)
        self.value = value
        self.limit = limit

    @property
    def alpha_star(self) -> float:
        """Same as `limit` for the cubic model."""
        return self.limit


class NoConvergenceError(ContentionLabError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, iterations: int, last_value: Optional[float] = None):
        super().__init__(message)
        self.iterations = iterations
        self.last_value = last_value


class WorkloadValidationError(ContentionLabError):
    """A workload specification failed validation.

    Attributes:
        errors: Every problem found, in human-readable form.
    """

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class ScenarioError(ContentionLabError):
    """A scenario file is unreadable or inconsistent."""
