"""Admission and cancellation controllers for the memory queue."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .analytic import ALPHA_STAR, DEFAULT_FIRST_LEVEL_WAIT, THROUGHPUT_PEAK_BETA
from .errors import ScenarioError

logger = logging.getLogger(__name__)

CONFLICT_RATIO_THRESHOLD = 1.3
MATURITY_PROGRESS = 0.25
BLOCKED_MATURE_LIMIT = 0.5


@dataclass(frozen=True)
class TxnProgress:
    """One admitted txn as load control sees it."""

    id: int
    progress: float
    blocked: bool


@dataclass(frozen=True)
class LoadSignal:
    """Current load as seen by a controller.

    Attributes:
        mpl: Admitted txns (running, blocked or awaiting restart).
        beta: Blocked fraction over the recent window.
        cr: Conflict ratio over the recent window.
        p_c: Conflicts per lock request over the recent window.
        k1: Mean lock requests per txn of the workload.
        progress: Locks acquired over locks planned, per admitted txn.
    """

    mpl: int
    beta: float = 0.0
    cr: float = 1.0
    p_c: float = 0.0
    k1: float = 0.0
    progress: Tuple[TxnProgress, ...] = ()


@dataclass(frozen=True)
class WindowStats:
    """Summary of one observation window of `window_length` commits."""

    duration: float
    commits: int
    mean_mpl: float
    beta: float
    cr: float
    p_c: float

    @property
    def throughput(self) -> float:
        return self.commits / self.duration if self.duration > 0 else 0.0


class LoadController:
    """Base controller: admit everything, cancel nothing."""

    name = "none"

    def __init__(self, max_mpl: Optional[int] = None):
        if max_mpl is not None and max_mpl < 1:
            raise ScenarioError("max_mpl must be at least 1")
        self.max_mpl = max_mpl
        self.alarm = False

    def _under_ceiling(self, signal: LoadSignal) -> bool:
        return self.max_mpl is None or signal.mpl < self.max_mpl

    def admit(self, signal: LoadSignal) -> bool:
        return self._under_ceiling(signal)

    def cancellations(self, signal: LoadSignal) -> List[int]:
        return []

    def observe_window(self, stats: WindowStats) -> None:
        pass


class NoLoadControl(LoadController):
    name = "none"


class FixedMpl(LoadController):
    """Admit while fewer than `M_max` txns are admitted; queue FCFS otherwise."""

    name = "fixed_mpl"

    def __init__(self, M_max: Optional[float] = None, max_mpl: Optional[int] = None):
        super().__init__(max_mpl)
        self.M_max = math.inf if M_max is None else M_max
        if self.M_max < 1:
            raise ScenarioError("M_max must be at least 1")

    def admit(self, signal: LoadSignal) -> bool:
        return signal.mpl < self.M_max and self._under_ceiling(signal)


def fixed_mpl(signal: LoadSignal, M_max: float = math.inf) -> bool:
    return FixedMpl(M_max).admit(signal)


class _ThresholdControl(LoadController):
    """Suspends admissions at a threshold and resumes below threshold - hysteresis."""

    def __init__(self, threshold: float, hysteresis: float = 0.05, max_mpl: Optional[int] = None):
        super().__init__(max_mpl)
        if hysteresis < 0:
            raise ScenarioError("hysteresis must be non-negative")
        self.threshold = threshold
        self.hysteresis = hysteresis
        self.suspended = False

    def _measure(self, signal: LoadSignal) -> float:
        raise NotImplementedError

    def _over(self, value: float) -> bool:
        return value >= self.threshold

    def admit(self, signal: LoadSignal) -> bool:
        value = self._measure(signal)
        if self.suspended:
            if value < self.threshold - self.hysteresis:
                self.suspended = False
                logger.debug(f"[{self.name}] resume at {value:.4f}")
        elif self._over(value):
            self.suspended = True
            logger.debug(f"[{self.name}] suspend at {value:.4f}")
        return not self.suspended and self._under_ceiling(signal)


class ConflictRatioControl(_ThresholdControl):
    """Suspends admissions while the windowed conflict ratio is at or above 1.3."""

    name = "conflict_ratio"

    def __init__(
        self,
        threshold: float = CONFLICT_RATIO_THRESHOLD,
        hysteresis: float = 0.05,
        max_mpl: Optional[int] = None,
    ):
        super().__init__(threshold, hysteresis, max_mpl)

    def _measure(self, signal: LoadSignal) -> float:
        return signal.cr


def conflict_ratio_control(signal: LoadSignal, threshold: float = CONFLICT_RATIO_THRESHOLD) -> bool:
    """Stateless form: admit iff CR is below the threshold."""
    return signal.cr < threshold


class CriticalBetaControl(_ThresholdControl):
    """Holds the blocked fraction near the throughput peak and flags thrashing.

    Admissions stop while the windowed beta exceeds 0.3. `alarm` latches once
    the estimated contention intensity K1 p_c A passes the critical value.
    """

    name = "critical_beta"

    def __init__(
        self,
        threshold: float = THROUGHPUT_PEAK_BETA,
        hysteresis: float = 0.05,
        A: float = DEFAULT_FIRST_LEVEL_WAIT,
        max_mpl: Optional[int] = None,
    ):
        super().__init__(threshold, hysteresis, max_mpl)
        self.A = A
        self.last_alpha = 0.0

    def _measure(self, signal: LoadSignal) -> float:
        return signal.beta

    def _over(self, value: float) -> bool:
        return value > self.threshold

    def admit(self, signal: LoadSignal) -> bool:
        self.last_alpha = signal.k1 * signal.p_c * self.A
        if self.last_alpha > ALPHA_STAR and not self.alarm:
            self.alarm = True
            logger.warning(
                f"[critical_beta] estimated alpha {self.last_alpha:.4f} exceeds "
                f"alpha* {ALPHA_STAR:.4f}; the system is thrashing"
            )
        return super().admit(signal)


def critical_beta_control(signal: LoadSignal, threshold: float = THROUGHPUT_PEAK_BETA) -> bool:
    """Stateless form: admit iff beta does not exceed the threshold."""
    return signal.beta <= threshold


class HalfAndHalf(LoadController):
    """Keeps at most half of the mature txns blocked.

    A txn is mature once it holds a quarter of its locks. While more than half of
    the mature txns are blocked, admissions stop and the least advanced blocked
    txn is cancelled, one per check.
    """

    name = "half_and_half"

    def __init__(
        self,
        maturity: float = MATURITY_PROGRESS,
        limit: float = BLOCKED_MATURE_LIMIT,
        max_mpl: Optional[int] = None,
    ):
        super().__init__(max_mpl)
        self.maturity = maturity
        self.limit = limit

    def blocked_mature_fraction(self, signal: LoadSignal) -> float:
        mature = [t for t in signal.progress if t.progress >= self.maturity]
        if not mature:
            return 0.0
        return sum(1 for t in mature if t.blocked) / len(mature)

    def overloaded(self, signal: LoadSignal) -> bool:
        return self.blocked_mature_fraction(signal) > self.limit

    def admit(self, signal: LoadSignal) -> bool:
        return not self.overloaded(signal) and self._under_ceiling(signal)

    def cancellations(self, signal: LoadSignal) -> List[int]:
        if not self.overloaded(signal):
            return []
        blocked = [t for t in signal.progress if t.blocked]
        victim = min(blocked, key=lambda t: (t.progress, -t.id))
        return [victim.id]


def half_and_half(signal: LoadSignal) -> Tuple[bool, List[int]]:
    """(admit?, txns to cancel) for one check."""
    controller = HalfAndHalf()
    return controller.admit(signal), controller.cancellations(signal)


class FeedbackIncremental(LoadController):
    """Moves the MPL bound one step per window, following throughput."""

    name = "feedback_incremental"

    def __init__(
        self,
        floor: int = 1,
        ceiling: Optional[int] = None,
        initial: Optional[int] = None,
        max_mpl: Optional[int] = None,
    ):
        super().__init__(max_mpl)
        if floor < 1:
            raise ScenarioError("floor must be at least 1")
        self.floor = floor
        self.ceiling = ceiling if ceiling is not None else max_mpl
        if self.ceiling is not None and self.ceiling < floor:
            raise ScenarioError("ceiling must not be below floor")
        self.bound = initial if initial is not None else floor
        self.bound = self._clamp(self.bound)
        self._last_throughput: Optional[float] = None

    def _clamp(self, value: int) -> int:
        value = max(self.floor, value)
        if self.ceiling is not None:
            value = min(self.ceiling, value)
        return value

    def update(self, throughput: float) -> int:
        """One feedback step; returns the new bound."""
        if self._last_throughput is None or throughput > self._last_throughput:
            self.bound = self._clamp(self.bound + 1)
        else:
            self.bound = self._clamp(self.bound - 1)
        self._last_throughput = throughput
        return self.bound

    def observe_window(self, stats: WindowStats) -> None:
        self.update(stats.throughput)

    def admit(self, signal: LoadSignal) -> bool:
        return signal.mpl < self.bound and self._under_ceiling(signal)


def feedback_incremental(bound: int, throughput: float, previous: float, floor: int, ceiling: int) -> int:
    """Stateless step: bound + 1 on rising throughput, bound - 1 otherwise."""
    step = 1 if throughput > previous else -1
    return min(ceiling, max(floor, bound + step))


def fit_parabola(samples: Sequence[Tuple[float, float]]) -> Optional[Tuple[float, float, float]]:
    """Least-squares P(n) = a0 + a1 n + a2 n^2 over (n, throughput) samples.

    Returns None when fewer than three distinct n values make the fit undefined.
    """
    n = np.asarray([s[0] for s in samples], dtype=float)
    y = np.asarray([s[1] for s in samples], dtype=float)
    if np.unique(n).size < 3:
        return None
    a2, a1, a0 = np.polyfit(n, y, 2)
    return float(a0), float(a1), float(a2)


def feedback_parabola(
    samples: Sequence[Tuple[float, float]], previous: float
) -> float:
    """Peak -a1/(2 a2) of the fitted parabola, or `previous` when it has none."""
    coefficients = fit_parabola(samples)
    if coefficients is None:
        return previous
    _, a1, a2 = coefficients
    if a2 >= 0:
        return previous
    return -a1 / (2.0 * a2)


class FeedbackParabola(LoadController):
    """Sets the MPL bound at the peak of a parabola fitted to recent windows."""

    name = "feedback_parabola"

    def __init__(
        self,
        initial: float = 2.0,
        samples: int = 10,
        max_mpl: Optional[int] = None,
    ):
        super().__init__(max_mpl)
        if initial < 1:
            raise ScenarioError("initial bound must be at least 1")
        self.bound = float(initial)
        self.samples: Deque[Tuple[float, float]] = deque(maxlen=max(3, samples))

    def observe_window(self, stats: WindowStats) -> None:
        self.samples.append((stats.mean_mpl, stats.throughput))
        bound = max(1.0, feedback_parabola(list(self.samples), self.bound))
        if self.max_mpl is not None:
            bound = min(float(self.max_mpl), bound)
        self.bound = bound

    def admit(self, signal: LoadSignal) -> bool:
        return signal.mpl < self.bound and self._under_ceiling(signal)


class LoadControlSpec(BaseModel):
    """A controller chosen by name with its parameters, as in scenario files."""

    model_config = ConfigDict(extra="forbid")

    name: str = "none"
    params: Dict[str, Any] = Field(default_factory=dict)


_REGISTRY = {
    "none": NoLoadControl,
    "fixed_mpl": FixedMpl,
    "optimum_dmp": FixedMpl,
    "conflict_ratio": ConflictRatioControl,
    "half_and_half": HalfAndHalf,
    "feedback_incremental": FeedbackIncremental,
    "feedback_parabola": FeedbackParabola,
    "critical_beta": CriticalBetaControl,
}

LOAD_CONTROL_NAMES = tuple(_REGISTRY)


def build_load_control(spec: LoadControlSpec, hysteresis: Optional[float] = None) -> LoadController:
    """Instantiates the controller named by `spec`.

    Args:
        spec: Name and keyword parameters.
        hysteresis: Default hysteresis for threshold controllers when `spec`
            gives none.

    Raises:
        ScenarioError: For unknown names or parameters.
    """
    cls = _REGISTRY.get(spec.name)
    if cls is None:
        raise ScenarioError(
            f"unknown load control '{spec.name}'; choose from {', '.join(LOAD_CONTROL_NAMES)}"
        )
    params = dict(spec.params)
    if hysteresis is not None and issubclass(cls, _ThresholdControl):
        params.setdefault("hysteresis", hysteresis)
    try:
        controller = cls(**params)
    except TypeError as e:
        raise ScenarioError(f"bad parameters for load control '{spec.name}': {e}") from e
    controller.name = spec.name
    return controller


@dataclass
class WindowTracker:
    """Accumulates engine state into commit-count windows."""

    length: int
    start: float = 0.0
    commits: int = 0
    area_mpl: float = 0.0
    area_blocked: float = 0.0
    area_active_locks: float = 0.0
    area_blocked_locks: float = 0.0
    requests: int = 0
    conflicts: int = 0
    previous: Optional[Tuple[float, float, float, float, int, int]] = None
    history: List[WindowStats] = field(default_factory=list)

    def integrate(self, dt: float, mpl: int, blocked: int, held_active: int, held_blocked: int) -> None:
        """`mpl` counts admitted txns plus those waiting to restart."""
        self.area_mpl += mpl * dt
        self.area_blocked += blocked * dt
        self.area_active_locks += held_active * dt
        self.area_blocked_locks += held_blocked * dt

    def _totals(self) -> Tuple[float, float, float, float, int, int]:
        current = (
            self.area_mpl,
            self.area_blocked,
            self.area_active_locks,
            self.area_blocked_locks,
            self.requests,
            self.conflicts,
        )
        if self.previous is None:
            return current
        return tuple(a + b for a, b in zip(current, self.previous))

    def estimates(self) -> Tuple[float, float, float]:
        """(beta, cr, p_c) over the last completed window plus the current one."""
        mpl, blocked, active_locks, blocked_locks, requests, conflicts = self._totals()
        beta = blocked / mpl if mpl > 0 else 0.0
        total = active_locks + blocked_locks
        cr = total / active_locks if active_locks > 0 else (1.0 if total == 0 else math.inf)
        p_c = conflicts / requests if requests > 0 else 0.0
        return beta, cr, p_c

    def commit(self, now: float) -> Optional[WindowStats]:
        """Counts one commit; returns the window summary when the window fills."""
        self.commits += 1
        if self.commits < self.length:
            return None
        duration = now - self.start
        mpl, blocked, active_locks, blocked_locks = (
            self.area_mpl,
            self.area_blocked,
            self.area_active_locks,
            self.area_blocked_locks,
        )
        total = active_locks + blocked_locks
        stats = WindowStats(
            duration=duration,
            commits=self.commits,
            mean_mpl=mpl / duration if duration > 0 else 0.0,
            beta=blocked / mpl if mpl > 0 else 0.0,
            cr=total / active_locks if active_locks > 0 else 1.0,
            p_c=self.conflicts / self.requests if self.requests > 0 else 0.0,
        )
        self.previous = (
            mpl,
            blocked,
            active_locks,
            blocked_locks,
            self.requests,
            self.conflicts,
        )
        self.history.append(stats)
        self.start = now
        self.commits = 0
        self.area_mpl = self.area_blocked = 0.0
        self.area_active_locks = self.area_blocked_locks = 0.0
        self.requests = self.conflicts = 0
        return stats
