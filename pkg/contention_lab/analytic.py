"""Closed-form lock-contention, deadlock, thrashing and queueing formulas.

Every function here is a pure function of its arguments. Probabilities that
leave [0, 1] raise `ModelRangeError` rather than being clamped: the formulas are
low-contention approximations and a value above one means the model is being
used outside its range.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, List, Literal, Optional, Sequence

from pydantic import BaseModel, Field, model_validator
from scipy import optimize

from .errors import (
    DomainError,
    ModelRangeError,
    NoConvergenceError,
    SaturationError,
    ThrashingError,
)

logger = logging.getLogger(__name__)

# Lock-conflict probability above which the low-contention assumption is strained.
STRAINED_CONFLICT_PROBABILITY = 0.1
# k^2 M / D at which data contention thrashing sets in.
THRASHING_LOAD_INDEX = 1.5
# Normalized first-level wait W1/R for fixed-size txns.
DEFAULT_FIRST_LEVEL_WAIT = 1.0 / 3.0
# Blocked fraction at which equal-step txns reach peak throughput.
THROUGHPUT_PEAK_BETA = 0.3

_ROOT_XTOL = 1e-15


class SingleClassParams(BaseModel):
    """One txn class requesting k X-locks uniformly over D objects at concurrency M.

    Attributes:
        k: Lock requests per txn.
        M: Degree of txn concurrency.
        D: Database size in lockable objects.
        step_time: Mean per-step processing time.
    """

    k: float = Field(ge=0)
    M: float = Field(ge=1)
    D: float = Field(ge=1)
    step_time: float = Field(default=1.0, gt=0)


class AccessSkew(BaseModel):
    """b-c access skew plus the fraction of shared lock requests.

    Attributes:
        b: Fraction of lock requests directed at the hot set.
        c: Hot-set fraction of the database.
        s: Fraction of lock requests that are shared (S) locks.
    """

    b: float = Field(ge=0, le=1)
    c: float = Field(gt=0, lt=1)
    s: float = Field(default=0.0, ge=0, le=1)


class QnSystem(BaseModel):
    """Product-form queueing network of single-server devices.

    Attributes:
        demands: Service demand X_n per device.
        mpl_max: Maximum degree of multiprogramming, if any.
    """

    demands: List[float] = Field(min_length=1)
    mpl_max: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _positive_demands(self) -> "QnSystem":
        if any(x <= 0 for x in self.demands):
            raise ValueError("all service demands must be positive")
        return self


class HdamClass(BaseModel):
    """One txn class of the heterogeneous data access model.

    Attributes:
        arrival_rate: lambda_i.
        frequency: f_i.
        lock_counts: k_{i,j}, one entry per DBR.
        held_locks: Mean held locks kbar_{i,j}; defaults to k_{i,j}/2.
        shared_fractions: s_{i,j}; defaults to all zeros.
    """

    arrival_rate: float = Field(default=0.0, ge=0)
    frequency: float = Field(ge=0, le=1)
    lock_counts: List[float]
    held_locks: Optional[List[float]] = None
    shared_fractions: Optional[List[float]] = None

    @model_validator(mode="after")
    def _fill_defaults(self) -> "HdamClass":
        if any(k < 0 for k in self.lock_counts):
            raise ValueError("lock counts must be non-negative")
        if self.held_locks is None:
            self.held_locks = [mean_held_locks(k) for k in self.lock_counts]
        if self.shared_fractions is None:
            self.shared_fractions = [0.0] * len(self.lock_counts)
        if len(self.held_locks) != len(self.lock_counts):
            raise ValueError("held_locks must have one entry per DBR")
        if len(self.shared_fractions) != len(self.lock_counts):
            raise ValueError("shared_fractions must have one entry per DBR")
        for kbar, k in zip(self.held_locks, self.lock_counts):
            if kbar < 0 or kbar > k:
                raise ValueError(f"held locks {kbar} must lie in [0, {k}]")
        if any(not 0 <= s <= 1 for s in self.shared_fractions):
            raise ValueError("shared fractions must lie in [0, 1]")
        return self


class HdamParams(BaseModel):
    """HDAM: several txn classes issuing locks to several database regions.

    Attributes:
        classes: The txn classes.
        dbr_sizes: D_j per DBR.
        dbr_skew_factors: Optional per-DBR skew shrink factor (see `skew_factor`).
    """

    classes: List[HdamClass] = Field(min_length=1)
    dbr_sizes: List[float] = Field(min_length=1)
    dbr_skew_factors: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "HdamParams":
        if any(d < 1 for d in self.dbr_sizes):
            raise ValueError("every DBR needs at least one object")
        for cls in self.classes:
            if len(cls.lock_counts) != len(self.dbr_sizes):
                raise ValueError("every class needs one lock count per DBR")
        total = sum(cls.frequency for cls in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"class frequencies must sum to 1 (got {total})")
        if self.dbr_skew_factors is not None and len(self.dbr_skew_factors) != len(
            self.dbr_sizes
        ):
            raise ValueError("dbr_skew_factors needs one entry per DBR")
        return self


class ContentionState(BaseModel):
    """Solved state of the dynamic-locking contention model.

    Attributes:
        alpha: Contention intensity K1 * p_c * A.
        beta: Fraction of blocked txns.
        rho_b: Fraction of lock conflicts with blocked txns.
        cr: Conflict ratio, 1/(1 - rho_b).
        A: Normalized first-level wait W1/R.
        relative_wait: Mean wait per conflict over the first-level wait, W/W1.
        iterations: Fixed-point iterations used (0 for closed forms).
    """

    alpha: float = Field(ge=0)
    beta: float = Field(ge=0, lt=1)
    rho_b: float = Field(default=0.0, ge=0, lt=1)
    cr: float = Field(default=1.0, ge=1)
    A: float = Field(default=DEFAULT_FIRST_LEVEL_WAIT, gt=0)
    relative_wait: float = 1.0
    iterations: int = 0


class ConflictEstimate(BaseModel):
    """Conflict probability together with its strain flag."""

    p_c: float
    strained: bool


class MplBound(BaseModel):
    """Minimum multiprogramming level needed to keep up with the arrival rate.

    Attributes:
        bound: (N - 1) rho / (1 - rho); the MPL must exceed it.
        minimum: Smallest integer strictly above `bound` (at least 1).
    """

    bound: float
    minimum: int


class HdamConflict(BaseModel):
    """Per-DBR conflict probabilities of the HDAM model."""

    p_c: List[float]
    shared_fractions: List[float]
    effective_sizes: List[float]


class ContentionPrediction(BaseModel):
    """Analytic outputs for one operating point.

    Attributes:
        p_c: Lock-conflict probability per request.
        p_deadlock_2way: Two-way deadlock probability per txn.
        beta: Fraction of blocked txns.
        R: Mean response time.
        rho_b: Fraction of held locks that belong to blocked txns.
        conflict_ratio: 1/(1 - rho_b).
        thrashing_margin: alpha* - alpha.
        per_dbr: p_c per DBR.
        alpha: Contention intensity.
        throughput: Txn throughput implied by R.
        load_index: k^2 M / D.
        strained: Whether p_c exceeds the low-contention threshold.
    """

    p_c: float = Field(ge=0, le=1)
    p_deadlock_2way: float = Field(ge=0, le=1)
    beta: float = Field(ge=0, le=1)
    R: float = Field(ge=0)
    rho_b: float = Field(default=0.0, ge=0, lt=1)
    conflict_ratio: float = Field(default=1.0, ge=1)
    thrashing_margin: float
    per_dbr: List[float] = Field(default_factory=list)
    alpha: float = 0.0
    throughput: float = 0.0
    load_index: float = 0.0
    strained: bool = False


def _check_probability(value: float, what: str) -> float:
    if value > 1.0:
        raise ModelRangeError(f"{what} = {value:.6g} exceeds 1; the formula is outside its range")
    return value


def mean_held_locks(k: float) -> float:
    """Mean locks held by an equal-step txn that requests k locks at step ends.

    The time-space area of held locks, k(k+1)s/2, over the txn's processing time
    (k+1)s gives k/2.
    """
    return k / 2.0


def mean_lock_requests(lock_counts: Sequence[float], frequencies: Sequence[float]) -> float:
    """K1 = sum_i k_i f_i, the mean number of lock requests per txn."""
    if len(lock_counts) != len(frequencies):
        raise DomainError("lock_counts and frequencies must have the same length")
    return float(sum(k * f for k, f in zip(lock_counts, frequencies)))


def conflict_probability(p: SingleClassParams) -> ConflictEstimate:
    """Probability that a lock request conflicts, k(M-1)/(2D).

    Args:
        p: Single-class parameters.

    Returns:
        The probability with `strained` set when it exceeds 0.1.

    Raises:
        ModelRangeError: If the value exceeds 1.
    """
    value = _check_probability(p.k * (p.M - 1) / (2.0 * p.D), "p_c")
    strained = value > STRAINED_CONFLICT_PROBABILITY
    if strained:
        logger.warning(
            f"p_c = {value:.4g} exceeds {STRAINED_CONFLICT_PROBABILITY}; "
            "the low-contention approximation is strained"
        )
    return ConflictEstimate(p_c=value, strained=strained)


def deadlock_probability_2way(
    p: SingleClassParams, variant: Literal["original", "modified"] = "modified"
) -> float:
    """Two-way deadlock probability per txn.

    The original estimate is (M-1)k^4/(4D^2). The modified one divides by
    12D^2: a deadlock needs the requested lock's holder to be already blocked by
    the requester, which with A = 1/3 removes a further factor of three.

    Raises:
        ModelRangeError: If the value exceeds 1.
        DomainError: On an unknown variant.
    """
    base = (p.M - 1) * p.k**4 / (p.D**2)
    if variant == "original":
        value = base / 4.0
    elif variant == "modified":
        value = base / 12.0
    else:
        raise DomainError(f"unknown deadlock variant '{variant}'")
    return _check_probability(value, "p_2way")


def skew_factor(b: float, c: float) -> float:
    """Shrink factor [b^2/c + (1-b)^2/(1-c)]^-1 of a b-c skewed database."""
    if not 0.0 < c < 1.0:
        raise DomainError(f"hot-set fraction c must lie in (0, 1), got {c}")
    return 1.0 / (b * b / c + (1.0 - b) ** 2 / (1.0 - c))


def share_factor(s: float) -> float:
    """Inflation factor 1/(1 - s^2) for a fraction s of shared requests."""
    if s >= 1.0:
        raise DomainError("an all-shared workload never conflicts; s must be below 1")
    return 1.0 / (1.0 - s * s)


def effective_db_size(D: float, skew: AccessSkew) -> float:
    """Database size that gives uniform X-only access the same conflict rate."""
    return D * skew_factor(skew.b, skew.c) * share_factor(skew.s)


def extrapolate_conflict(
    p_c: float, rate: float, R: float, new_rate: float, new_R: float
) -> float:
    """Scales a measured p_c to a new arrival rate by Little's result.

    The mean number of active txns is lambda R, so p_c scales with
    (lambda' R(lambda')) / (lambda R(lambda)).
    """
    if min(p_c, rate, R, new_rate, new_R) <= 0:
        raise DomainError("all inputs to extrapolate_conflict must be positive")
    return _check_probability(p_c * (new_rate * new_R) / (rate * R), "p_c")


def device_utilizations(q: QnSystem, rate: float) -> List[float]:
    """rho_n = lambda X_n for every device."""
    return [rate * x for x in q.demands]


def open_qn_response(q: QnSystem, rate: float) -> float:
    """Mean response time sum_n X_n / (1 - rho_n) of an open product-form network.

    Raises:
        SaturationError: If any device utilization reaches 1.
    """
    if rate < 0:
        raise DomainError("arrival rate must be non-negative")
    total = 0.0
    for n, (x, rho) in enumerate(zip(q.demands, device_utilizations(q, rate))):
        if rho >= 1.0:
            raise SaturationError(f"device {n} is saturated (utilization {rho:.4g})")
        total += x / (1.0 - rho)
    return total


def balanced_closed_throughput(M: float, N: int, X: float) -> float:
    """T(M) = M / ((N + M - 1) X) for a balanced closed network.

    `M = math.inf` returns the asymptotic job bound 1/X.
    """
    if M < 1 or N < 1 or X <= 0:
        raise DomainError("need M >= 1, N >= 1 and X > 0")
    if math.isinf(M):
        return 1.0 / X
    return M / ((N + M - 1) * X)


def min_mpl(N: int, rho: float) -> MplBound:
    """Smallest MPL whose balanced-network throughput exceeds the arrival rate.

    Raises:
        SaturationError: If rho >= 1.
    """
    if rho >= 1.0:
        raise SaturationError(f"utilization {rho} leaves no admissible MPL")
    if rho < 0.0 or N < 1:
        raise DomainError("need N >= 1 and rho >= 0")
    bound = (N - 1) * rho / (1.0 - rho)
    # Strict inequality; the tolerance absorbs float error at integral bounds.
    minimum = max(1, math.floor(bound + 1e-9) + 1)
    return MplBound(bound=bound, minimum=minimum)


def multiclass_extrapolate(
    held_locks: Sequence[float],
    rates: Sequence[float],
    response_times: Sequence[float],
    new_rates: Sequence[float],
    new_response_times: Sequence[float],
) -> float:
    """Factor sum kbar_i lambda'_i R_i(lambda'_i) / sum kbar_i lambda_i R_i(lambda_i).

    Multiply a measured p_c by the returned factor to extrapolate it.

    Raises:
        DomainError: If the denominator is zero or the lengths differ.
    """
    n = len(held_locks)
    if not (len(rates) == len(response_times) == len(new_rates) == len(new_response_times) == n):
        raise DomainError("all per-class sequences must have the same length")
    before = sum(k * lam * r for k, lam, r in zip(held_locks, rates, response_times))
    after = sum(k * lam * r for k, lam, r in zip(held_locks, new_rates, new_response_times))
    if before == 0:
        raise DomainError("the current held-lock population is zero")
    return after / before


def shared_fraction_per_dbr(h: HdamParams) -> List[float]:
    """s_j = sum_i f_i k_ij s_ij / sum_i f_i k_ij (0 for DBRs nobody requests)."""
    fractions = []
    for j in range(len(h.dbr_sizes)):
        requested = sum(c.frequency * c.lock_counts[j] for c in h.classes)
        shared = sum(c.frequency * c.lock_counts[j] * c.shared_fractions[j] for c in h.classes)
        fractions.append(shared / requested if requested > 0 else 0.0)
    return fractions


def hdam_conflict_probability(h: HdamParams, response_times: Sequence[float]) -> HdamConflict:
    """Per-DBR conflict probability p_c^j = sum_i kbar_ij lambda_i R_i / D_eff^j.

    D_eff^j = D_j/(1 - s_j^2), further shrunk by the DBR's skew factor when one
    is given.

    Args:
        h: HDAM parameters; `arrival_rate` of each class is lambda_i.
        response_times: R_i per class.

    Raises:
        DomainError: If some s_j = 1, or a DBR holds locks nobody requests.
        ModelRangeError: If any p_c^j exceeds 1.
    """
    if len(response_times) != len(h.classes):
        raise DomainError("need one response time per class")
    fractions = shared_fraction_per_dbr(h)
    probabilities, sizes = [], []
    for j, size in enumerate(h.dbr_sizes):
        population = sum(
            c.held_locks[j] * c.arrival_rate * r for c, r in zip(h.classes, response_times)
        )
        requested = sum(c.frequency * c.lock_counts[j] for c in h.classes)
        if requested == 0 and population > 0:
            raise DomainError(f"DBR {j} holds locks but no class requests any")
        if fractions[j] >= 1.0:
            raise DomainError(f"DBR {j} sees only shared requests; its conflict rate is zero")
        effective = size * share_factor(fractions[j])
        if h.dbr_skew_factors is not None:
            effective *= h.dbr_skew_factors[j]
        sizes.append(effective)
        probabilities.append(_check_probability(population / effective, f"p_c[{j}]"))
    return HdamConflict(p_c=probabilities, shared_fractions=fractions, effective_sizes=sizes)


def hdam_extrapolate(
    h: HdamParams,
    response_times: Sequence[float],
    new_rates: Sequence[float],
    new_response_times: Sequence[float],
) -> List[float]:
    """Per-DBR scale factors for p_c^j when class arrival rates change."""
    factors = []
    for j in range(len(h.dbr_sizes)):
        held = [c.held_locks[j] for c in h.classes]
        rates = [c.arrival_rate for c in h.classes]
        if sum(k * lam * r for k, lam, r in zip(held, rates, response_times)) == 0:
            factors.append(1.0)
            continue
        factors.append(
            multiclass_extrapolate(held, rates, response_times, new_rates, new_response_times)
        )
    return factors


def contention_intensity(K1: float, p_c: float, A: float = DEFAULT_FIRST_LEVEL_WAIT) -> float:
    """alpha = K1 p_c A."""
    return K1 * p_c * A


def contention_coefficient(
    rate: float, K1: float, kbar: float, D: float, A: float = DEFAULT_FIRST_LEVEL_WAIT
) -> float:
    """Coefficient a = lambda K1 kbar A / D of the quadratic response-time model."""
    if D <= 0:
        raise DomainError("database size must be positive")
    return rate * K1 * kbar * A / D


def degraded_response_time(r: float, beta: float) -> float:
    """R = r / (1 - beta): response time when a fraction beta of txns is blocked."""
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    return r / (1.0 - beta)


def response_time_quadratic(r: float, a: float) -> float:
    """Root of a R^2 - R + r = 0 that tends to r as a -> 0.

    Uses 2r / (1 + sqrt(1 - 4ar)), algebraically equal to
    (1 - sqrt(1 - 4ar)) / (2a) but free of cancellation for small a.

    Raises:
        ThrashingError: If 4ar > 1 (no real root).
    """
    if a < 0 or r < 0:
        raise DomainError("need a >= 0 and r >= 0")
    if a == 0:
        return r
    disc = 1.0 - 4.0 * a * r
    if disc < 0:
        raise ThrashingError(
            f"4ar = {4 * a * r:.6g} exceeds 1: no stable response time", value=4 * a * r, limit=1.0
        )
    return 2.0 * r / (1.0 + math.sqrt(disc))


def cubic_residual(alpha: float, beta: float) -> float:
    """beta^3 - (1.5 alpha + 2) beta^2 + (1.5 alpha + 1) beta - alpha."""
    return beta**3 - (1.5 * alpha + 2.0) * beta**2 + (1.5 * alpha + 1.0) * beta - alpha


def _cubic_local_max(alpha: float) -> float:
    # Smaller root of the derivative; it lies in (0, 1] for every alpha >= 0.
    b = 2.0 * (1.5 * alpha + 2.0)
    c = 1.5 * alpha + 1.0
    return (b - math.sqrt(b * b - 12.0 * c)) / 6.0


def _critical_alpha() -> float:
    def peak(alpha: float) -> float:
        return cubic_residual(alpha, _cubic_local_max(alpha))

    return optimize.bisect(peak, 0.0, 1.0, xtol=_ROOT_XTOL, maxiter=200)


def critical_point() -> tuple:
    """(alpha*, beta*): the fold beyond which the cubic has no root below 1.

    The local maximum of the cubic over [0, 1] falls monotonically with alpha;
    alpha* is where it touches zero, found by bisection, and beta* is that
    maximum's location.
    """
    alpha_star = _critical_alpha()
    return alpha_star, _cubic_local_max(alpha_star)


ALPHA_STAR, BETA_STAR = critical_point()


def solve_cubic_beta(alpha: float) -> float:
    """Smallest root in [0, 1) of the equal-step blocked-fraction cubic.

    The cubic is negative at 0 and at 1 for alpha > 0, so its smallest root lies
    between 0 and the local maximum; it is bracketed there and bisected.

    Raises:
        DomainError: If alpha < 0.
        ThrashingError: If alpha > alpha* (no root below the fold).
    """
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    if alpha == 0:
        return 0.0
    top = _cubic_local_max(alpha)
    peak = cubic_residual(alpha, top)
    if peak < 0:
        raise ThrashingError(
            f"alpha = {alpha:.4g} exceeds alpha* = {ALPHA_STAR:.3f}: the system thrashes",
            value=alpha,
            limit=ALPHA_STAR,
        )
    if peak == 0:
        return top
    return optimize.bisect(lambda b: cubic_residual(alpha, b), 0.0, top, xtol=_ROOT_XTOL)


def blocking_level_distribution(beta: float, levels: int) -> List[float]:
    """Probabilities P_b(1..levels) that a conflict blocks at each wait level.

    P_b(i) = beta^(i-1) for i >= 2 and P_b(1) = 1 - beta/(1 - beta), the
    complement over infinitely many levels.
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    if levels < 1:
        raise DomainError("need at least one level")
    deeper = [beta ** (i - 1) for i in range(2, levels + 1)]
    return [1.0 - beta / (1.0 - beta)] + deeper


def relative_wait(beta: float) -> float:
    """W/W1 = sum_i P_b(i) W_i/W1 with W_i = (i - 0.5) W1 for i >= 2.

    Closed form 1 + 0.5 beta (1 + beta)/(1 - beta)^2; alpha * relative_wait(beta)
    equals beta exactly on the cubic's solution.
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    return 1.0 + 0.5 * beta * (1.0 + beta) / (1.0 - beta) ** 2


def _unequal_bracket(rho_b: float) -> float:
    return 1.0 + rho_b * (1.0 + rho_b) / (2.0 * (1.0 - rho_b * rho_b))


def unequal_step_beta(alpha: float, rho_b: float) -> float:
    """beta = alpha [1 + rho(1 + rho) / (2(1 - rho^2))] for unequal step times."""
    if not 0.0 <= rho_b < 1.0:
        raise DomainError(f"rho_b must lie in [0, 1), got {rho_b}")
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    return alpha * _unequal_bracket(rho_b)


def solve_unequal_step(
    alpha: float,
    rho_fn: Optional[Callable[[float], float]] = None,
    A: float = DEFAULT_FIRST_LEVEL_WAIT,
    rtol: float = 1e-9,
    max_iterations: int = 10_000,
) -> ContentionState:
    """Iterates W/W1 and rho until beta stops moving.

    Args:
        alpha: Contention intensity.
        rho_fn: Maps the current beta to the fraction of conflicts with blocked
            txns. Defaults to rho = beta (blocked and active txns hold equally many
            locks).
        A: First-level normalized wait, recorded in the result.
        rtol: Relative tolerance on successive beta values.
        max_iterations: Iteration cap.

    Raises:
        NoConvergenceError: If beta leaves [0, 1) or the cap is reached.
    """
    rho_of = rho_fn or (lambda b: b)
    beta = alpha
    for iteration in range(1, max_iterations + 1):
        rho = rho_of(beta)
        if not 0.0 <= rho < 1.0:
            raise NoConvergenceError(
                f"rho left [0, 1) at iteration {iteration}", iteration, beta
            )
        new_beta = unequal_step_beta(alpha, rho)
        if new_beta >= 1.0:
            raise NoConvergenceError(
                f"beta reached {new_beta:.4g} at iteration {iteration}; the system thrashes",
                iteration,
                new_beta,
            )
        if abs(new_beta - beta) <= rtol * max(abs(new_beta), 1e-300):
            rho = rho_of(new_beta)
            return ContentionState(
                alpha=alpha,
                beta=new_beta,
                rho_b=rho,
                cr=rho_to_conflict_ratio(rho),
                A=A,
                relative_wait=_unequal_bracket(rho),
                iterations=iteration,
            )
        beta = new_beta
    raise NoConvergenceError(
        f"no fixed point after {max_iterations} iterations", max_iterations, beta
    )


def conflict_ratio_to_rho(cr: float) -> float:
    """rho = 1 - 1/CR."""
    if cr < 1.0:
        raise DomainError(f"conflict ratio must be at least 1, got {cr}")
    return 1.0 - 1.0 / cr


def rho_to_conflict_ratio(rho_b: float) -> float:
    """CR = 1/(1 - rho)."""
    if not 0.0 <= rho_b < 1.0:
        raise DomainError(f"rho_b must lie in [0, 1), got {rho_b}")
    return 1.0 / (1.0 - rho_b)


def lock_population_rho(beta: float, k: float) -> float:
    """rho = L_b / L from the fraction of blocked txns.

    A txn blocked on its j-th request holds j - 1 locks, (k - 1)/2 on average;
    an active one holds `mean_held_locks(k)`.
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    held_blocked = beta * max(k - 1.0, 0.0) / 2.0
    total = held_blocked + (1.0 - beta) * mean_held_locks(k)
    return held_blocked / total if total > 0 else 0.0


def thrashing_load_index(p: SingleClassParams) -> float:
    """k^2 M / D; thrashing sets in near `THRASHING_LOAD_INDEX`."""
    return p.k**2 * p.M / p.D


def throughput_bound(*bounds: float) -> float:
    """System throughput is capped by its tightest resource: min(T_disk, T_cpu, T_lock)."""
    if not bounds:
        raise DomainError("need at least one throughput bound")
    return min(bounds)


def predict(
    K1: float,
    D_eff: float,
    step_time: float,
    mpl: Optional[float] = None,
    arrival_rate: Optional[float] = None,
    A: float = DEFAULT_FIRST_LEVEL_WAIT,
    per_dbr: Optional[List[float]] = None,
    processing_time: Optional[float] = None,
) -> ContentionPrediction:
    """Analytic operating point of a single-class-equivalent workload.

    Closed systems (`mpl`) use the k(M-1)/(2D) estimate for p_c and the cubic
    for beta; open ones (`arrival_rate`) solve the quadratic for R and take
    M = lambda R.

    Args:
        K1: Mean lock requests per txn.
        D_eff: Effective database size (skew and sharing folded in).
        step_time: Mean step time; a txn has K1 + 1 steps.
        mpl: Closed-system concurrency.
        arrival_rate: Open-system arrival rate.
        A: First-level normalized wait.
        per_dbr: Per-DBR p_c to attach to the result.
        processing_time: Contention-free response time r; defaults to (K1 + 1) step_time.

    Raises:
        ThrashingError: If the model has no stable solution.
        DomainError: If neither or both of `mpl` and `arrival_rate` are given.
    """
    if (mpl is None) == (arrival_rate is None):
        raise DomainError("give exactly one of mpl and arrival_rate")
    r = processing_time if processing_time is not None else (K1 + 1.0) * step_time
    kbar = mean_held_locks(K1)

    if mpl is not None:
        params = SingleClassParams(k=K1, M=mpl, D=D_eff, step_time=step_time)
        estimate = conflict_probability(params)
        alpha = contention_intensity(K1, estimate.p_c, A)
        beta = solve_cubic_beta(alpha)
        R = degraded_response_time(r, beta)
        throughput = mpl / R if R > 0 else 0.0
    else:
        a = contention_coefficient(arrival_rate, K1, kbar, D_eff, A)
        R = response_time_quadratic(r, a)
        population = arrival_rate * R
        params = SingleClassParams(k=K1, M=max(1.0, population + 1.0), D=D_eff, step_time=step_time)
        estimate = conflict_probability(params)
        alpha = contention_intensity(K1, estimate.p_c, A)
        beta = 1.0 - r / R if R > 0 else 0.0
        throughput = arrival_rate

    rho_b = lock_population_rho(beta, K1)
    return ContentionPrediction(
        p_c=estimate.p_c,
        p_deadlock_2way=deadlock_probability_2way(params),
        beta=beta,
        R=R,
        rho_b=rho_b,
        conflict_ratio=rho_to_conflict_ratio(rho_b),
        thrashing_margin=ALPHA_STAR - alpha,
        per_dbr=list(per_dbr or [estimate.p_c]),
        alpha=alpha,
        throughput=throughput,
        load_index=thrashing_load_index(params),
        strained=estimate.strained,
    )
