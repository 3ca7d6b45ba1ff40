"""HDAM workload specification, validation and random transaction plans.

A workload is a set of database regions (DBRs) and a set of txn classes. Each
class issues k_{i,j} lock requests to DBR j, a fraction s_{i,j} of them shared.
Objects are drawn by the b-c rule: with probability b from a hot set holding
ceil(c D) objects, otherwise from the rest.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .analytic import AccessSkew, HdamClass, HdamParams, skew_factor
from .errors import WorkloadValidationError

logger = logging.getLogger(__name__)

_FREQUENCY_TOLERANCE = 1e-9


class LockMode(str, Enum):
    """Lock modes; only S is compatible with S."""

    S = "S"
    X = "X"

    def compatible(self, other: "LockMode") -> bool:
        return self is LockMode.S and other is LockMode.S


class StepTimeDist(BaseModel):
    """Distribution of per-step processing times.

    Attributes:
        kind: "fixed" (equal step lengths), "exponential", or "empirical"
            (uniform choice among `values`).
        mean: Mean step time for fixed and exponential.
        values: Sample values for empirical.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["fixed", "exponential", "empirical"] = "fixed"
    mean: float = 1.0
    values: Optional[List[float]] = None

    @property
    def mean_value(self) -> float:
        """Mean step time s-bar for any kind."""
        if self.kind == "empirical":
            return float(np.mean(self.values)) if self.values else 0.0
        return self.mean

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws `size` step times."""
        if self.kind == "fixed":
            return np.full(size, self.mean, dtype=float)
        if self.kind == "exponential":
            return rng.exponential(self.mean, size=size)
        return rng.choice(np.asarray(self.values, dtype=float), size=size)


class DbrSpec(BaseModel):
    """A database region.

    Attributes:
        id: Region name.
        D: Number of lockable objects.
        skew: b-c access skew; uniform access when omitted.
    """

    model_config = ConfigDict(extra="forbid")

    id: str
    D: int
    skew: Optional[AccessSkew] = None

    @property
    def hot_size(self) -> int:
        """ceil(c D), the number of hot objects (0 without skew)."""
        if self.skew is None:
            return 0
        return math.ceil(self.skew.c * self.D)

    @property
    def size_factor(self) -> float:
        """Skew shrink factor of this region (1 for uniform access)."""
        if self.skew is None:
            return 1.0
        return skew_factor(self.skew.b, self.skew.c)


class TxnClassSpec(BaseModel):
    """A txn class.

    Attributes:
        id: Class name.
        frequency: f_i, share of arrivals.
        lock_counts: k_{i,j} per DBR id.
        shared_fractions: s_{i,j} per DBR id (missing entries are 0).
        step_time_dist: Per-step processing time distribution.
        restart_speedup: Step-time multiplier on re-execution (buffer retention).
    """

    model_config = ConfigDict(extra="forbid")

    id: str
    frequency: float
    lock_counts: Dict[str, int]
    shared_fractions: Dict[str, float] = Field(default_factory=dict)
    step_time_dist: StepTimeDist = Field(default_factory=StepTimeDist)
    restart_speedup: float = 1.0

    @property
    def total_locks(self) -> int:
        """k_i = sum_j k_{i,j}."""
        return sum(self.lock_counts.values())


class WorkloadSpec(BaseModel):
    """The whole workload: DBRs and txn classes."""

    model_config = ConfigDict(extra="forbid")

    classes: List[TxnClassSpec]
    dbrs: List[DbrSpec]

    def dbr_index(self, dbr_id: str) -> int:
        for j, dbr in enumerate(self.dbrs):
            if dbr.id == dbr_id:
                return j
        raise KeyError(dbr_id)

    def class_index(self, class_id: str) -> int:
        for i, cls in enumerate(self.classes):
            if cls.id == class_id:
                return i
        raise KeyError(class_id)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "WorkloadSpec":
        """Loads a workload JSON document (unknown fields are rejected)."""
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))


class LockRequest(NamedTuple):
    """One lock request: DBR index, object id within the DBR, and mode."""

    dbr: int
    obj: int
    mode: LockMode


class PlanStep(NamedTuple):
    """One step: processing time, then an optional lock request at its end."""

    duration: float
    lock: Optional[LockRequest]


@dataclass(frozen=True)
class TxnPlan:
    """A sampled txn: k lock-bearing steps followed by one commit step."""

    class_id: str
    class_index: int
    steps: List[PlanStep]

    @property
    def lock_requests(self) -> List[LockRequest]:
        return [step.lock for step in self.steps if step.lock is not None]

    @property
    def k(self) -> int:
        return len(self.steps) - 1


def validate(spec: WorkloadSpec) -> List[str]:
    """Checks every workload invariant and returns all problems found.

    Returns:
        An empty list when the workload is valid.
    """
    errors: List[str] = []
    if not spec.classes:
        errors.append("at least one txn class is required")
    if not spec.dbrs:
        errors.append("at least one DBR is required")

    dbr_ids = [d.id for d in spec.dbrs]
    if len(set(dbr_ids)) != len(dbr_ids):
        errors.append("DBR ids must be unique")
    class_ids = [c.id for c in spec.classes]
    if len(set(class_ids)) != len(class_ids):
        errors.append("class ids must be unique")

    sizes = {d.id: d.D for d in spec.dbrs}
    for dbr in spec.dbrs:
        if dbr.D < 1:
            errors.append(f"DBR '{dbr.id}': D must be at least 1 (got {dbr.D})")
            continue
        if dbr.skew is not None:
            hot = dbr.hot_size
            if dbr.skew.b > 0 and hot < 1:
                errors.append(f"DBR '{dbr.id}': hot set is empty but b > 0")
            if dbr.skew.b < 1 and hot >= dbr.D:
                errors.append(f"DBR '{dbr.id}': hot set covers every object but b < 1")

    total_frequency = sum(c.frequency for c in spec.classes)
    if spec.classes and abs(total_frequency - 1.0) > _FREQUENCY_TOLERANCE:
        errors.append(f"frequencies must sum to 1 (got {total_frequency:g})")

    for cls in spec.classes:
        prefix = f"class '{cls.id}'"
        if not 0.0 <= cls.frequency <= 1.0:
            errors.append(f"{prefix}: frequency must lie in [0, 1]")
        if not 0.0 < cls.restart_speedup <= 1.0:
            errors.append(f"{prefix}: restart_speedup must lie in (0, 1]")
        for dbr_id, k in cls.lock_counts.items():
            if dbr_id not in sizes:
                errors.append(f"{prefix}: unknown DBR '{dbr_id}' in lock_counts")
                continue
            if k < 0:
                errors.append(f"{prefix}: lock count for '{dbr_id}' must be non-negative")
            elif k > sizes[dbr_id]:
                errors.append(
                    f"{prefix}: cannot request {k} distinct objects from DBR '{dbr_id}' "
                    f"of size {sizes[dbr_id]}"
                )
        for dbr_id, s in cls.shared_fractions.items():
            if dbr_id not in sizes:
                errors.append(f"{prefix}: unknown DBR '{dbr_id}' in shared_fractions")
            elif not 0.0 <= s <= 1.0:
                errors.append(f"{prefix}: shared fraction for '{dbr_id}' must lie in [0, 1]")
        dist = cls.step_time_dist
        if dist.kind == "empirical":
            if not dist.values or any(v < 0 for v in dist.values):
                errors.append(f"{prefix}: empirical step times need non-negative values")
        elif dist.mean <= 0:
            errors.append(f"{prefix}: mean step time must be positive")
    return errors


def ensure_valid(spec: WorkloadSpec) -> WorkloadSpec:
    """Returns `spec` unchanged or raises with every validation error."""
    errors = validate(spec)
    if errors:
        logger.error(f"Workload rejected with {len(errors)} error(s): {errors}")
        raise WorkloadValidationError(errors)
    return spec


class _ClassTable(NamedTuple):
    k: int
    dbr_probs: np.ndarray
    shared: np.ndarray


class PlanSampler:
    """Draws i.i.d. txn plans for a validated workload.

    Plans depend only on the workload and the generator handed in, so one
    generator per consumer keeps concurrent sampling reproducible.
    """

    def __init__(self, spec: WorkloadSpec):
        self.spec = ensure_valid(spec)
        self._frequencies = np.array([c.frequency for c in spec.classes], dtype=float)
        self._sizes = np.array([d.D for d in spec.dbrs], dtype=np.int64)
        self._hot = np.array([d.hot_size for d in spec.dbrs], dtype=np.int64)
        self._b = np.array(
            [d.skew.b if d.skew is not None else -1.0 for d in spec.dbrs], dtype=float
        )
        self._tables: List[_ClassTable] = []
        for cls in spec.classes:
            counts = np.array([cls.lock_counts.get(d.id, 0) for d in spec.dbrs], dtype=float)
            k = int(counts.sum())
            probs = counts / k if k > 0 else counts
            shared = np.array([cls.shared_fractions.get(d.id, 0.0) for d in spec.dbrs])
            self._tables.append(_ClassTable(k=k, dbr_probs=probs, shared=shared))

    def draw_class(self, rng: np.random.Generator) -> int:
        if len(self._frequencies) == 1:
            return 0
        return int(rng.choice(len(self._frequencies), p=self._frequencies))

    def draw_objects(self, rng: np.random.Generator, dbrs: np.ndarray) -> np.ndarray:
        """Draws one object id per entry of `dbrs` by the b-c rule."""
        sizes = self._sizes[dbrs]
        u = rng.random(len(dbrs))
        objs = np.floor(u * sizes).astype(np.int64)
        skewed = self._b[dbrs] >= 0
        if skewed.any():
            hot = self._hot[dbrs]
            go_hot = rng.random(len(dbrs)) < self._b[dbrs]
            v = rng.random(len(dbrs))
            hot_obj = np.floor(v * hot).astype(np.int64)
            cold_obj = hot + np.floor(v * (sizes - hot)).astype(np.int64)
            objs = np.where(skewed, np.where(go_hot, hot_obj, cold_obj), objs)
        return objs

    def draw_requests(
        self, rng: np.random.Generator, class_index: int, n: int
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Draws `n` independent requests of one class: (dbrs, objects, shared flags)."""
        table = self._tables[class_index]
        if len(self._sizes) == 1:
            dbrs = np.zeros(n, dtype=np.int64)
        else:
            dbrs = rng.choice(len(self._sizes), size=n, p=table.dbr_probs)
        objs = self.draw_objects(rng, dbrs)
        shared = rng.random(n) < table.shared[dbrs]
        return dbrs, objs, shared

    def sample(self, rng: np.random.Generator) -> TxnPlan:
        """Samples one plan; see `sample_txn`."""
        ci = self.draw_class(rng)
        cls = self.spec.classes[ci]
        table = self._tables[ci]
        requests: List[LockRequest] = []
        seen = set()
        used = np.zeros(len(self._sizes), dtype=np.int64)
        while len(requests) < table.k:
            dbrs, objs, shared = self.draw_requests(rng, ci, table.k - len(requests))
            for j, obj, sh in zip(dbrs.tolist(), objs.tolist(), shared.tolist()):
                if used[j] >= self._sizes[j] or (j, obj) in seen:
                    continue
                seen.add((j, obj))
                used[j] += 1
                requests.append(LockRequest(j, obj, LockMode.S if sh else LockMode.X))
                if len(requests) == table.k:
                    break
        durations = cls.step_time_dist.draw(rng, table.k + 1).tolist()
        steps = [PlanStep(d, req) for d, req in zip(durations, requests)]
        steps.append(PlanStep(durations[-1], None))
        return TxnPlan(class_id=cls.id, class_index=ci, steps=steps)


def sample_txn(spec: Union[WorkloadSpec, PlanSampler], rng: np.random.Generator) -> TxnPlan:
    """Samples one txn plan.

    The class is drawn by frequency; each lock step picks its DBR in proportion
    to k_{i,j}, its object by the b-c rule and its mode (S with probability
    s_{i,j}). Repeated objects are re-drawn, and a DBR whose objects are all
    taken by this plan is skipped, so a plan never asks for an object twice.
    """
    sampler = spec if isinstance(spec, PlanSampler) else PlanSampler(spec)
    return sampler.sample(rng)


def mean_locks_per_txn(spec: WorkloadSpec) -> float:
    """sum_i f_i k_i."""
    return sum(c.frequency * c.total_locks for c in spec.classes)


def mean_step_time(spec: WorkloadSpec) -> float:
    """Frequency-weighted mean step time."""
    return sum(c.frequency * c.step_time_dist.mean_value for c in spec.classes)


def class_processing_times(spec: WorkloadSpec) -> List[float]:
    """Contention-free processing time (k_i + 1) s-bar_i of each class."""
    return [(c.total_locks + 1) * c.step_time_dist.mean_value for c in spec.classes]


def nominal_processing_time(spec: WorkloadSpec) -> float:
    """Contention-free txn processing time sum_i f_i (k_i + 1) s-bar_i."""
    return sum(c.frequency * r for c, r in zip(spec.classes, class_processing_times(spec)))


def effective_size(spec: WorkloadSpec) -> float:
    """Single-region effective database size: skew and request-weighted sharing.

    Regions are pooled: each contributes its size times its skew factor, and the
    sharing factor uses the workload-wide shared fraction.
    """
    hdam = to_hdam(spec)
    total_requests = sum(sum(c.frequency * k for k in c.lock_counts) for c in hdam.classes)
    if total_requests == 0:
        return float(sum(d.D * d.size_factor for d in spec.dbrs))
    shared = sum(
        c.frequency * k * s
        for c in hdam.classes
        for k, s in zip(c.lock_counts, c.shared_fractions)
    )
    s_mean = shared / total_requests
    return sum(d.D * d.size_factor for d in spec.dbrs) / (1.0 - s_mean * s_mean)


def to_hdam(
    spec: WorkloadSpec,
    arrival_rates: Optional[List[float]] = None,
    held_fraction: float = 0.5,
) -> HdamParams:
    """Converts a workload to analytic HDAM parameters.

    Args:
        spec: The workload.
        arrival_rates: lambda_i per class (zeros when omitted).
        held_fraction: kbar_{i,j}/k_{i,j}; 1/2 for equal steps.
    """
    rates = arrival_rates or [0.0] * len(spec.classes)
    classes = []
    for cls, rate in zip(spec.classes, rates):
        counts = [float(cls.lock_counts.get(d.id, 0)) for d in spec.dbrs]
        classes.append(
            HdamClass(
                arrival_rate=rate,
                frequency=cls.frequency,
                lock_counts=counts,
                held_locks=[held_fraction * k for k in counts],
                shared_fractions=[cls.shared_fractions.get(d.id, 0.0) for d in spec.dbrs],
            )
        )
    return HdamParams(
        classes=classes,
        dbr_sizes=[float(d.D) for d in spec.dbrs],
        dbr_skew_factors=[d.size_factor for d in spec.dbrs],
    )


def snapshot_conflict_rate(
    spec: WorkloadSpec, held: int, trials: int, rng: np.random.Generator, class_index: int = 0
) -> float:
    """Monte-Carlo conflict rate of one request against `held` granted requests.

    Each trial draws `held` requests as the granted set and one new request; that request
    conflicts when it hits a granted object and the modes are not both S. This
    isolates the sampler's effective database size from simulator dynamics.
    """
    sampler = PlanSampler(spec)
    g_dbr, g_obj, g_shared = sampler.draw_requests(rng, class_index, held * trials)
    p_dbr, p_obj, p_shared = sampler.draw_requests(rng, class_index, trials)
    g_dbr = g_dbr.reshape(trials, held)
    g_obj = g_obj.reshape(trials, held)
    g_shared = g_shared.reshape(trials, held)
    same = (g_dbr == p_dbr[:, None]) & (g_obj == p_obj[:, None])
    incompatible = ~(g_shared & p_shared[:, None])
    return float(np.mean(np.any(same & incompatible, axis=1)))
