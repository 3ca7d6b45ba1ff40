"""Time-weighted accumulators and the per-run `SimReport`."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .utils import safe_ratio, t_half_width

logger = logging.getLogger(__name__)

ABORT_CAUSES = (
    "deadlock",
    "policy",
    "wounded",
    "occ_validation",
    "occ_kill",
    "cancelled",
    "permanent",
)

# Stable column order of `SimReport.to_csv_row`.
CSV_COLUMNS = (
    "seed",
    "mode",
    "policy",
    "load_control",
    "elapsed",
    "committed",
    "throughput",
    "throughput_hw",
    "response_time",
    "response_time_hw",
    "p_c",
    "p_c_hw",
    "beta",
    "beta_hw",
    "L",
    "L_a",
    "L_b",
    "CR",
    "rho",
    "mean_mpl",
    "mean_in_system",
    "deadlocks",
    "deadlocks_2way",
    "watchdog_detections",
    "max_blocking_level",
    "aborts",
    "restarts",
    "permanent_aborts",
    "cancellations",
    "preclaim_waits",
    "contention_alarm",
)


class ClassStats(BaseModel):
    committed: int = 0
    throughput: float = 0.0
    response_time: float = 0.0


class DbrStats(BaseModel):
    requests: int = 0
    conflicts: int = 0
    p_c: float = 0.0


class SimReport(BaseModel):
    """Post-warmup measurements of one simulation run.

    Lock-population means follow L = L_a + L_b, with L_a held by active and L_b
    by blocked txns. CR = L/L_a and rho = L_b/L, so rho = 1 - 1/CR. A run that
    never held a lock reports CR = 1 and rho = 0. When only blocked txns held
    locks CR is infinite; JSON has no infinity and writes it as null, so
    `cr_unbounded` marks those runs. Beta divides blocked time by the time of
    every admitted txn, restart-waiting ones included.
    """

    seed: int
    mode: str
    policy: str
    load_control: str
    elapsed: float
    committed: int = 0
    throughput: float = 0.0
    response_time: float = 0.0
    p_c: float = 0.0
    beta: float = 0.0
    L: float = 0.0
    L_a: float = 0.0
    L_b: float = 0.0
    CR: float = 1.0
    rho: float = 0.0
    cr_unbounded: bool = False
    mean_mpl: float = 0.0
    mean_in_system: float = 0.0
    requests: int = 0
    conflicts: int = 0
    deadlocks: int = 0
    deadlocks_2way: int = 0
    watchdog_detections: int = 0
    max_blocking_level: int = 0
    aborts: Dict[str, int] = Field(default_factory=dict)
    restarts: int = 0
    permanent_aborts: int = 0
    cancellations: int = 0
    preclaim_waits: int = 0
    per_class: Dict[str, ClassStats] = Field(default_factory=dict)
    per_dbr: Dict[str, DbrStats] = Field(default_factory=dict)
    half_widths: Dict[str, float] = Field(default_factory=dict)
    contention_alarm: bool = False
    serializable: Optional[bool] = None

    @property
    def total_aborts(self) -> int:
        return sum(self.aborts.values())

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def to_csv_row(self) -> List[object]:
        """Values in `CSV_COLUMNS` order."""
        flat = {
            "throughput_hw": self.half_widths.get("throughput", 0.0),
            "response_time_hw": self.half_widths.get("response_time", 0.0),
            "p_c_hw": self.half_widths.get("p_c", 0.0),
            "beta_hw": self.half_widths.get("beta", 0.0),
            "aborts": self.total_aborts,
        }
        return [flat[c] if c in flat else getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class Gauges:
    """Instantaneous state the engine keeps current between events."""

    held_active: int = 0
    held_blocked: int = 0
    blocked: int = 0
    admitted: int = 0
    restarting: int = 0
    in_system: int = 0


class MetricsCollector:
    """Integrates `Gauges` over post-warmup time and counts events.

    Call `advance(now)` before every state change; the gauges are piecewise
    constant between calls. The post-warmup interval is split into equal batches
    for batch-means confidence intervals.
    """

    def __init__(
        self,
        warmup: float,
        horizon: float,
        class_ids: Sequence[str],
        dbr_ids: Sequence[str],
        batches: int = 10,
    ):
        self.warmup = warmup
        self.horizon = horizon
        self.class_ids = list(class_ids)
        self.dbr_ids = list(dbr_ids)
        self.batches = max(1, batches)
        self.batch_length = (horizon - warmup) / self.batches
        self.gauges = Gauges()
        self.clock = 0.0

        self.area_active_locks = 0.0
        self.area_blocked_locks = 0.0
        self.area_blocked = 0.0
        self.area_mpl = 0.0
        self.area_system = 0.0

        self.requests = np.zeros(len(self.dbr_ids), dtype=np.int64)
        self.conflicts = np.zeros(len(self.dbr_ids), dtype=np.int64)
        self.commits = np.zeros(len(self.class_ids), dtype=np.int64)
        self.response_sums = np.zeros(len(self.class_ids), dtype=float)
        self.aborts: Counter = Counter()
        self.deadlocks = 0
        self.deadlocks_2way = 0
        self.watchdog_detections = 0
        self.max_level = 0
        self.restarts = 0
        self.cancellations = 0
        self.preclaim_waits = 0

        self.batch_commits = np.zeros(self.batches, dtype=np.int64)
        self.batch_response = np.zeros(self.batches, dtype=float)
        self.batch_requests = np.zeros(self.batches, dtype=np.int64)
        self.batch_conflicts = np.zeros(self.batches, dtype=np.int64)
        self.batch_blocked = np.zeros(self.batches, dtype=float)
        self.batch_mpl = np.zeros(self.batches, dtype=float)

    @property
    def measuring(self) -> bool:
        return self.warmup <= self.clock <= self.horizon

    def _batch(self, t: float) -> int:
        if self.batch_length <= 0:
            return 0
        return min(self.batches - 1, max(0, int((t - self.warmup) / self.batch_length)))

    def advance(self, now: float) -> None:
        """Integrates the gauges over [clock, now] intersected with the measured window."""
        start = max(self.clock, self.warmup)
        end = min(now, self.horizon)
        g = self.gauges
        while end > start:
            b = self._batch(start)
            edge = min(end, self.warmup + (b + 1) * self.batch_length)
            if edge <= start:
                edge = end
            dt = edge - start
            self.area_active_locks += g.held_active * dt
            self.area_blocked_locks += g.held_blocked * dt
            self.area_blocked += g.blocked * dt
            self.area_mpl += (g.admitted + g.restarting) * dt
            self.area_system += g.in_system * dt
            self.batch_blocked[b] += g.blocked * dt
            self.batch_mpl[b] += (g.admitted + g.restarting) * dt
            start = edge
        self.clock = max(self.clock, now)

    def record_request(self, dbr: int, conflict: bool) -> None:
        if not self.measuring:
            return
        b = self._batch(self.clock)
        self.requests[dbr] += 1
        self.batch_requests[b] += 1
        if conflict:
            self.conflicts[dbr] += 1
            self.batch_conflicts[b] += 1

    def record_commit(self, class_index: int, response_time: float) -> None:
        if not self.measuring:
            return
        b = self._batch(self.clock)
        self.commits[class_index] += 1
        self.response_sums[class_index] += response_time
        self.batch_commits[b] += 1
        self.batch_response[b] += response_time

    def record_abort(self, cause: str) -> None:
        if self.measuring:
            self.aborts[cause] += 1

    def record_restart(self) -> None:
        if self.measuring:
            self.restarts += 1

    def record_cancellation(self) -> None:
        if self.measuring:
            self.cancellations += 1

    def record_preclaim_wait(self) -> None:
        if self.measuring:
            self.preclaim_waits += 1

    def record_deadlock(self, cycle_length: int, watchdog: bool) -> None:
        if not self.measuring:
            return
        self.deadlocks += 1
        if cycle_length == 2:
            self.deadlocks_2way += 1
        if watchdog:
            self.watchdog_detections += 1

    def record_level(self, level: int) -> None:
        if self.measuring and level > self.max_level:
            self.max_level = level

    def _half_widths(self, confidence: float) -> Dict[str, float]:
        length = self.batch_length
        throughput = self.batch_commits / length if length > 0 else np.zeros(self.batches)
        have_commits = self.batch_commits > 0
        response = self.batch_response[have_commits] / self.batch_commits[have_commits]
        have_requests = self.batch_requests > 0
        p_c = self.batch_conflicts[have_requests] / self.batch_requests[have_requests]
        have_txns = self.batch_mpl > 0
        beta = self.batch_blocked[have_txns] / self.batch_mpl[have_txns]
        return {
            "throughput": t_half_width(throughput, confidence),
            "response_time": t_half_width(response, confidence),
            "p_c": t_half_width(p_c, confidence),
            "beta": t_half_width(beta, confidence),
        }

    def report(
        self,
        seed: int,
        mode: str,
        policy: str,
        load_control: str,
        confidence: float = 0.95,
        contention_alarm: bool = False,
        serializable: Optional[bool] = None,
    ) -> SimReport:
        """Builds the `SimReport` for everything measured so far."""
        elapsed = self.horizon - self.warmup
        L_a = safe_ratio(self.area_active_locks, elapsed)
        L_b = safe_ratio(self.area_blocked_locks, elapsed)
        L = L_a + L_b
        if L > 0 and L_a > 0:
            cr = L / L_a
            rho = 1.0 - 1.0 / cr
        elif L > 0:
            cr, rho = math.inf, 1.0
        else:
            cr, rho = 1.0, 0.0

        committed = int(self.commits.sum())
        requests = int(self.requests.sum())
        conflicts = int(self.conflicts.sum())
        per_class = {
            cid: ClassStats(
                committed=int(n),
                throughput=safe_ratio(float(n), elapsed),
                response_time=safe_ratio(float(s), float(n)),
            )
            for cid, n, s in zip(self.class_ids, self.commits, self.response_sums)
        }
        per_dbr = {
            did: DbrStats(requests=int(q), conflicts=int(c), p_c=safe_ratio(float(c), float(q)))
            for did, q, c in zip(self.dbr_ids, self.requests, self.conflicts)
        }
        aborts = {cause: int(self.aborts[cause]) for cause in ABORT_CAUSES if self.aborts[cause]}
        report = SimReport(
            seed=seed,
            mode=mode,
            policy=policy,
            load_control=load_control,
            elapsed=elapsed,
            committed=committed,
            throughput=safe_ratio(float(committed), elapsed),
            response_time=safe_ratio(float(self.response_sums.sum()), float(committed)),
            p_c=safe_ratio(float(conflicts), float(requests)),
            beta=safe_ratio(self.area_blocked, self.area_mpl),
            L=L,
            L_a=L_a,
            L_b=L_b,
            CR=cr,
            rho=rho,
            cr_unbounded=math.isinf(cr),
            mean_mpl=safe_ratio(self.area_mpl, elapsed),
            mean_in_system=safe_ratio(self.area_system, elapsed),
            requests=requests,
            conflicts=conflicts,
            deadlocks=self.deadlocks,
            deadlocks_2way=self.deadlocks_2way,
            watchdog_detections=self.watchdog_detections,
            max_blocking_level=self.max_level,
            aborts=aborts,
            restarts=self.restarts,
            permanent_aborts=aborts.get("permanent", 0),
            cancellations=self.cancellations,
            preclaim_waits=self.preclaim_waits,
            per_class=per_class,
            per_dbr=per_dbr,
            half_widths=self._half_widths(confidence),
            contention_alarm=contention_alarm,
            serializable=serializable,
        )
        logger.debug(
            f"[Metrics seed={seed}] committed={committed} p_c={report.p_c:.4f} "
            f"beta={report.beta:.4f} CR={report.CR:.4f}"
        )
        return report
