"""Discrete-event simulator of a strict-2PL (or optimistic) txn processing system.

One run is single-threaded and fully determined by its inputs and seed. The
simulator models data contention only: every txn step runs on its own server.
"""

from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Deque, Dict, Hashable, Iterable, List, Literal, NamedTuple, Optional, Set, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, model_validator

from .ccpolicy import (
    AbortOthers,
    AbortSelf,
    Block,
    Conflict,
    MultiphaseOptions,
    Policy,
    PolicySpec,
    RestartDiscipline,
    TxnView,
    build_policy,
    occ_kill_victims,
    occ_validate,
)
from .config import SIM_CONFIG, VICTIM_MEASURES
from .loadctl import (
    HalfAndHalf,
    LoadControlSpec,
    LoadController,
    LoadSignal,
    NoLoadControl,
    TxnProgress,
    WindowTracker,
    build_load_control,
)
from .locktable import Grant, LockTable
from .metrics import MetricsCollector, SimReport
from .utils import RngStreams
from .workload import LockMode, PlanSampler, TxnPlan, WorkloadSpec, mean_locks_per_txn, nominal_processing_time

logger = logging.getLogger(__name__)

LockKey = Tuple[int, int]


class EventKind(IntEnum):
    ARRIVAL = 0
    STEP_COMPLETE = 1
    RESTART = 2
    COMMIT = 3


class Event(NamedTuple):
    """Heap entry; ordered by (time, seq) since seq is unique."""

    time: float
    seq: int
    kind: EventKind
    txn_id: int
    epoch: int


class TxnState(str, Enum):
    QUEUED = "queued"
    ACTIVE = "active"
    BLOCKED = "blocked"
    RESTART_WAIT = "restart_wait"
    COMMITTED = "committed"
    ABORTED = "aborted"


class Access(NamedTuple):
    """One access of a committed txn, for the serializability oracle."""

    seq: int
    txn_id: int
    obj: Hashable
    mode: LockMode


@dataclass
class TxnRecord:
    """One simulated txn.

    `epoch` changes on every abort, so events scheduled for an earlier attempt
    are recognised as stale. `birth` survives restarts and orders txns by age.
    """

    id: int
    plan: TxnPlan
    arrival: float
    birth: float
    state: TxnState = TxnState.QUEUED
    step: int = 0
    epoch: int = 0
    start: float = 0.0
    restart_count: int = 0
    speed: float = 1.0
    held: Dict[LockKey, LockMode] = field(default_factory=dict)
    writes: int = 0
    pending: Optional[Tuple[LockKey, LockMode]] = None
    level: int = 0
    restart_wait: Set[int] = field(default_factory=set)
    read_set: Set[LockKey] = field(default_factory=set)
    write_set: Set[LockKey] = field(default_factory=set)
    accesses: List[Access] = field(default_factory=list)
    phase: int = 2
    preclaimed: bool = False

    @property
    def class_index(self) -> int:
        return self.plan.class_index

    @property
    def locks_held(self) -> int:
        return len(self.held)

    @property
    def progress(self) -> float:
        """Locks acquired over locks planned (1 for lock-free txns)."""
        k = self.plan.k
        return len(self.held) / k if k else 1.0

    def view(self, has_waiters: bool = False) -> TxnView:
        return TxnView(
            id=self.id,
            birth=self.birth,
            blocked=self.state is TxnState.BLOCKED,
            level=self.level,
            locks_held=len(self.held),
            writes_held=self.writes,
            has_waiters=has_waiters,
            restart_count=self.restart_count,
        )


class RunMode(BaseModel):
    """Open (Poisson arrivals at `arrival_rate`) or closed (`mpl` txns, zero think time)."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["open", "closed"]
    arrival_rate: Optional[float] = None
    mpl: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "open":
            if self.arrival_rate is None or self.arrival_rate < 0:
                raise ValueError("open mode needs a non-negative arrival_rate")
        elif self.mpl is None or self.mpl < 1:
            raise ValueError("closed mode needs mpl >= 1")
        return self

    @classmethod
    def open(cls, arrival_rate: float) -> "RunMode":
        return cls(kind="open", arrival_rate=arrival_rate)

    @classmethod
    def closed(cls, mpl: int) -> "RunMode":
        return cls(kind="closed", mpl=mpl)

    def label(self) -> str:
        return f"open({self.arrival_rate:g})" if self.kind == "open" else f"closed({self.mpl})"


def choose_victim(cycle: Iterable[TxnView], measure: str = "locks") -> int:
    """The cycle member with the least progress; ties go to the youngest.

    Args:
        cycle: Views of the deadlocked txns.
        measure: "locks" counts every granted lock, "writes" only X locks.
    """
    members = list(cycle)
    if not members:
        raise ValueError("cannot choose a victim from an empty cycle")

    def key(v: TxnView):
        work = v.writes_held if measure == "writes" else v.locks_held
        return (work, -v.birth, -v.id)

    return min(members, key=key).id


def precedence_graph_is_acyclic(history: Iterable[Access]) -> bool:
    """True when conflicting accesses of committed txns induce no cycle.

    An edge T1 -> T2 exists when T1 accessed an object before T2 did and at
    least one of the two accesses is X.
    """
    by_object: Dict[Hashable, List[Access]] = {}
    for access in history:
        by_object.setdefault(access.obj, []).append(access)
    graph = nx.DiGraph()
    for accesses in by_object.values():
        accesses.sort(key=lambda a: a.seq)
        for i, first in enumerate(accesses):
            graph.add_node(first.txn_id)
            for later in accesses[i + 1:]:
                if later.txn_id == first.txn_id:
                    continue
                if first.mode is LockMode.S and later.mode is LockMode.S:
                    continue
                graph.add_edge(first.txn_id, later.txn_id)
    return nx.is_directed_acyclic_graph(graph)


class Simulator:
    """Event loop, txn lifecycle, deadlock handling and load control for one run.

    Attributes:
        workload: Validated workload.
        policy: Conflict policy in effect.
        controller: Admission controller.
        locks: The lock table.
        metrics: Measurement accumulators.
        txns: Txns currently in the system, by id.
    """

    def __init__(
        self,
        workload: WorkloadSpec,
        policy: Union[Policy, PolicySpec, None] = None,
        load_control: Union[LoadController, LoadControlSpec, None] = None,
        horizon: float = 1000.0,
        warmup: float = 0.0,
        seed: int = 0,
        mode: Optional[RunMode] = None,
        multiphase: Optional[MultiphaseOptions] = None,
        victim_measure: Optional[str] = None,
        record_history: bool = False,
        window_length: Optional[int] = None,
        batches: Optional[int] = None,
        confidence: Optional[float] = None,
    ):
        if not horizon > warmup >= 0:
            raise ValueError(f"need horizon > warmup >= 0 (got horizon={horizon}, warmup={warmup})")
        self.workload = workload
        self.sampler = PlanSampler(workload)
        if policy is None:
            policy = PolicySpec()
        self.policy = build_policy(policy) if isinstance(policy, PolicySpec) else policy
        if load_control is None:
            load_control = NoLoadControl()
        elif isinstance(load_control, LoadControlSpec):
            load_control = build_load_control(load_control, SIM_CONFIG["hysteresis"])
        self.controller = load_control
        self.mode = mode or RunMode.closed(1)
        self.multiphase = multiphase or MultiphaseOptions()
        self.victim_measure = victim_measure or SIM_CONFIG["victim_measure"]
        if self.victim_measure not in VICTIM_MEASURES:
            raise ValueError(f"victim_measure must be one of {VICTIM_MEASURES}")
        self.horizon = horizon
        self.warmup = warmup
        self.seed = seed
        self.confidence = confidence or SIM_CONFIG["confidence"]
        self.record_history = record_history

        streams = RngStreams(seed)
        self._rng_plans = streams.workload
        self._rng_arrivals = streams.arrivals
        self._rng_restarts = streams.restarts

        self.locks = LockTable()
        self.metrics = MetricsCollector(
            warmup,
            horizon,
            [c.id for c in workload.classes],
            [d.id for d in workload.dbrs],
            batches or SIM_CONFIG["batches"],
        )
        self.gauges = self.metrics.gauges
        self.window = WindowTracker(window_length or SIM_CONFIG["window_length"])
        self.txns: Dict[int, TxnRecord] = {}
        self.history: List[Access] = []
        self.clock = 0.0

        self._events: List[Event] = []
        self._seq = 0
        self._access_seq = 0
        self._next_id = 0
        self._memory_queue: Deque[int] = deque()
        self._preclaim_queue: List[int] = []
        self._restart_waiters: Dict[int, Set[int]] = {}
        self._committed_writes: Deque[Tuple[float, frozenset]] = deque()
        self._response_sum = 0.0
        self._response_count = 0
        self._k1 = mean_locks_per_txn(workload)
        self._nominal_r = nominal_processing_time(workload)
        self._needs_progress = isinstance(self.controller, HalfAndHalf)
        self._started = False

    # ------------------------------------------------------------------ events

    def _push(self, time: float, kind: EventKind, txn_id: int = -1, epoch: int = 0) -> None:
        heapq.heappush(self._events, Event(time, self._seq, kind, txn_id, epoch))
        self._seq += 1

    def _advance(self, now: float) -> None:
        dt = now - self.clock
        if dt > 0:
            g = self.gauges
            self.window.integrate(
                dt, g.admitted + g.restarting, g.blocked, g.held_active, g.held_blocked
            )
        self.metrics.advance(now)
        self.clock = max(self.clock, now)

    def start(self) -> None:
        """Seeds the initial population or the first arrival."""
        if self._started:
            return
        self._started = True
        if self.mode.kind == "closed":
            for _ in range(self.mode.mpl):
                self._new_txn()
        elif self.mode.arrival_rate > 0:
            self._push(self._rng_arrivals.exponential(1.0 / self.mode.arrival_rate), EventKind.ARRIVAL)
        self._control()

    def step(self) -> bool:
        """Processes the next event; False once the horizon is reached."""
        self.start()
        if not self._events or self._events[0].time > self.horizon:
            return False
        event = heapq.heappop(self._events)
        self._advance(event.time)
        if event.kind is EventKind.ARRIVAL:
            self._new_txn()
            self._push(
                event.time + self._rng_arrivals.exponential(1.0 / self.mode.arrival_rate),
                EventKind.ARRIVAL,
            )
        else:
            txn = self.txns.get(event.txn_id)
            if txn is None or txn.epoch != event.epoch:
                return True
            if event.kind is EventKind.STEP_COMPLETE:
                self._on_step_complete(txn)
            elif event.kind is EventKind.COMMIT:
                self._on_commit(txn)
            elif event.kind is EventKind.RESTART:
                self._begin_attempt(txn)
        self._control()
        return True

    def run(self) -> SimReport:
        """Runs to the horizon and reports the post-warmup measurements."""
        logger.info(
            f"[Run seed={self.seed}] {self.mode.label()} policy={self.policy.name} "
            f"load_control={self.controller.name} horizon={self.horizon:g} warmup={self.warmup:g}"
        )
        while self.step():
            pass
        self._advance(self.horizon)
        report = self.metrics.report(
            seed=self.seed,
            mode=self.mode.label(),
            policy=self.policy.name,
            load_control=self.controller.name,
            confidence=self.confidence,
            contention_alarm=self.controller.alarm,
            serializable=precedence_graph_is_acyclic(self.history) if self.record_history else None,
        )
        logger.info(
            f"[Run seed={self.seed}] committed={report.committed} "
            f"throughput={report.throughput:.4g} R={report.response_time:.4g}"
        )
        return report

    # --------------------------------------------------------------- bookkeeping

    def _count(self, txn: TxnRecord, sign: int) -> None:
        g = self.gauges
        n = len(txn.held)
        state = txn.state
        if state is TxnState.ACTIVE:
            g.admitted += sign
            g.held_active += sign * n
        elif state is TxnState.BLOCKED:
            g.admitted += sign
            g.blocked += sign
            g.held_blocked += sign * n
        elif state is TxnState.RESTART_WAIT:
            g.restarting += sign
        if state not in (TxnState.COMMITTED, TxnState.ABORTED):
            g.in_system += sign

    def _set_state(self, txn: TxnRecord, state: TxnState) -> None:
        self._count(txn, -1)
        txn.state = state
        self._count(txn, +1)

    def _hold(self, txn: TxnRecord, key: LockKey, mode: LockMode) -> None:
        self._count(txn, -1)
        txn.held[key] = mode
        if mode is LockMode.X:
            txn.writes += 1
        self._count(txn, +1)
        if self.record_history:
            self._log_access(txn, key, mode)

    def _log_access(self, txn: TxnRecord, key: LockKey, mode: LockMode) -> None:
        txn.accesses.append(Access(self._access_seq, txn.id, key, mode))
        self._access_seq += 1

    @property
    def mpl(self) -> int:
        """Admitted txns, including those waiting to restart."""
        return self.gauges.admitted + self.gauges.restarting

    def view(self, txn_id: int, with_waiters: bool = False) -> TxnView:
        txn = self.txns[txn_id]
        has_waiters = False
        if with_waiters:
            objects = list(txn.held)
            if txn.pending is not None:
                objects.append(txn.pending[0])
            has_waiters = bool(self.locks.waiters_of(txn.id, objects))
        return txn.view(has_waiters)

    # ---------------------------------------------------------------- lifecycle

    def _new_txn(self) -> TxnRecord:
        plan = self.sampler.sample(self._rng_plans)
        txn = TxnRecord(id=self._next_id, plan=plan, arrival=self.clock, birth=self.clock)
        self._next_id += 1
        self.txns[txn.id] = txn
        self._count(txn, +1)
        self._memory_queue.append(txn.id)
        return txn

    def _admit(self, txn: TxnRecord) -> None:
        if self.multiphase.enabled and txn.epoch == 0:
            txn.phase = 1
        self._begin_attempt(txn)

    def _begin_attempt(self, txn: TxnRecord) -> None:
        primed = txn.restart_count > 0 or (self.multiphase.enabled and txn.phase == 2)
        txn.speed = self.workload.classes[txn.class_index].restart_speedup if primed else 1.0
        if txn.state in (TxnState.RESTART_WAIT, TxnState.QUEUED):
            self._set_state(txn, TxnState.ACTIVE)
        txn.step = 0
        txn.start = self.clock
        txn.epoch += 1
        txn.read_set.clear()
        txn.write_set.clear()
        txn.accesses.clear()
        txn.preclaimed = False
        if txn.phase == 2 and self.multiphase.enabled and self.multiphase.preclaim and self.policy.uses_locks:
            self._preclaim(txn)
        else:
            self._schedule_step(txn)

    def _schedule_step(self, txn: TxnRecord) -> None:
        steps = txn.plan.steps
        kind = EventKind.COMMIT if txn.step == len(steps) - 1 else EventKind.STEP_COMPLETE
        self._push(self.clock + steps[txn.step].duration * txn.speed, kind, txn.id, txn.epoch)

    def _advance_step(self, txn: TxnRecord) -> None:
        txn.step += 1
        self._schedule_step(txn)

    def _on_step_complete(self, txn: TxnRecord) -> None:
        lock = txn.plan.steps[txn.step].lock
        if lock is None or txn.phase == 1 or txn.preclaimed:
            self._advance_step(txn)
            return
        key = (lock.dbr, lock.obj)
        if not self.policy.uses_locks:
            self.metrics.record_request(lock.dbr, False)
            self.window.requests += 1
            if lock.mode is LockMode.X:
                txn.write_set.add(key)
            else:
                txn.read_set.add(key)
                if self.record_history:
                    self._log_access(txn, key, LockMode.S)
            self._advance_step(txn)
            return
        self.request_lock(txn, key, lock.mode)

    def request_lock(self, txn: TxnRecord, key: LockKey, mode: LockMode) -> str:
        """Requests `key` for `txn` and applies the policy on conflict.

        Returns:
            "granted", "blocked" or "aborted" (the requester was aborted).
        """
        blockers = self.locks.blockers(txn.id, key, mode)
        self.metrics.record_request(key[0], bool(blockers))
        self.window.requests += 1
        if blockers:
            self.window.conflicts += 1
        while True:
            if not blockers:
                self.locks.grant(txn.id, key, mode)
                self._hold(txn, key, mode)
                self._advance_step(txn)
                return "granted"
            conflict = Conflict(
                requester=self.view(txn.id, with_waiters=True),
                holders=tuple(self.txns[b].view() for b in blockers),
                mode=mode,
                obj=key,
                clock=self.clock,
            )
            action = self.policy.decide(conflict)
            if isinstance(action, Block):
                epoch = txn.epoch
                self._block(txn, key, mode, blockers)
                if txn.epoch != epoch:
                    return "aborted"
                return "blocked" if txn.state is TxnState.BLOCKED else "granted"
            if isinstance(action, AbortSelf):
                cause = "permanent" if action.permanent else "policy"
                self._abort(txn, cause, action.discipline, permanent=action.permanent)
                return "aborted"
            if not isinstance(action, AbortOthers) or not action.victims:
                raise RuntimeError(f"policy {self.policy.name} returned {action!r}")
            for victim in action.victims:
                if victim not in blockers:
                    raise RuntimeError(f"policy {self.policy.name} aborted non-holder {victim}")
                if victim in self.txns and self.txns[victim].state in (TxnState.ACTIVE, TxnState.BLOCKED):
                    self._abort(self.txns[victim], "wounded", action.discipline)
            blockers = self.locks.blockers(txn.id, key, mode)

    def _block(self, txn: TxnRecord, key: LockKey, mode: LockMode, blockers: List[int]) -> None:
        self.locks.enqueue(txn.id, key, mode)
        txn.pending = (key, mode)
        self._set_state(txn, TxnState.BLOCKED)
        txn.level = max(self.txns[b].level for b in blockers) + 1
        self.metrics.record_level(txn.level)
        self._raise_waiter_levels(txn)
        logger.debug(f"[Run seed={self.seed}] t={self.clock:.4f} txn {txn.id} blocked on {key} at level {txn.level}")
        self._resolve_deadlocks(txn)

    def _raise_waiter_levels(self, txn: TxnRecord) -> None:
        stack = [txn]
        seen = {txn.id}
        while stack:
            current = stack.pop()
            objects = list(current.held)
            if current.pending is not None:
                objects.append(current.pending[0])
            for waiter_id in self.locks.waiters_of(current.id, objects):
                waiter = self.txns[waiter_id]
                if waiter_id in seen or waiter.level >= current.level + 1:
                    continue
                seen.add(waiter_id)
                waiter.level = current.level + 1
                self.metrics.record_level(waiter.level)
                stack.append(waiter)

    def waits_for_graph(self, start: Optional[int] = None) -> nx.DiGraph:
        """Waits-for edges (waiter -> txn it waits for), from `start` or from every blocked txn."""
        graph = nx.DiGraph()
        if start is None:
            stack = [t.id for t in self.txns.values() if t.state is TxnState.BLOCKED]
        else:
            stack = [start]
        seen = set(stack)
        while stack:
            tid = stack.pop()
            txn = self.txns.get(tid)
            if txn is None or txn.state is not TxnState.BLOCKED or txn.pending is None:
                continue
            for blocker in self.locks.blockers(tid, *txn.pending):
                graph.add_edge(tid, blocker)
                if blocker not in seen:
                    seen.add(blocker)
                    stack.append(blocker)
        return graph

    def detect_deadlock(self, txn_id: int) -> Optional[List[int]]:
        """Depth-first search for a waits-for cycle through `txn_id`."""
        graph = self.waits_for_graph(txn_id)
        if txn_id not in graph:
            return None
        try:
            edges = nx.find_cycle(graph, source=txn_id)
        except nx.NetworkXNoCycle:
            return None
        return [u for u, _ in edges]

    def _resolve_deadlocks(self, txn: TxnRecord) -> None:
        while txn.state is TxnState.BLOCKED:
            cycle = self.detect_deadlock(txn.id)
            if cycle is None:
                return
            self.metrics.record_deadlock(len(cycle), watchdog=self.policy.deadlock_free)
            if self.policy.deadlock_free:
                logger.warning(
                    f"[Run seed={self.seed}] watchdog found a deadlock {cycle} under {self.policy.name}"
                )
            victim = choose_victim((self.txns[t].view() for t in cycle), self.victim_measure)
            logger.debug(f"[Run seed={self.seed}] deadlock {cycle}; victim {victim}")
            self._abort(self.txns[victim], "deadlock", self.policy.victim_discipline)

    def _release(self, txn: TxnRecord) -> List[Grant]:
        granted: List[Grant] = []
        if txn.pending is not None:
            granted.extend(self.locks.dequeue(txn.id, txn.pending[0]))
            txn.pending = None
        if txn.id in self._preclaim_queue:
            self._preclaim_queue.remove(txn.id)
        if txn.held:
            granted.extend(self.locks.release_all(txn.id, list(txn.held)))
            self._count(txn, -1)
            txn.held.clear()
            txn.writes = 0
            self._count(txn, +1)
        return granted

    def _resume(self, granted: List[Grant]) -> None:
        for tid, key, mode in granted:
            txn = self.txns[tid]
            txn.pending = None
            txn.level = 0
            self._set_state(txn, TxnState.ACTIVE)
            self._hold(txn, key, mode)
            self._advance_step(txn)
        if self._preclaim_queue:
            self._retry_preclaims()

    def _finished(self, txn_id: int) -> None:
        for waiter_id in sorted(self._restart_waiters.pop(txn_id, ())):
            waiter = self.txns.get(waiter_id)
            if waiter is None or waiter.state is not TxnState.RESTART_WAIT:
                continue
            waiter.restart_wait.discard(txn_id)
            if not waiter.restart_wait:
                self._begin_attempt(waiter)

    def _abort(
        self,
        txn: TxnRecord,
        cause: str,
        discipline: RestartDiscipline,
        permanent: bool = False,
        to_memory_queue: bool = False,
    ) -> None:
        self.metrics.record_abort(cause)
        logger.debug(f"[Run seed={self.seed}] t={self.clock:.4f} txn {txn.id} aborted ({cause})")
        txn.epoch += 1
        granted = self._release(txn)
        txn.level = 0
        if permanent:
            self._set_state(txn, TxnState.ABORTED)
            del self.txns[txn.id]
        else:
            txn.restart_count += 1
            self.metrics.record_restart()
            self._set_state(txn, TxnState.RESTART_WAIT)
        self._resume(granted)
        self._finished(txn.id)
        if permanent:
            if self.mode.kind == "closed":
                self._new_txn()
            return
        if to_memory_queue:
            self._set_state(txn, TxnState.QUEUED)
            self._memory_queue.append(txn.id)
            return
        self._schedule_restart(txn, discipline)

    def _schedule_restart(self, txn: TxnRecord, discipline: RestartDiscipline) -> None:
        if discipline.kind == "restart_waiting":
            live = {
                t
                for t in discipline.wait_for
                if t in self.txns and self.txns[t].state in (TxnState.ACTIVE, TxnState.BLOCKED)
            }
            if live:
                txn.restart_wait = live
                for t in live:
                    self._restart_waiters.setdefault(t, set()).add(txn.id)
                return
            self._begin_attempt(txn)
        elif discipline.kind == "delayed":
            mean = discipline.mean_delay
            if mean is None:
                mean = (
                    self._response_sum / self._response_count
                    if self._response_count
                    else self._nominal_r
                )
            delay = self._rng_restarts.exponential(mean) if mean > 0 else 0.0
            self._push(self.clock + delay, EventKind.RESTART, txn.id, txn.epoch)
        else:
            self._begin_attempt(txn)

    def _on_commit(self, txn: TxnRecord) -> None:
        if txn.phase == 1:
            txn.phase = 2
            self._begin_attempt(txn)
            return
        if self.policy.occ is not None and not self._occ_commit(txn):
            return
        if self.record_history:
            for key in sorted(txn.write_set):
                self._log_access(txn, key, LockMode.X)
            self.history.extend(txn.accesses)
        granted = self._release(txn)
        self._set_state(txn, TxnState.COMMITTED)
        del self.txns[txn.id]
        response = self.clock - txn.arrival
        self._response_sum += response
        self._response_count += 1
        self.metrics.record_commit(txn.class_index, response)
        stats = self.window.commit(self.clock)
        if stats is not None:
            self.controller.observe_window(stats)
        self._resume(granted)
        self._finished(txn.id)
        if self.mode.kind == "closed":
            self._new_txn()

    def _occ_commit(self, txn: TxnRecord) -> bool:
        accessed = frozenset(txn.read_set | txn.write_set)
        writes = frozenset(txn.write_set)
        if self.policy.occ == "die":
            recent = (ws for t, ws in self._committed_writes if t > txn.start)
            if not occ_validate(accessed, recent):
                self._abort(txn, "occ_validation", self.policy.restart_discipline)
                return False
            self._committed_writes.append((self.clock, writes))
            self._prune_committed_writes(exclude=txn.id)
        elif writes:
            running = [
                (t.id, frozenset(t.read_set | t.write_set))
                for t in self.txns.values()
                if t.id != txn.id and t.state is TxnState.ACTIVE and t.phase == 2
            ]
            for victim in occ_kill_victims(writes, running):
                self._abort(self.txns[victim], "occ_kill", self.policy.restart_discipline)
        return True

    def _prune_committed_writes(self, exclude: int) -> None:
        starts = [t.start for t in self.txns.values() if t.id != exclude and t.state is TxnState.ACTIVE]
        oldest = min(starts) if starts else self.clock
        while self._committed_writes and self._committed_writes[0][0] <= oldest:
            self._committed_writes.popleft()

    # ---------------------------------------------------------------- preclaim

    def _try_preclaim(self, txn: TxnRecord) -> bool:
        requests = txn.plan.lock_requests
        if any(self.locks.blockers(txn.id, (r.dbr, r.obj), r.mode) for r in requests):
            return False
        for r in requests:
            key = (r.dbr, r.obj)
            self.locks.grant(txn.id, key, r.mode)
            self._hold(txn, key, r.mode)
            self.metrics.record_request(r.dbr, False)
            self.window.requests += 1
        txn.preclaimed = True
        return True

    def _preclaim(self, txn: TxnRecord) -> None:
        if self._try_preclaim(txn):
            self._schedule_step(txn)
            return
        self.metrics.record_preclaim_wait()
        self._preclaim_queue.append(txn.id)
        self._set_state(txn, TxnState.BLOCKED)

    def _retry_preclaims(self) -> None:
        for tid in list(self._preclaim_queue):
            txn = self.txns[tid]
            if self._try_preclaim(txn):
                self._preclaim_queue.remove(tid)
                self._set_state(txn, TxnState.ACTIVE)
                self._schedule_step(txn)

    # ------------------------------------------------------------- load control

    def signal(self) -> LoadSignal:
        beta, cr, p_c = self.window.estimates()
        progress: Tuple[TxnProgress, ...] = ()
        if self._needs_progress:
            progress = tuple(
                TxnProgress(t.id, t.progress, t.state is TxnState.BLOCKED)
                for t in self.txns.values()
                if t.state in (TxnState.ACTIVE, TxnState.BLOCKED)
            )
        return LoadSignal(mpl=self.mpl, beta=beta, cr=cr, p_c=p_c, k1=self._k1, progress=progress)

    def _control(self) -> None:
        signal = self.signal()
        for victim in self.controller.cancellations(signal):
            txn = self.txns.get(victim)
            if txn is None or txn.state is not TxnState.BLOCKED:
                continue
            self.metrics.record_cancellation()
            self._abort(txn, "cancelled", RestartDiscipline.immediate(), to_memory_queue=True)
            signal = self.signal()
        while self._memory_queue and (self.mpl == 0 or self.controller.admit(signal)):
            txn = self.txns[self._memory_queue.popleft()]
            self._admit(txn)
            signal = self.signal()

    # --------------------------------------------------------------- invariants

    def check_invariants(self) -> List[str]:
        """Consistency problems of the current state (empty when healthy)."""
        problems = []
        if not self.locks.is_consistent():
            problems.append("lock table holds incompatible grants or a grantable queue head")
        held_active = held_blocked = blocked = admitted = restarting = 0
        for txn in self.txns.values():
            restarting += txn.state is TxnState.RESTART_WAIT
            if txn.state is TxnState.BLOCKED:
                blocked += 1
                admitted += 1
                held_blocked += len(txn.held)
                if txn.pending is None and txn.id not in self._preclaim_queue:
                    problems.append(f"txn {txn.id} is blocked without an outstanding request")
            elif txn.state is TxnState.ACTIVE:
                admitted += 1
                held_active += len(txn.held)
                if txn.pending is not None:
                    problems.append(f"txn {txn.id} is active with an outstanding request")
            elif txn.held:
                problems.append(f"txn {txn.id} holds locks in state {txn.state.value}")
            for key, mode in txn.held.items():
                if self.locks.holders(key).get(txn.id) is not mode:
                    problems.append(f"txn {txn.id} thinks it holds {key} but the table disagrees")
        g = self.gauges
        if (g.held_active, g.held_blocked, g.blocked, g.admitted, g.restarting) != (
            held_active,
            held_blocked,
            blocked,
            admitted,
            restarting,
        ):
            problems.append("gauges drifted from the txn states")
        if self.policy.uses_locks and not nx.is_directed_acyclic_graph(self.waits_for_graph()):
            problems.append("waits-for graph has a cycle between events")
        return problems


def run(
    workload: WorkloadSpec,
    policy: Union[Policy, PolicySpec, None] = None,
    load_control: Union[LoadController, LoadControlSpec, None] = None,
    horizon: float = 1000.0,
    warmup: float = 0.0,
    seed: int = 0,
    mode: Optional[RunMode] = None,
    **options,
) -> SimReport:
    """Simulates one replication; see `Simulator` for the options."""
    return Simulator(
        workload,
        policy=policy,
        load_control=load_control,
        horizon=horizon,
        warmup=warmup,
        seed=seed,
        mode=mode,
        **options,
    ).run()
