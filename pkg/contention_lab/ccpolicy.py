"""Lock-conflict resolution policies, OCC variants and restart scheduling.

Every policy is a pure decision over a `Conflict` snapshot. The engine applies
the returned `PolicyAction` and owns all state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Hashable, Iterable, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .errors import ScenarioError
from .workload import LockMode


@dataclass(frozen=True)
class TxnView:
    """What a policy may see of one txn.

    Attributes:
        id: Txn id.
        birth: First-arrival time, kept across restarts; smaller is older.
        blocked: Whether the txn waits for a lock.
        level: Blocking level (0 when active).
        locks_held: Granted locks.
        writes_held: Granted X locks.
        has_waiters: Whether some blocked txn waits for this one.
        restart_count: Restarts so far.
    """

    id: int
    birth: float
    blocked: bool = False
    level: int = 0
    locks_held: int = 0
    writes_held: int = 0
    has_waiters: bool = False
    restart_count: int = 0

    def older_than(self, other: "TxnView") -> bool:
        """Age order with the id as tie-break, so priorities are total."""
        return (self.birth, self.id) < (other.birth, other.id)


@dataclass(frozen=True)
class Conflict:
    """A lock request that cannot be granted right away."""

    requester: TxnView
    holders: Tuple[TxnView, ...]
    mode: LockMode
    obj: Hashable
    clock: float

    def __post_init__(self):
        if not self.holders:
            raise ValueError("a conflict needs at least one holder")
        if any(h.id == self.requester.id for h in self.holders):
            raise ValueError("the requester cannot be among the holders")


@dataclass(frozen=True)
class RestartDiscipline:
    """When an aborted txn runs again.

    Attributes:
        kind: "immediate", "delayed" (exponential delay) or "restart_waiting"
            (after every txn in `wait_for` has completed).
        mean_delay: Mean delay for "delayed"; None lets the engine use the
            running mean response time.
        wait_for: Txn ids to outlive for "restart_waiting".
    """

    kind: Literal["immediate", "delayed", "restart_waiting"] = "immediate"
    mean_delay: Optional[float] = None
    wait_for: FrozenSet[int] = frozenset()

    def __post_init__(self):
        if self.kind == "delayed" and self.mean_delay is not None and self.mean_delay <= 0:
            raise ValueError("delayed restart needs a positive mean delay")

    @classmethod
    def immediate(cls) -> "RestartDiscipline":
        return cls("immediate")

    @classmethod
    def delayed(cls, mean_delay: Optional[float] = None) -> "RestartDiscipline":
        return cls("delayed", mean_delay=mean_delay)

    @classmethod
    def waiting(cls, txn_ids: Iterable[int]) -> "RestartDiscipline":
        return cls("restart_waiting", wait_for=frozenset(txn_ids))


@dataclass(frozen=True)
class Block:
    """Queue the request."""


@dataclass(frozen=True)
class AbortSelf:
    """Abort the requester; `permanent` removes it from the system."""

    discipline: RestartDiscipline = field(default_factory=RestartDiscipline.immediate)
    permanent: bool = False


@dataclass(frozen=True)
class AbortOthers:
    """Abort the listed holders, then retry the request."""

    victims: Tuple[int, ...]
    discipline: RestartDiscipline = field(default_factory=RestartDiscipline.immediate)


PolicyAction = Block | AbortSelf | AbortOthers


def blocking_2pl(c: Conflict) -> PolicyAction:
    """General waiting: always block; deadlocks go to detection."""
    return Block()


def no_waiting(
    c: Conflict,
    attempts_limit: float = math.inf,
    discipline: Optional[RestartDiscipline] = None,
) -> PolicyAction:
    """Restart on every conflict; after `attempts_limit` restarts abort for good."""
    if c.requester.restart_count >= attempts_limit:
        return AbortSelf(permanent=True)
    return AbortSelf(discipline or RestartDiscipline.delayed())


def cautious_waiting(c: Conflict, discipline: Optional[RestartDiscipline] = None) -> PolicyAction:
    """Wait only behind active txns; otherwise restart.

    Without a `discipline` the restart waits until the conflicting holders finish.
    """
    if any(h.blocked for h in c.holders):
        return AbortSelf(discipline or RestartDiscipline.waiting(h.id for h in c.holders))
    return Block()


def running_priority(
    c: Conflict,
    symmetric: bool = False,
    discipline: Optional[RestartDiscipline] = None,
) -> PolicyAction:
    """Blocked holders yield to a running requester.

    With `symmetric`, a requester that others already wait for is aborted
    instead of becoming a blocked blocker, so wait chains stay one deep.
    """
    restart = discipline or RestartDiscipline.immediate()
    blocked = tuple(h.id for h in c.holders if h.blocked)
    if blocked and not c.requester.blocked:
        return AbortOthers(blocked, restart)
    if symmetric and c.requester.has_waiters:
        return AbortSelf(restart)
    return Block()


def wait_die(c: Conflict, discipline: Optional[RestartDiscipline] = None) -> PolicyAction:
    """Older requesters wait, younger ones die."""
    if all(c.requester.older_than(h) for h in c.holders):
        return Block()
    return AbortSelf(discipline or RestartDiscipline.immediate())


def wound_wait(c: Conflict, discipline: Optional[RestartDiscipline] = None) -> PolicyAction:
    """Older requesters wound younger holders; younger requesters wait."""
    younger = tuple(h.id for h in c.holders if c.requester.older_than(h))
    if younger:
        return AbortOthers(younger, discipline or RestartDiscipline.immediate())
    return Block()


def _progress(view: TxnView) -> int:
    return view.locks_held


def wait_depth_limited(
    c: Conflict, discipline: Optional[RestartDiscipline] = None
) -> PolicyAction:
    """Keeps wait chains at depth one, aborting the txn with less progress.

    Two shapes exceed depth one: a blocked holder (requester -> holder -> ...)
    and a requester others already wait for (waiter -> requester -> holder).
    On the violating edge the txn holding fewer locks is aborted; on a tie the
    one that is not the requester goes.
    """
    restart = discipline or RestartDiscipline.immediate()
    mine = _progress(c.requester)
    blocked = [h for h in c.holders if h.blocked]
    if blocked:
        weakest = min(blocked, key=lambda h: (_progress(h), -h.birth, -h.id))
        if _progress(weakest) <= mine:
            return AbortOthers((weakest.id,), restart)
        return AbortSelf(restart)
    if c.requester.has_waiters:
        weakest = min(c.holders, key=lambda h: (_progress(h), -h.birth, -h.id))
        if _progress(weakest) <= mine:
            return AbortOthers((weakest.id,), restart)
        return AbortSelf(restart)
    return Block()


def occ_validate(
    accessed: FrozenSet[Hashable], committed_writes: Iterable[FrozenSet[Hashable]]
) -> bool:
    """Die-variant check: no write set committed since the start touched `accessed`."""
    return all(accessed.isdisjoint(ws) for ws in committed_writes)


def occ_kill_victims(
    write_set: FrozenSet[Hashable], running: Iterable[Tuple[int, FrozenSet[Hashable]]]
) -> List[int]:
    """Kill-variant broadcast: running txns whose accesses meet the committer's writes."""
    return [tid for tid, accessed in running if not write_set.isdisjoint(accessed)]


class MultiphaseOptions(BaseModel):
    """Two-phase execution: a lock-free virtual pass, then the real run.

    Attributes:
        enabled: Run the virtual first phase.
        preclaim: Second phase takes all its locks atomically before its first step.
    """

    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    preclaim: bool = False


class PolicySpec(BaseModel):
    """A policy chosen by name with its parameters, as in scenario files."""

    model_config = ConfigDict(extra="forbid")

    name: str = "blocking"
    params: Dict[str, Any] = Field(default_factory=dict)


@dataclass
class Policy:
    """A configured policy as the engine uses it.

    Attributes:
        name: Registry name.
        decide: Decision function, None for OCC.
        deadlock_free: Whether cycles can only appear through a bug.
        occ: "die" or "kill" for optimistic policies.
        victim_discipline: Restart of deadlock victims.
    """

    name: str
    decide: Optional[Callable[[Conflict], PolicyAction]]
    deadlock_free: bool = False
    occ: Optional[Literal["die", "kill"]] = None
    victim_discipline: RestartDiscipline = field(default_factory=RestartDiscipline.immediate)
    restart_discipline: RestartDiscipline = field(default_factory=RestartDiscipline.immediate)

    @property
    def uses_locks(self) -> bool:
        return self.occ is None


def _discipline_from(params: Dict[str, Any], default: str) -> RestartDiscipline:
    kind = params.get("restart", default)
    if kind == "immediate":
        return RestartDiscipline.immediate()
    if kind == "delayed":
        mean = params.get("restart_delay")
        if mean is not None and mean <= 0:
            raise ScenarioError("restart_delay must be positive")
        return RestartDiscipline.delayed(mean)
    raise ScenarioError(f"unknown restart discipline '{kind}' (use 'immediate' or 'delayed')")


def _check_params(name: str, params: Dict[str, Any], allowed: Tuple[str, ...]) -> None:
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ScenarioError(f"policy '{name}' does not take parameter(s) {unknown}")


def build_policy(spec: PolicySpec) -> Policy:
    """Resolves a `PolicySpec` against the registry.

    Raises:
        ScenarioError: For unknown names or parameters.
    """
    name, params = spec.name, dict(spec.params)
    restart_keys = ("restart", "restart_delay")

    if name in ("blocking", "blocking_2pl"):
        _check_params(name, params, restart_keys)
        restart = _discipline_from(params, "delayed")
        return Policy(name, blocking_2pl, victim_discipline=restart, restart_discipline=restart)
    if name in ("no_waiting", "nw"):
        _check_params(name, params, restart_keys + ("attempts_limit",))
        limit = params.get("attempts_limit")
        limit = math.inf if limit is None else int(limit)
        restart = _discipline_from(params, "delayed")
        return Policy(
            name,
            lambda c: no_waiting(c, limit, restart),
            deadlock_free=True,
            restart_discipline=restart,
        )
    if name in ("cautious_waiting", "cw"):
        _check_params(name, params, restart_keys)
        if params.get("restart", "restart_waiting") == "restart_waiting":
            if "restart_delay" in params:
                raise ScenarioError("restart_delay needs restart = 'delayed'")
            return Policy(name, cautious_waiting, deadlock_free=True)
        restart = _discipline_from(params, "delayed")
        return Policy(
            name,
            lambda c: cautious_waiting(c, restart),
            deadlock_free=True,
            restart_discipline=restart,
        )
    if name in ("running_priority", "rp", "symmetric_rp"):
        _check_params(name, params, restart_keys + ("symmetric",))
        symmetric = bool(params.get("symmetric", name == "symmetric_rp"))
        restart = _discipline_from(params, "immediate")
        return Policy(
            name,
            lambda c: running_priority(c, symmetric, restart),
            deadlock_free=True,
            restart_discipline=restart,
        )
    if name in ("wait_die", "wd"):
        _check_params(name, params, restart_keys)
        restart = _discipline_from(params, "immediate")
        return Policy(
            name, lambda c: wait_die(c, restart), deadlock_free=True, restart_discipline=restart
        )
    if name in ("wound_wait", "ww"):
        _check_params(name, params, restart_keys)
        restart = _discipline_from(params, "immediate")
        return Policy(
            name, lambda c: wound_wait(c, restart), deadlock_free=True, restart_discipline=restart
        )
    if name in ("wait_depth_limited", "wdl"):
        _check_params(name, params, restart_keys)
        restart = _discipline_from(params, "immediate")
        return Policy(
            name,
            lambda c: wait_depth_limited(c, restart),
            deadlock_free=True,
            restart_discipline=restart,
        )
    if name in ("occ_die", "occ_kill"):
        _check_params(name, params, restart_keys)
        restart = _discipline_from(params, "immediate")
        return Policy(
            name,
            None,
            deadlock_free=True,
            occ="die" if name == "occ_die" else "kill",
            restart_discipline=restart,
        )
    raise ScenarioError(f"unknown policy '{name}'")


POLICY_NAMES = (
    "blocking",
    "no_waiting",
    "cautious_waiting",
    "running_priority",
    "symmetric_rp",
    "wait_die",
    "wound_wait",
    "wait_depth_limited",
    "occ_die",
    "occ_kill",
)
