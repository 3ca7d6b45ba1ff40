"""Strict-2PL lock table with FCFS wait queues over S/X modes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Tuple

from .workload import LockMode

logger = logging.getLogger(__name__)

ObjectKey = Hashable
Grant = Tuple[int, ObjectKey, LockMode]


@dataclass(slots=True)
class LockEntry:
    """Lock state of one object.

    Attributes:
        obj: The object key.
        granted: txn id -> granted mode.
        queue: FCFS list of (txn id, requested mode).
    """

    obj: ObjectKey
    granted: Dict[int, LockMode] = field(default_factory=dict)
    queue: List[Tuple[int, LockMode]] = field(default_factory=list)

    def compatible_with_granted(self, mode: LockMode) -> bool:
        return all(mode.compatible(held) for held in self.granted.values())

    def is_consistent(self) -> bool:
        """One X holder xor any number of S holders; a queued head cannot be granted."""
        modes = list(self.granted.values())
        if LockMode.X in modes and len(modes) > 1:
            return False
        if self.queue and self.compatible_with_granted(self.queue[0][1]):
            return False
        return True


class LockTable:
    """Per-object granted sets and wait queues.

    The table never decides policy: callers ask who a request would wait for,
    then grant or enqueue. Releases rescan the queue, granting the head and every
    following request compatible with it, in order.
    """

    def __init__(self) -> None:
        self.entries: Dict[ObjectKey, LockEntry] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, obj: ObjectKey) -> LockEntry:
        found = self.entries.get(obj)
        if found is None:
            found = LockEntry(obj)
            self.entries[obj] = found
        return found

    def blockers(self, txn_id: int, obj: ObjectKey, mode: LockMode) -> List[int]:
        """Txns `txn_id` would wait for if it requested `obj` in `mode` now.

        These are the incompatible granted holders plus the incompatible requests
        queued ahead of it (for a txn already queued, only those in front). An
        empty list means the request can be granted at once.
        """
        found = self.entries.get(obj)
        if found is None:
            return []
        waiting_on = [
            tid for tid, held in found.granted.items() if tid != txn_id and not mode.compatible(held)
        ]
        queued_ahead = []
        in_queue = False
        for tid, queued in found.queue:
            if tid == txn_id:
                in_queue = True
                break
            if not mode.compatible(queued):
                queued_ahead.append(tid)
        if not waiting_on and not in_queue and found.queue and not queued_ahead:
            # Compatible with everything but a nonempty queue: FCFS still makes it
            # wait behind the head.
            queued_ahead.append(found.queue[0][0])
        return waiting_on + queued_ahead

    def grant(self, txn_id: int, obj: ObjectKey, mode: LockMode) -> None:
        found = self.entry(obj)
        if txn_id in found.granted:
            raise RuntimeError(f"txn {txn_id} already holds {obj!r}")
        found.granted[txn_id] = mode

    def enqueue(self, txn_id: int, obj: ObjectKey, mode: LockMode) -> None:
        self.entry(obj).queue.append((txn_id, mode))

    def holders(self, obj: ObjectKey) -> Dict[int, LockMode]:
        found = self.entries.get(obj)
        return dict(found.granted) if found else {}

    def waiters_of(self, txn_id: int, objects: List[ObjectKey]) -> List[int]:
        """Queued txns that wait (directly) for `txn_id` on the given objects."""
        result: List[int] = []
        for obj in objects:
            found = self.entries.get(obj)
            if found is None or not found.queue:
                continue
            for tid, queued in found.queue:
                if tid != txn_id and tid not in result and txn_id in self.blockers(tid, obj, queued):
                    result.append(tid)
        return result

    def _rescan(self, found: LockEntry) -> List[Grant]:
        granted: List[Grant] = []
        while found.queue:
            tid, mode = found.queue[0]
            if not found.compatible_with_granted(mode):
                break
            found.queue.pop(0)
            found.granted[tid] = mode
            granted.append((tid, found.obj, mode))
        if not found.granted and not found.queue:
            del self.entries[found.obj]
        return granted

    def dequeue(self, txn_id: int, obj: ObjectKey) -> List[Grant]:
        """Withdraws a waiting request; returns requests granted as a result."""
        found = self.entries.get(obj)
        if found is None:
            return []
        found.queue = [(tid, m) for tid, m in found.queue if tid != txn_id]
        return self._rescan(found)

    def release_all(self, txn_id: int, objects: List[ObjectKey]) -> List[Grant]:
        """Releases every lock of `txn_id` on `objects`; returns the new grants."""
        granted: List[Grant] = []
        for obj in objects:
            found = self.entries.get(obj)
            if found is None or txn_id not in found.granted:
                continue
            del found.granted[txn_id]
            granted.extend(self._rescan(found))
        if granted:
            logger.debug(f"[LockTable] txn {txn_id} release granted {len(granted)} waiter(s)")
        return granted

    def is_consistent(self) -> bool:
        return all(e.is_consistent() for e in self.entries.values())
