"""Independent replications on a thread pool, merged in seed order."""

from __future__ import annotations

import concurrent.futures
import logging
import os
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from .config import SIM_CONFIG
from .engine import Simulator
from .metrics import SimReport
from .scenario import Scenario
from .utils import mean_and_half_width

logger = logging.getLogger(__name__)

AGGREGATE_FIELDS = (
    "throughput",
    "response_time",
    "p_c",
    "beta",
    "L",
    "L_a",
    "L_b",
    "CR",
    "rho",
    "mean_mpl",
    "mean_in_system",
    "committed",
    "deadlocks",
    "deadlocks_2way",
    "watchdog_detections",
    "restarts",
    "cancellations",
)


class AggregateReport(BaseModel):
    """Means and t-based confidence half-widths across replications.

    A mean CR over a run with `cr_unbounded` set is infinite and serializes as null.
    """

    replications: int
    seeds: List[int]
    mode: str
    policy: str
    load_control: str
    confidence: float
    means: Dict[str, float] = Field(default_factory=dict)
    half_widths: Dict[str, float] = Field(default_factory=dict)
    per_dbr_p_c: Dict[str, float] = Field(default_factory=dict)
    per_dbr_half_widths: Dict[str, float] = Field(default_factory=dict)
    max_blocking_level: int = 0
    cr_unbounded: bool = False
    contention_alarm: bool = False
    serializable: Optional[bool] = None

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def run_replication(scenario: Scenario, seed: int) -> SimReport:
    """Runs one replication of `scenario` with `seed`."""
    return Simulator(
        scenario.workload_spec,
        policy=scenario.policy,
        load_control=scenario.load_control,
        horizon=scenario.horizon,
        warmup=scenario.warmup,
        seed=seed,
        mode=scenario.mode,
        multiphase=scenario.multiphase,
        victim_measure=scenario.victim_measure,
        record_history=scenario.record_history,
    ).run()


def aggregate_reports(reports: Sequence[SimReport], confidence: Optional[float] = None) -> AggregateReport:
    """Combines replication reports; the order of `reports` is kept in `seeds`."""
    if not reports:
        raise ValueError("need at least one report to aggregate")
    confidence = confidence or SIM_CONFIG["confidence"]
    means, half_widths = {}, {}
    for name in AGGREGATE_FIELDS:
        mean, hw = mean_and_half_width([float(getattr(r, name)) for r in reports], confidence)
        means[name] = mean
        half_widths[name] = hw
    per_dbr = {
        dbr: mean_and_half_width([r.per_dbr[dbr].p_c for r in reports], confidence)
        for dbr in reports[0].per_dbr
    }
    oracle = [r.serializable for r in reports if r.serializable is not None]
    first = reports[0]
    return AggregateReport(
        replications=len(reports),
        seeds=[r.seed for r in reports],
        mode=first.mode,
        policy=first.policy,
        load_control=first.load_control,
        confidence=confidence,
        means=means,
        half_widths=half_widths,
        per_dbr_p_c={dbr: mean for dbr, (mean, _) in per_dbr.items()},
        per_dbr_half_widths={dbr: hw for dbr, (_, hw) in per_dbr.items()},
        max_blocking_level=max(r.max_blocking_level for r in reports),
        cr_unbounded=any(r.cr_unbounded for r in reports),
        contention_alarm=any(r.contention_alarm for r in reports),
        serializable=all(oracle) if oracle else None,
    )


class ReplicationRunner:
    """Runs replications concurrently; results always come back in seed order.

    Attributes:
        executor: Pool the replications run on.
        max_workers: Pool size.
    """

    def __init__(self, max_workers: Optional[int] = None):
        """Initializes the runner.

        Args:
            max_workers: Pool size. Falls back to the configured `max_workers`
                (or `CONTENTION_LAB_THREADS`), then to `min(32, os.cpu_count() + 4)`.
        """
        _max_workers = max_workers if max_workers is not None else SIM_CONFIG.get("max_workers")
        if _max_workers is None:
            _max_workers = min(32, (os.cpu_count() or 1) + 4)
        self.max_workers = _max_workers
        self.executor = concurrent.futures.ThreadPoolExecutor(max_workers=_max_workers)
        logger.info(f"[ReplicationRunner] initialized with ThreadPoolExecutor (max_workers={_max_workers})")

    def submit_task(self, func: Callable[..., Any], *args: Any, **kwargs: Any) -> concurrent.futures.Future:
        """Submits a callable to the pool."""
        logger.debug(
            f"Thread {threading.get_ident()}: Submitting task "
            f"{getattr(func, '__name__', repr(func))} to executor."
        )
        return self.executor.submit(func, *args, **kwargs)

    def run(self, scenario: Scenario, seeds: Optional[Sequence[int]] = None) -> List[SimReport]:
        """Runs one replication per seed (default: the scenario's seeds)."""
        seeds = list(seeds if seeds is not None else scenario.seeds())
        futures = [self.submit_task(run_replication, scenario, seed) for seed in seeds]
        reports = []
        for seed, future in zip(seeds, futures):
            reports.append(future.result())
            logger.info(f"[ReplicationRunner] replication seed={seed} done")
        return reports

    def close(self):
        """Shuts down the pool, waiting for running replications."""
        logger.debug("[ReplicationRunner] shutting down executor")
        self.executor.shutdown(wait=True)

    def __enter__(self) -> "ReplicationRunner":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
