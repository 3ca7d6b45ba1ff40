"""Scenario files: one JSON document describing a whole experiment."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .analytic import DEFAULT_FIRST_LEVEL_WAIT, QnSystem, device_utilizations, min_mpl
from .ccpolicy import MultiphaseOptions, PolicySpec
from .config import VICTIM_MEASURES
from .engine import RunMode
from .errors import ContentionLabError, ScenarioError
from .loadctl import LoadControlSpec
from .workload import WorkloadSpec, ensure_valid

logger = logging.getLogger(__name__)

# Load-control floor resolved from the hardware network at the arrival rate.
MIN_MPL_FLOOR = "min_mpl"


class AnalysisOptions(BaseModel):
    """Inputs only the analytic side needs.

    Attributes:
        qn_demands: Per-device service demands X_n of the hardware network.
        arrival_rate: Rate at which to evaluate the network (defaults to the
            open-mode arrival rate).
        rate_scale: Factor for the rate-extrapolation rows (e.g. 2 doubles the load).
        A: First-level normalized wait W1/R.
        time_unit_seconds: Seconds per simulated time unit, for display.
    """

    model_config = ConfigDict(extra="forbid")

    qn_demands: Optional[List[float]] = None
    arrival_rate: Optional[float] = None
    rate_scale: float = Field(default=2.0, gt=0)
    A: float = Field(default=DEFAULT_FIRST_LEVEL_WAIT, gt=0)
    time_unit_seconds: float = Field(default=1.0, gt=0)


class OutputOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = "out"


class Scenario(BaseModel):
    """A complete experiment: workload, system mode, policies and run lengths."""

    model_config = ConfigDict(extra="forbid")

    workload: Union[WorkloadSpec, str]
    mode: RunMode
    policy: PolicySpec = Field(default_factory=PolicySpec)
    load_control: LoadControlSpec = Field(default_factory=LoadControlSpec)
    multiphase: MultiphaseOptions = Field(default_factory=MultiphaseOptions)
    horizon: float = 1000.0
    warmup: float = 0.0
    replications: int = 1
    seed: int = 0
    output: OutputOptions = Field(default_factory=OutputOptions)
    analysis: AnalysisOptions = Field(default_factory=AnalysisOptions)
    victim_measure: Optional[str] = None
    record_history: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.victim_measure is not None and self.victim_measure not in VICTIM_MEASURES:
            raise ValueError(f"victim_measure must be one of {VICTIM_MEASURES}")
        if self.load_control.params.get("floor") == MIN_MPL_FLOOR:
            self._resolve_min_mpl_floor()
        return self

    def _resolve_min_mpl_floor(self) -> None:
        options = self.analysis
        rate = options.arrival_rate
        if rate is None and self.mode.kind == "open":
            rate = self.mode.arrival_rate
        if not options.qn_demands or rate is None:
            raise ValueError("floor 'min_mpl' needs analysis.qn_demands and an arrival rate")
        qn = QnSystem(demands=options.qn_demands)
        try:
            bound = min_mpl(len(qn.demands), max(device_utilizations(qn, rate)))
        except ContentionLabError as e:
            raise ValueError(f"floor 'min_mpl': {e}") from e
        logger.debug(f"Load-control floor set to the minimum MPL {bound.minimum} (bound {bound.bound:.4g})")
        params = {**self.load_control.params, "floor": bound.minimum}
        self.load_control = self.load_control.model_copy(update={"params": params})

    @property
    def workload_spec(self) -> WorkloadSpec:
        if isinstance(self.workload, str):
            raise ScenarioError("workload path has not been resolved; use load_scenario")
        return self.workload

    def seeds(self) -> List[int]:
        return list(range(self.seed, self.seed + self.replications))


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Reads a scenario and resolves and validates its workload.

    A string `workload` is a path to a workload JSON file, relative to the
    scenario file.

    Raises:
        ScenarioError: If a file cannot be read or parsed.
        pydantic.ValidationError: If a document violates its schema.
        WorkloadValidationError: If the workload breaks an invariant.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"scenario file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario {path} is not valid JSON: {e}") from e

    scenario = Scenario.model_validate(data)
    if isinstance(scenario.workload, str):
        workload_path = path.parent / scenario.workload
        try:
            workload = WorkloadSpec.from_file(workload_path)
        except FileNotFoundError as e:
            raise ScenarioError(f"workload file not found: {workload_path}") from e
        except json.JSONDecodeError as e:
            raise ScenarioError(f"workload {workload_path} is not valid JSON: {e}") from e
        except ValidationError:
            logger.error(f"Workload file {workload_path} violates the workload schema")
            raise
        scenario = scenario.model_copy(update={"workload": workload})
    ensure_valid(scenario.workload_spec)
    logger.debug(f"Loaded scenario {path} ({scenario.mode.label()}, policy {scenario.policy.name})")
    return scenario
