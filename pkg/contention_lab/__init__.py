"""Contention lab: analytic lock-contention models and a 2PL simulator."""

from .analytic import ALPHA_STAR, BETA_STAR, ContentionPrediction, predict
from .ccpolicy import Policy, PolicySpec, build_policy
from .engine import RunMode, Simulator, run
from .loadctl import LoadControlSpec, LoadController, build_load_control
from .locktable import LockTable
from .metrics import SimReport
from .replication import AggregateReport, ReplicationRunner, aggregate_reports
from .scenario import Scenario, load_scenario
from .workload import LockMode, WorkloadSpec

__version__ = "0.1.0"

__all__ = [
    "ALPHA_STAR",
    "AggregateReport",
    "BETA_STAR",
    "ContentionPrediction",
    "LoadControlSpec",
    "LoadController",
    "LockMode",
    "LockTable",
    "Policy",
    "PolicySpec",
    "ReplicationRunner",
    "RunMode",
    "Scenario",
    "SimReport",
    "Simulator",
    "WorkloadSpec",
    "aggregate_reports",
    "build_load_control",
    "build_policy",
    "load_scenario",
    "predict",
    "run",
]
