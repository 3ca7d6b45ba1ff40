"""Command-line front end: analyze, simulate, sweep, validate and solve."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from . import analytic
from .config import SIM_CONFIG, get_logging_level_from_string
from .engine import RunMode
from .errors import (
    ContentionLabError,
    DomainError,
    ModelRangeError,
    NoConvergenceError,
    SaturationError,
    ScenarioError,
    ThrashingError,
    WorkloadValidationError,
)
from .metrics import CSV_COLUMNS
from .replication import AGGREGATE_FIELDS, AggregateReport, ReplicationRunner, aggregate_reports
from .scenario import Scenario, load_scenario
from .ccpolicy import PolicySpec
from .utils import parse_values, relative_error
from .workload import (
    class_processing_times,
    ensure_valid,
    effective_size,
    mean_locks_per_txn,
    mean_step_time,
    nominal_processing_time,
    to_hdam,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MODEL_RANGE = 2
EXIT_VALIDATION = 3

SWEEP_AXES = ("lambda", "M", "k", "D", "policy")
SWEEP_TABLE_FIELDS = ("throughput", "response_time", "p_c", "beta", "CR")
VALIDATED_QUANTITIES = ("p_c", "beta", "R", "CR")

Row = Tuple[str, str]


class UsageError(ContentionLabError):
    """Bad command-line usage."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Renders a markdown table."""
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(str(v) for v in row) + " |")
    return "\n".join(lines)


def _num(value: float) -> str:
    return f"{value:.6g}"


def _time(value: float, unit_seconds: float) -> str:
    return f"{value:.6g} ({value * unit_seconds * 1000:.4g} ms)"


def _output_dir(args, scenario: Scenario) -> Path:
    out = Path(args.out or scenario.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        if args.replications < 1:
            raise UsageError("--replications must be at least 1")
        update["replications"] = args.replications
    return scenario.model_copy(update=update) if update else scenario


# ------------------------------------------------------------------- analyze


def predict_scenario(scenario: Scenario) -> analytic.ContentionPrediction:
    """Analytic operating point of the scenario's workload and mode."""
    spec = scenario.workload_spec
    K1 = mean_locks_per_txn(spec)
    kwargs = dict(
        K1=K1,
        D_eff=effective_size(spec),
        step_time=mean_step_time(spec),
        A=scenario.analysis.A,
        processing_time=nominal_processing_time(spec),
    )
    if scenario.mode.kind == "closed":
        return analytic.predict(mpl=scenario.mode.mpl, **kwargs)
    return analytic.predict(arrival_rate=scenario.mode.arrival_rate, **kwargs)


def predict_per_dbr(
    scenario: Scenario, prediction: Optional[analytic.ContentionPrediction]
) -> Optional[analytic.HdamConflict]:
    """Per-DBR conflict probabilities, or None for an open system without a prediction.

    Raises:
        DomainError: If the regions make the formula undefined.
        ModelRangeError: If some p_c exceeds 1.
    """
    spec = scenario.workload_spec
    times = class_processing_times(spec)
    if scenario.mode.kind == "closed":
        # The other M - 1 txns, split by residence share f_i R_i / sum f_j R_j.
        residence = sum(c.frequency * r for c, r in zip(spec.classes, times))
        rates = [
            (scenario.mode.mpl - 1) * c.frequency * r / residence for c, r in zip(spec.classes, times)
        ]
        response_times = [1.0] * len(spec.classes)
    else:
        if prediction is None:
            return None
        rates = [scenario.mode.arrival_rate * c.frequency for c in spec.classes]
        stretch = prediction.R / nominal_processing_time(spec)
        response_times = [r * stretch for r in times]
    return analytic.hdam_conflict_probability(to_hdam(spec, rates), response_times)


def _per_dbr_rows(scenario: Scenario, prediction: Optional[analytic.ContentionPrediction]) -> List[Row]:
    spec = scenario.workload_spec
    try:
        hdam = predict_per_dbr(scenario, prediction)
    except DomainError as e:
        return [("per-DBR p_c", f"n/a ({e})")]
    if hdam is None:
        return []
    rows = []
    for dbr, p_c, s, size in zip(spec.dbrs, hdam.p_c, hdam.shared_fractions, hdam.effective_sizes):
        rows.append((f"p_c[{dbr.id}]", f"{_num(p_c)} (s={s:.4g}, D_eff={size:.6g})"))
    return rows


def _qn_rows(scenario: Scenario) -> List[Row]:
    options = scenario.analysis
    if not options.qn_demands:
        return []
    qn = analytic.QnSystem(demands=options.qn_demands)
    unit = options.time_unit_seconds
    rows: List[Row] = []
    ajb = analytic.balanced_closed_throughput(float("inf"), len(qn.demands), max(qn.demands))
    rows.append(("asymptotic job bound", f"{_num(ajb)} txn/unit ({ajb / unit:.4g} TPS)"))
    rate = options.arrival_rate
    if rate is None and scenario.mode.kind == "open":
        rate = scenario.mode.arrival_rate
    if scenario.mode.kind == "closed":
        throughput = analytic.balanced_closed_throughput(
            scenario.mode.mpl, len(qn.demands), max(qn.demands)
        )
        rows.append((f"QN throughput T({scenario.mode.mpl})", f"{_num(throughput)} txn/unit"))
    if not rate:
        return rows
    scaled = rate * options.rate_scale
    for label, lam in (("", rate), (" at scaled rate", scaled)):
        utilization = max(analytic.device_utilizations(qn, lam))
        rows.append((f"device utilization{label}", _num(utilization)))
        rows.append((f"QN response time{label}", _time(analytic.open_qn_response(qn, lam), unit)))
        bound = analytic.min_mpl(len(qn.demands), utilization)
        rows.append((f"MPL bound{label}", f"{_num(bound.bound)} (minimum MPL {bound.minimum})"))
    factor = (scaled * analytic.open_qn_response(qn, scaled)) / (rate * analytic.open_qn_response(qn, rate))
    rows.append(("p_c extrapolation factor", f"{factor:.4f}"))
    return rows


def analyze_scenario(scenario: Scenario) -> Tuple[List[Row], Optional[ContentionLabError]]:
    """Evaluates every analytic model that applies to the scenario.

    Returns the report rows and the model-range error that stopped the
    contention model, if any; the rows still carry every diagnostic computed.
    """
    spec = scenario.workload_spec
    K1 = mean_locks_per_txn(spec)
    D_eff = effective_size(spec)
    r = nominal_processing_time(spec)
    unit = scenario.analysis.time_unit_seconds
    rows: List[Row] = [
        ("mode", scenario.mode.label()),
        ("K1 (mean lock requests)", _num(K1)),
        ("effective database size", _num(D_eff)),
        ("processing time r", _time(r, unit)),
        ("alpha*", f"{analytic.ALPHA_STAR:.4f}"),
        ("beta*", f"{analytic.BETA_STAR:.4f}"),
    ]
    error: Optional[ContentionLabError] = None
    prediction = None
    try:
        prediction = predict_scenario(scenario)
    except (ThrashingError, ModelRangeError, SaturationError) as e:
        error = e
        rows.append(("contention model", f"FAILED: {e}"))
        if isinstance(e, ThrashingError):
            rows.append(("offending value", _num(e.value)))
            rows.append(("limit", _num(e.limit)))
    if prediction is not None:
        rows += [
            ("p_c", _num(prediction.p_c) + (" (strained)" if prediction.strained else "")),
            ("p_deadlock (2-way, modified)", _num(prediction.p_deadlock_2way)),
            ("p_deadlock (2-way, original)", _num(3.0 * prediction.p_deadlock_2way)),
            ("alpha", _num(prediction.alpha)),
            ("thrashing margin alpha* - alpha", _num(prediction.thrashing_margin)),
            ("beta", _num(prediction.beta)),
            ("rho (locks held by blocked txns)", _num(prediction.rho_b)),
            ("conflict ratio", _num(prediction.conflict_ratio)),
            ("response time R", _time(prediction.R, unit)),
            ("throughput", f"{_num(prediction.throughput)} txn/unit"),
            ("load index k^2 M / D", f"{_num(prediction.load_index)} (critical {analytic.THRASHING_LOAD_INDEX})"),
        ]
        if prediction.alpha > 0:
            try:
                unequal = analytic.solve_unequal_step(prediction.alpha, A=scenario.analysis.A)
                rows.append(("beta (unequal steps)", _num(unequal.beta)))
            except NoConvergenceError as e:
                rows.append(("beta (unequal steps)", f"no fixed point ({e})"))
    try:
        rows += _per_dbr_rows(scenario, prediction)
    except ModelRangeError as e:
        rows.append(("per-DBR p_c", f"FAILED: {e}"))
    try:
        rows += _qn_rows(scenario)
    except SaturationError as e:
        rows.append(("queueing network", f"FAILED: {e}"))
        error = error or e
    return rows, error


def cmd_analyze(args) -> int:
    scenario = load_scenario(args.scenario)
    rows, error = analyze_scenario(scenario)
    print(format_table(("quantity", "value"), rows))
    if args.out:
        out = _output_dir(args, scenario)
        (out / "analysis.json").write_text(json.dumps(dict(rows), indent=2) + "\n", encoding="utf-8")
    if error is not None:
        logger.error(f"Analytic model out of range: {error}")
        return EXIT_MODEL_RANGE
    return EXIT_OK


# ------------------------------------------------------------------ simulate


def write_replications(path: Path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.to_csv_row())


def simulate(scenario: Scenario, max_workers: Optional[int] = None) -> Tuple[list, AggregateReport]:
    """Runs every replication of `scenario` and aggregates them."""
    with ReplicationRunner(max_workers) as runner:
        reports = runner.run(scenario)
    return reports, aggregate_reports(reports)


def cmd_simulate(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    reports, aggregate = simulate(scenario, args.threads)
    out = _output_dir(args, scenario)
    write_replications(out / "replications.csv", reports)
    (out / "aggregate.json").write_text(aggregate.to_json() + "\n", encoding="utf-8")
    print(
        format_table(
            ("quantity", "mean", "half-width"),
            [(n, _num(aggregate.means[n]), _num(aggregate.half_widths[n])) for n in AGGREGATE_FIELDS],
        )
    )
    logger.info(f"Wrote {len(reports)} replication(s) to {out}")
    return EXIT_OK


# --------------------------------------------------------------------- sweep

SWEEP_COLUMNS = ("axis", "value", "replications") + tuple(
    c for name in AGGREGATE_FIELDS for c in (name, f"{name}_hw")
)


def scenario_at(scenario: Scenario, axis: str, value) -> Scenario:
    """The scenario with one parameter replaced by a sweep value.

    `k` sets the lock count of every (class, DBR) pair that already has
    requests; `D` sets the size of every DBR.
    """
    if axis == "lambda":
        return scenario.model_copy(update={"mode": RunMode.open(float(value))})
    if axis == "M":
        return scenario.model_copy(update={"mode": RunMode.closed(int(value))})
    if axis == "policy":
        return scenario.model_copy(update={"policy": PolicySpec(name=str(value))})
    workload = scenario.workload_spec.model_copy(deep=True)
    if axis == "k":
        for cls in workload.classes:
            cls.lock_counts = {d: int(value) for d, k in cls.lock_counts.items() if k > 0}
    elif axis == "D":
        for dbr in workload.dbrs:
            dbr.D = int(value)
    else:
        raise UsageError(f"unknown sweep axis '{axis}'; choose from {', '.join(SWEEP_AXES)}")
    ensure_valid(workload)
    return scenario.model_copy(update={"workload": workload})


def sweep(
    scenario: Scenario, axis: str, values: Sequence, max_workers: Optional[int] = None
) -> List[Tuple[object, AggregateReport]]:
    """Aggregated replications at every value of `axis`, in the given order."""
    points = []
    with ReplicationRunner(max_workers) as runner:
        for value in values:
            aggregate = aggregate_reports(runner.run(scenario_at(scenario, axis, value)))
            points.append((value, aggregate))
            logger.info(
                f"[Sweep {axis}={value}] throughput={aggregate.means['throughput']:.4g} "
                f"beta={aggregate.means['beta']:.4g}"
            )
    return points


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise UsageError(f"unknown sweep axis '{args.axis}'; choose from {', '.join(SWEEP_AXES)}")
    values = parse_values(args.values or "")
    if not values:
        raise UsageError("--values needs at least one value")
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    points = sweep(scenario, args.axis, values, args.threads)
    rows = []
    for value, aggregate in points:
        row = [args.axis, value, aggregate.replications]
        for name in AGGREGATE_FIELDS:
            row += [aggregate.means[name], aggregate.half_widths[name]]
        rows.append(row)
    out = _output_dir(args, scenario)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        writer.writerows(rows)
    print(
        format_table(
            (args.axis, "throughput", "R", "p_c", "beta", "CR"),
            [
                (value, *(_num(aggregate.means[n]) for n in SWEEP_TABLE_FIELDS))
                for value, aggregate in points
            ],
        )
    )
    return EXIT_OK


# ------------------------------------------------------------------ validate


def validation_rows(
    prediction: analytic.ContentionPrediction,
    aggregate: AggregateReport,
    tolerances: Optional[dict] = None,
    per_dbr: Sequence[Tuple[str, float]] = (),
) -> List[Tuple[str, float, float, float, float, bool]]:
    """(quantity, analytic, simulated, CI half-width, |rel err|, passed) per quantity.

    `per_dbr` adds a p_c row for each (DBR id, predicted p_c), held to the p_c tolerance.
    """
    tolerances = tolerances or SIM_CONFIG["validation_tolerances"]
    pairs = {
        "p_c": (prediction.p_c, "p_c"),
        "beta": (prediction.beta, "beta"),
        "R": (prediction.R, "response_time"),
        "CR": (prediction.conflict_ratio, "CR"),
    }
    rows = []
    for quantity in VALIDATED_QUANTITIES:
        predicted, field_name = pairs[quantity]
        measured = aggregate.means[field_name]
        error = relative_error(measured, predicted)
        rows.append(
            (
                quantity,
                predicted,
                measured,
                aggregate.half_widths[field_name],
                error,
                error <= tolerances[quantity],
            )
        )
    for dbr_id, predicted in per_dbr:
        measured = aggregate.per_dbr_p_c[dbr_id]
        error = relative_error(measured, predicted)
        rows.append(
            (
                f"p_c[{dbr_id}]",
                predicted,
                measured,
                aggregate.per_dbr_half_widths.get(dbr_id, 0.0),
                error,
                error <= tolerances["p_c"],
            )
        )
    return rows


def _per_dbr_predictions(
    scenario: Scenario, prediction: analytic.ContentionPrediction
) -> List[Tuple[str, float]]:
    try:
        hdam = predict_per_dbr(scenario, prediction)
    except (DomainError, ModelRangeError) as e:
        logger.warning(f"Skipping per-DBR validation: {e}")
        return []
    return [(dbr.id, p_c) for dbr, p_c in zip(scenario.workload_spec.dbrs, hdam.p_c)]


def cmd_validate(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    prediction = predict_scenario(scenario)
    _, aggregate = simulate(scenario, args.threads)
    rows = validation_rows(prediction, aggregate, per_dbr=_per_dbr_predictions(scenario, prediction))
    headers = ("quantity", "analytic", "simulated", "CI", "|rel err|", "verdict")
    table = [
        (q, _num(a), _num(s), _num(hw), f"{e:.4f}", "PASS" if ok else "FAIL")
        for q, a, s, hw, e, ok in rows
    ]
    print(format_table(headers, table))
    if args.out:
        out = _output_dir(args, scenario)
        with open(out / "validation.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(headers)
            writer.writerows(table)
    if all(ok for *_, ok in rows):
        return EXIT_OK
    logger.error("Analytic and simulated results disagree beyond tolerance")
    return EXIT_VALIDATION


# --------------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    if args.model == "cubic":
        if args.alpha is None:
            raise UsageError("solve cubic needs --alpha")
        print(f"{analytic.solve_cubic_beta(args.alpha):.6f}")
    elif args.model == "quadratic":
        if args.a is None or args.r is None:
            raise UsageError("solve quadratic needs --a and --r")
        print(f"{analytic.response_time_quadratic(args.r, args.a):.6f}")
    else:
        alpha_star, beta_star = analytic.critical_point()
        print(f"{alpha_star:.6f} {beta_star:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="contention-lab",
        description="Analytic lock-contention models and a txn-processing simulator.",
    )
    parser.add_argument("--log-level", help="Overrides the configured logging level.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def scenario_command(name: str, help_text: str, replicated: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="Scenario JSON file.")
        p.add_argument("--out", help="Output directory (default: the scenario's output.dir).")
        if replicated:
            p.add_argument("--seed", type=int, help="Base seed.")
            p.add_argument("--replications", type=int, help="Number of replications.")
            p.add_argument("--threads", type=int, help="Replication threads.")
        return p

    scenario_command("analyze", "Evaluate the analytic models.", replicated=False).set_defaults(
        handler=cmd_analyze
    )
    scenario_command("simulate", "Run simulation replications.").set_defaults(handler=cmd_simulate)
    sweep = scenario_command("sweep", "Sweep one parameter.")
    sweep.add_argument("--axis", required=True, help=f"One of {', '.join(SWEEP_AXES)}.")
    sweep.add_argument("--values", required=True, help="Comma-separated values.")
    sweep.set_defaults(handler=cmd_sweep)
    scenario_command("validate", "Compare analytic and simulated results.").set_defaults(
        handler=cmd_validate
    )

    solve = sub.add_parser("solve", help="Run a root solver.")
    solve.add_argument("model", choices=("cubic", "quadratic", "critical"))
    solve.add_argument("--alpha", type=float)
    solve.add_argument("--a", type=float)
    solve.add_argument("--r", type=float)
    solve.set_defaults(handler=cmd_solve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (
        get_logging_level_from_string(args.log_level)
        if args.log_level
        else SIM_CONFIG["logging_level_int"]
    )
    logging.basicConfig(level=level, format="%(asctime)s-%(levelname)s-%(message)s")
    try:
        return args.handler(args)
    except (ThrashingError, ModelRangeError, SaturationError, NoConvergenceError) as e:
        logger.error(f"Model range: {e}")
        return EXIT_MODEL_RANGE
    except WorkloadValidationError as e:
        for problem in e.errors:
            logger.error(f"Workload: {problem}")
        return EXIT_INPUT
    except ValidationError as e:
        logger.error(f"Schema error: {e}")
        return EXIT_INPUT
    except (ScenarioError, UsageError, DomainError) as e:
        logger.error(str(e))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
