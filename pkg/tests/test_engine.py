import logging
import unittest

import pytest

from contention_lab.ccpolicy import POLICY_NAMES, MultiphaseOptions, PolicySpec, TxnView
from contention_lab.engine import (
    Access,
    RunMode,
    Simulator,
    choose_victim,
    precedence_graph_is_acyclic,
    run,
)
from contention_lab.loadctl import LoadControlSpec
from contention_lab.utils import mean_and_half_width
from contention_lab.workload import DbrSpec, LockMode, StepTimeDist, TxnClassSpec, WorkloadSpec

DEADLOCK_FREE = (
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


def uniform(k=10, D=1000, step=1.0, kind="fixed", speedup=1.0, shared=0.0):
    return WorkloadSpec(
        dbrs=[DbrSpec(id="db", D=D)],
        classes=[
            TxnClassSpec(
                id="t",
                frequency=1.0,
                lock_counts={"db": k},
                shared_fractions={"db": shared},
                step_time_dist=StepTimeDist(kind=kind, mean=step),
                restart_speedup=speedup,
            )
        ],
    )


# Small and hot: conflicts, blocking chains and deadlocks are frequent.
HOT = uniform(k=6, D=40, kind="exponential", shared=0.25)


def walk(sim, max_events=20000):
    """Steps `sim` to its horizon, checking invariants after every event."""
    for _ in range(max_events):
        if not sim.step():
            return
        problems = sim.check_invariants()
        if problems:
            raise AssertionError(f"t={sim.clock}: {problems}")


class TestContentionFree(unittest.TestCase):

    def test_single_txn_has_exact_timing(self):
        """Test M = 1 commits every k + 1 steps without conflicts."""
        report = run(uniform(), horizon=1000.0, seed=1, mode=RunMode.closed(1))
        self.assertEqual(report.committed, 90)
        self.assertAlmostEqual(report.response_time, 11.0)
        self.assertAlmostEqual(report.throughput, 0.09)
        self.assertEqual(report.p_c, 0.0)
        self.assertEqual(report.beta, 0.0)
        self.assertEqual(report.CR, 1.0)
        self.assertEqual(report.total_aborts, 0)
        self.assertAlmostEqual(report.mean_mpl, 1.0)

    def test_lock_free_workload(self):
        """Test txns without locks never conflict, whatever the MPL."""
        report = run(uniform(k=0), horizon=100.0, seed=2, mode=RunMode.closed(5))
        self.assertEqual(report.committed, 5 * 100)
        self.assertEqual(report.requests, 0)
        self.assertEqual(report.p_c, 0.0)

    def test_empty_open_system(self):
        """Test a zero arrival rate leaves the system idle."""
        report = run(uniform(), horizon=100.0, mode=RunMode.open(0.0))
        self.assertEqual(report.committed, 0)
        self.assertEqual(report.mean_in_system, 0.0)

    def test_restart_speedup_in_second_phase(self):
        """Test the second phase of a multiphase txn runs at the restart speed."""
        sim = Simulator(
            uniform(k=2, speedup=0.5),
            horizon=45.0,
            mode=RunMode.closed(1),
            multiphase=MultiphaseOptions(enabled=True),
        )
        report = sim.run()
        self.assertEqual(report.committed, 10)
        self.assertAlmostEqual(report.response_time, 4.5)

    def test_bad_run_lengths(self):
        """Test the horizon must exceed the warmup."""
        with self.assertRaises(ValueError):
            Simulator(uniform(), horizon=10.0, warmup=10.0)
        with self.assertRaises(ValueError):
            Simulator(uniform(), victim_measure="age")


class TestDeterminism(unittest.TestCase):

    def test_same_seed_same_report(self):
        """Test a run is a pure function of its inputs and seed."""
        first = run(HOT, horizon=300.0, seed=9, mode=RunMode.closed(6))
        second = run(HOT, horizon=300.0, seed=9, mode=RunMode.closed(6))
        self.assertEqual(first.to_json(), second.to_json())

    def test_different_seeds_differ(self):
        """Test seeds actually drive the randomness."""
        first = run(HOT, horizon=300.0, seed=1, mode=RunMode.closed(6))
        second = run(HOT, horizon=300.0, seed=2, mode=RunMode.closed(6))
        self.assertNotEqual(first.to_json(), second.to_json())


class TestInvariants(unittest.TestCase):

    def test_blocking_detects_deadlocks(self):
        """Test general waiting stays consistent and resolves real deadlocks."""
        sim = Simulator(HOT, horizon=400.0, seed=3, mode=RunMode.closed(8))
        walk(sim)
        report = sim.run()
        self.assertGreater(report.deadlocks, 0)
        self.assertEqual(report.watchdog_detections, 0)
        self.assertGreater(report.committed, 0)
        self.assertEqual(report.aborts.get("deadlock", 0), report.deadlocks)

    def test_deadlock_free_policies(self):
        """Test no deadlock-free policy ever trips the watchdog."""
        for name in DEADLOCK_FREE:
            with self.subTest(policy=name):
                sim = Simulator(
                    HOT,
                    policy=PolicySpec(name=name),
                    horizon=300.0,
                    seed=4,
                    mode=RunMode.closed(8),
                )
                walk(sim)
                report = sim.run()
                self.assertEqual(report.deadlocks, 0)
                self.assertEqual(report.watchdog_detections, 0)
                self.assertGreater(report.committed, 0)

    def test_depth_one_policies_keep_chains_short(self):
        """Test wait-depth-limited and symmetric running priority never exceed level one."""
        for name in ("wait_depth_limited", "symmetric_rp"):
            with self.subTest(policy=name):
                report = run(
                    HOT, policy=PolicySpec(name=name), horizon=400.0, seed=5, mode=RunMode.closed(10)
                )
                self.assertLessEqual(report.max_blocking_level, 1)

    def test_open_system(self):
        """Test Poisson arrivals run cleanly under blocking."""
        sim = Simulator(HOT, horizon=400.0, seed=6, mode=RunMode.open(0.5))
        walk(sim)
        self.assertGreater(sim.run().committed, 0)

    def test_restart_disciplines(self):
        """Test delayed and restart-waiting restarts keep the state consistent."""
        for spec in (
            PolicySpec(name="blocking"),
            PolicySpec(name="blocking", params={"restart": "immediate"}),
            PolicySpec(name="no_waiting", params={"restart_delay": 2.0}),
            PolicySpec(name="cautious_waiting"),
            PolicySpec(name="cautious_waiting", params={"restart": "delayed", "restart_delay": 3.0}),
        ):
            with self.subTest(policy=spec.name, params=spec.params):
                sim = Simulator(HOT, policy=spec, horizon=300.0, seed=7, mode=RunMode.closed(8))
                walk(sim)
                self.assertGreater(sim.run().restarts, 0)

    def test_permanent_aborts(self):
        """Test an attempts limit of zero removes txns at their first conflict."""
        report = run(
            HOT,
            policy=PolicySpec(name="no_waiting", params={"attempts_limit": 0}),
            horizon=300.0,
            seed=8,
            mode=RunMode.closed(8),
        )
        self.assertGreater(report.permanent_aborts, 0)
        self.assertEqual(report.restarts, 0)

    def test_preclaim_never_deadlocks(self):
        """Test atomic preclaiming in the second phase rules out deadlocks."""
        sim = Simulator(
            HOT,
            horizon=300.0,
            seed=10,
            mode=RunMode.closed(8),
            multiphase=MultiphaseOptions(enabled=True, preclaim=True),
        )
        walk(sim)
        report = sim.run()
        self.assertEqual(report.deadlocks, 0)
        self.assertGreater(report.committed, 0)

    def test_load_controllers(self):
        """Test every admission controller keeps the engine consistent."""
        for spec in (
            LoadControlSpec(name="fixed_mpl", params={"M_max": 3}),
            LoadControlSpec(name="conflict_ratio"),
            LoadControlSpec(name="half_and_half"),
            LoadControlSpec(name="feedback_incremental", params={"ceiling": 12}),
            LoadControlSpec(name="feedback_parabola", params={"max_mpl": 12}),
            LoadControlSpec(name="critical_beta"),
        ):
            with self.subTest(controller=spec.name):
                sim = Simulator(
                    HOT,
                    load_control=spec,
                    horizon=300.0,
                    seed=11,
                    mode=RunMode.open(1.0),
                    window_length=5,
                )
                walk(sim)
                report = sim.run()
                self.assertEqual(report.load_control, spec.name)
                self.assertGreater(report.committed, 0)

    def test_fixed_mpl_caps_admissions(self):
        """Test the admitted population never exceeds M_max."""
        sim = Simulator(
            HOT,
            load_control=LoadControlSpec(name="fixed_mpl", params={"M_max": 3}),
            horizon=200.0,
            seed=12,
            mode=RunMode.closed(10),
        )
        while sim.step():
            self.assertLessEqual(sim.mpl, 3)

    def test_half_and_half_cancels_under_overload(self):
        """Test cancellations return txns to the memory queue."""
        sim = Simulator(
            uniform(k=12, D=60),
            load_control=LoadControlSpec(name="half_and_half"),
            horizon=400.0,
            seed=13,
            mode=RunMode.closed(20),
        )
        walk(sim)
        report = sim.run()
        self.assertEqual(report.cancellations, report.aborts.get("cancelled", 0))
        self.assertGreater(report.committed, 0)


class TestSerializability(unittest.TestCase):

    def test_committed_histories_are_serializable(self):
        """Test the precedence graph of committed accesses stays acyclic."""
        for name in ("blocking", "wound_wait", "occ_die", "occ_kill"):
            with self.subTest(policy=name):
                report = run(
                    HOT,
                    policy=PolicySpec(name=name),
                    horizon=300.0,
                    seed=14,
                    mode=RunMode.closed(6),
                    record_history=True,
                )
                self.assertTrue(report.serializable)

    def test_oracle_detects_a_cycle(self):
        """Test a non-serializable history is recognised."""
        history = [
            Access(0, 1, "a", LockMode.X),
            Access(1, 2, "a", LockMode.X),
            Access(2, 2, "b", LockMode.X),
            Access(3, 1, "b", LockMode.X),
        ]
        self.assertFalse(precedence_graph_is_acyclic(history))

    def test_oracle_ignores_read_read(self):
        """Test shared accesses do not order txns."""
        history = [
            Access(0, 1, "a", LockMode.S),
            Access(1, 2, "a", LockMode.S),
            Access(2, 2, "b", LockMode.S),
            Access(3, 1, "b", LockMode.S),
        ]
        self.assertTrue(precedence_graph_is_acyclic(history))

    def test_history_off_by_default(self):
        """Test the oracle only runs when histories are recorded."""
        self.assertIsNone(run(HOT, horizon=50.0, mode=RunMode.closed(2)).serializable)


class TestVictimSelection(unittest.TestCase):

    def test_fewest_locks_then_youngest(self):
        """Test the victim holds the fewest locks, ties going to the youngest."""
        cycle = [
            TxnView(id=1, birth=0.0, locks_held=3, writes_held=0),
            TxnView(id=2, birth=1.0, locks_held=1, writes_held=1),
            TxnView(id=3, birth=2.0, locks_held=1, writes_held=1),
        ]
        self.assertEqual(choose_victim(cycle), 3)
        self.assertEqual(choose_victim(cycle, measure="writes"), 1)
        with self.assertRaises(ValueError):
            choose_victim([])


@pytest.mark.slow
class TestAgainstAnalyticModel(unittest.TestCase):

    def test_throughput_collapses_past_the_peak(self):
        """Test throughput at a heavily overloaded MPL falls below the best moderate one."""
        workload = uniform(k=16)
        moderate = [
            run(workload, horizon=2000.0, warmup=200.0, seed=31, mode=RunMode.closed(m))
            for m in (4, 8, 12)
        ]
        overloaded = run(workload, horizon=2000.0, warmup=200.0, seed=31, mode=RunMode.closed(60))
        peak = max(moderate, key=lambda r: r.throughput)
        self.assertLess(overloaded.throughput, peak.throughput)
        self.assertGreater(overloaded.beta, 0.3)
        self.assertLess(peak.beta, overloaded.beta)

    def test_thrashing_curve_peaks_at_moderate_blocking(self):
        """Test an MPL sweep rises to a peak with beta and rho moderate, then falls."""
        workload = uniform(k=16)
        levels = (2, 4, 6, 8, 10, 12, 14, 16, 20, 24, 32, 48)
        curve = []
        for m in levels:
            reports = [
                run(workload, horizon=6000.0, warmup=600.0, seed=seed, mode=RunMode.closed(m))
                for seed in (51, 52)
            ]
            for r in reports:
                self.assertLessEqual(abs(r.rho - (1 - 1 / r.CR)), 1e-12)
            curve.append(
                (
                    m,
                    sum(r.throughput for r in reports) / 2,
                    sum(r.beta for r in reports) / 2,
                    sum(r.rho for r in reports) / 2,
                )
            )
        peak = max(range(len(curve)), key=lambda i: curve[i][1])
        self.assertTrue(0 < peak < len(curve) - 1, curve)
        self.assertLess(curve[0][1], curve[peak][1])
        self.assertLess(curve[-1][1], curve[peak][1])
        _, best, beta, rho = curve[peak]
        self.assertTrue(0.2 <= beta <= 0.4, curve)
        self.assertTrue(0.15 <= rho <= 0.35, curve)
        crowded = min(curve, key=lambda point: abs(point[2] - 0.45))
        self.assertLess(crowded[1], best, curve)

    def test_two_way_deadlocks_fall_with_database_size(self):
        """Test doubling D cuts the two-way deadlock rate by roughly four."""
        rates = []
        for D in (300, 600):
            report = run(
                uniform(k=8, D=D), horizon=30000.0, warmup=1000.0, seed=41, mode=RunMode.closed(6)
            )
            rates.append(report.deadlocks_2way / report.committed)
        self.assertGreater(rates[1], 0.0)
        self.assertTrue(2.5 <= rates[0] / rates[1] <= 6.0, rates)

@pytest.mark.slow
class TestOracleAcrossPolicies(unittest.TestCase):

    def test_small_runs_commit_serializable_histories(self):
        """Test fifty small hot runs per policy all pass the serializability oracle."""
        for name in POLICY_NAMES:
            for seed in range(1, 51):
                with self.subTest(policy=name, seed=seed):
                    report = run(
                        HOT,
                        policy=PolicySpec(name=name),
                        horizon=60.0,
                        seed=seed,
                        mode=RunMode.closed(6),
                        record_history=True,
                    )
                    self.assertTrue(report.serializable)


@pytest.mark.slow
class TestPolicyComparison(unittest.TestCase):

    def throughputs(self, workload, policy, mode, seeds, **params):
        return [
            run(
                workload,
                policy=PolicySpec(name=policy, params=params),
                horizon=3000.0,
                warmup=300.0,
                seed=seed,
                mode=mode,
            ).throughput
            for seed in seeds
        ]

    def test_restart_oriented_policies_near_the_thrashing_point(self):
        """Test wait-depth-limited and running-priority match or beat blocking near the peak."""
        workload = uniform(k=12, D=500)
        seeds = range(61, 71)
        baseline, baseline_hw = mean_and_half_width(
            self.throughputs(workload, "blocking", RunMode.closed(6), seeds)
        )
        for name in ("wait_depth_limited", "running_priority"):
            with self.subTest(policy=name):
                mean, hw = mean_and_half_width(self.throughputs(workload, name, RunMode.closed(6), seeds))
                logging.getLogger(__name__).info(
                    f"{name}: throughput {mean:.4f} +/- {hw:.4f} against blocking "
                    f"{baseline:.4f} +/- {baseline_hw:.4f}"
                )
                self.assertGreaterEqual(mean + hw, baseline - baseline_hw)


@pytest.mark.slow
class TestLoadControlUnderOverload(unittest.TestCase):

    def throughput(self, spec, seed):
        return run(
            uniform(k=8, D=250),
            load_control=spec,
            horizon=3000.0,
            warmup=300.0,
            seed=seed,
            mode=RunMode.open(1.0),
        ).throughput

    def test_adaptive_controllers_approach_the_best_fixed_mpl(self):
        """Test half-and-half and conflict-ratio keep 80% of the best fixed-MPL throughput."""
        seeds = (81, 82)
        best = max(
            sum(self.throughput(LoadControlSpec(name="fixed_mpl", params={"M_max": m}), s) for s in seeds)
            / len(seeds)
            for m in (2, 4, 6, 8, 10, 12, 16)
        )
        for name in ("half_and_half", "conflict_ratio"):
            with self.subTest(controller=name):
                adaptive = sum(self.throughput(LoadControlSpec(name=name), s) for s in seeds) / len(seeds)
                self.assertGreaterEqual(adaptive, 0.8 * best, (adaptive, best))



if __name__ == "__main__":
    unittest.main()
