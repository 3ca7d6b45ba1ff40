import math
import unittest

from contention_lab.analytic import ALPHA_STAR
from contention_lab.errors import ScenarioError
from contention_lab.loadctl import (
    LOAD_CONTROL_NAMES,
    ConflictRatioControl,
    CriticalBetaControl,
    FeedbackIncremental,
    FeedbackParabola,
    FixedMpl,
    HalfAndHalf,
    LoadControlSpec,
    LoadSignal,
    NoLoadControl,
    TxnProgress,
    WindowStats,
    WindowTracker,
    build_load_control,
    conflict_ratio_control,
    critical_beta_control,
    feedback_incremental,
    feedback_parabola,
    fit_parabola,
    fixed_mpl,
    half_and_half,
)


def window(throughput, mean_mpl=5.0):
    return WindowStats(
        duration=10.0, commits=int(throughput * 10), mean_mpl=mean_mpl, beta=0.0, cr=1.0, p_c=0.0
    )


class TestAdmission(unittest.TestCase):

    def test_no_load_control(self):
        """Test everything is admitted, up to an optional ceiling."""
        self.assertTrue(NoLoadControl().admit(LoadSignal(mpl=1000)))
        self.assertFalse(NoLoadControl(max_mpl=5).admit(LoadSignal(mpl=5)))

    def test_fixed_mpl(self):
        """Test admission stops at M_max."""
        controller = FixedMpl(M_max=3)
        self.assertTrue(controller.admit(LoadSignal(mpl=2)))
        self.assertFalse(controller.admit(LoadSignal(mpl=3)))
        self.assertTrue(fixed_mpl(LoadSignal(mpl=99)))
        with self.assertRaises(ScenarioError):
            FixedMpl(M_max=0)

    def test_conflict_ratio_hysteresis(self):
        """Test suspension at CR 1.3 and resumption only below 1.25."""
        controller = ConflictRatioControl()
        self.assertTrue(controller.admit(LoadSignal(mpl=5, cr=1.2)))
        self.assertFalse(controller.admit(LoadSignal(mpl=5, cr=1.3)))
        self.assertFalse(controller.admit(LoadSignal(mpl=5, cr=1.27)))
        self.assertTrue(controller.admit(LoadSignal(mpl=5, cr=1.24)))
        self.assertFalse(conflict_ratio_control(LoadSignal(mpl=5, cr=1.3)))
        self.assertTrue(conflict_ratio_control(LoadSignal(mpl=5, cr=1.29)))

    def test_critical_beta(self):
        """Test beta above 0.3 suspends and alpha above alpha* raises the alarm."""
        controller = CriticalBetaControl(hysteresis=0.0)
        self.assertTrue(controller.admit(LoadSignal(mpl=5, beta=0.3)))
        self.assertFalse(controller.admit(LoadSignal(mpl=5, beta=0.31)))
        self.assertFalse(controller.alarm)
        k1, A = 10.0, 1.0 / 3.0
        p_c = 1.01 * ALPHA_STAR / (k1 * A)
        controller.admit(LoadSignal(mpl=5, beta=0.1, k1=k1, p_c=p_c))
        self.assertTrue(controller.alarm)
        self.assertTrue(critical_beta_control(LoadSignal(mpl=5, beta=0.3)))
        self.assertFalse(critical_beta_control(LoadSignal(mpl=5, beta=0.301)))


class TestHalfAndHalf(unittest.TestCase):

    def test_mature_fraction(self):
        """Test only txns past a quarter of their locks count."""
        signal = LoadSignal(
            mpl=4,
            progress=(
                TxnProgress(1, 0.1, True),
                TxnProgress(2, 0.5, True),
                TxnProgress(3, 0.5, False),
                TxnProgress(4, 0.25, True),
            ),
        )
        controller = HalfAndHalf()
        self.assertAlmostEqual(controller.blocked_mature_fraction(signal), 2 / 3)
        self.assertFalse(controller.admit(signal))
        # The least advanced blocked txn goes first, mature or not.
        self.assertEqual(controller.cancellations(signal), [1])

    def test_no_mature_txns(self):
        """Test an empty mature population counts as not overloaded."""
        signal = LoadSignal(mpl=1, progress=(TxnProgress(1, 0.0, True),))
        admit, cancel = half_and_half(signal)
        self.assertTrue(admit)
        self.assertEqual(cancel, [])

    def test_exactly_half_blocked_is_fine(self):
        """Test the limit is strict."""
        signal = LoadSignal(mpl=2, progress=(TxnProgress(1, 0.5, True), TxnProgress(2, 0.5, False)))
        self.assertEqual(half_and_half(signal), (True, []))


class TestFeedback(unittest.TestCase):

    def test_incremental_follows_throughput(self):
        """Test the bound climbs while throughput rises and backs off otherwise."""
        controller = FeedbackIncremental(floor=1, ceiling=4, initial=2)
        self.assertEqual(controller.update(1.0), 3)
        self.assertEqual(controller.update(2.0), 4)
        self.assertEqual(controller.update(3.0), 4)
        self.assertEqual(controller.update(2.5), 3)
        controller.observe_window(window(1.0))
        self.assertEqual(controller.bound, 2)
        self.assertTrue(controller.admit(LoadSignal(mpl=1)))
        self.assertFalse(controller.admit(LoadSignal(mpl=2)))
        self.assertEqual(feedback_incremental(3, 2.0, 1.0, 1, 10), 4)
        self.assertEqual(feedback_incremental(1, 1.0, 2.0, 1, 10), 1)

    def test_fit_parabola(self):
        """Test the fit recovers a known parabola and its peak."""
        samples = [(n, 10.0 - (n - 3.0) ** 2) for n in (1, 2, 3, 4, 5)]
        a0, a1, a2 = fit_parabola(samples)
        self.assertAlmostEqual(a2, -1.0)
        self.assertAlmostEqual(a1, 6.0)
        self.assertAlmostEqual(a0, 1.0)
        self.assertAlmostEqual(feedback_parabola(samples, 7.0), 3.0)

    def test_parabola_without_peak(self):
        """Test degenerate or convex fits keep the previous bound."""
        self.assertIsNone(fit_parabola([(2, 1.0), (2, 1.5), (3, 2.0)]))
        self.assertEqual(feedback_parabola([(2, 1.0), (3, 2.0)], 4.0), 4.0)
        convex = [(n, float(n * n)) for n in (1, 2, 3)]
        self.assertEqual(feedback_parabola(convex, 4.0), 4.0)

    def test_parabola_controller_holds_without_a_peak(self):
        """Test the bound stays put until a concave fit exists, then moves to its peak."""
        controller = FeedbackParabola(initial=2, max_mpl=8)
        controller.observe_window(window(1.0, mean_mpl=2.0))
        self.assertEqual(controller.bound, 2.0)
        controller.observe_window(window(1.5, mean_mpl=3.0))
        self.assertEqual(controller.bound, 2.0)
        controller.observe_window(window(4.0, mean_mpl=4.0))
        self.assertEqual(controller.bound, 2.0)
        controller.observe_window(window(1.0, mean_mpl=6.0))
        self.assertGreater(controller.bound, 2.0)
        self.assertLessEqual(controller.bound, 8.0)


class TestRegistry(unittest.TestCase):

    def test_every_name_builds(self):
        """Test all registered controllers instantiate with defaults."""
        for name in LOAD_CONTROL_NAMES:
            controller = build_load_control(LoadControlSpec(name=name))
            self.assertEqual(controller.name, name)

    def test_default_hysteresis(self):
        """Test the configured hysteresis reaches threshold controllers."""
        controller = build_load_control(LoadControlSpec(name="conflict_ratio"), hysteresis=0.1)
        self.assertEqual(controller.hysteresis, 0.1)
        explicit = build_load_control(
            LoadControlSpec(name="conflict_ratio", params={"hysteresis": 0.0}), hysteresis=0.1
        )
        self.assertEqual(explicit.hysteresis, 0.0)

    def test_bad_specs(self):
        """Test unknown names and parameters are scenario errors."""
        with self.assertRaises(ScenarioError):
            build_load_control(LoadControlSpec(name="magic"))
        with self.assertRaises(ScenarioError):
            build_load_control(LoadControlSpec(name="fixed_mpl", params={"nope": 1}))


class TestWindowTracker(unittest.TestCase):

    def test_window_statistics(self):
        """Test a full window reports time-weighted beta, CR and p_c."""
        tracker = WindowTracker(length=2)
        tracker.integrate(1.0, mpl=4, blocked=1, held_active=6, held_blocked=2)
        tracker.integrate(1.0, mpl=4, blocked=1, held_active=6, held_blocked=2)
        tracker.requests, tracker.conflicts = 10, 1
        self.assertIsNone(tracker.commit(1.0))
        stats = tracker.commit(2.0)
        self.assertEqual(stats.commits, 2)
        self.assertAlmostEqual(stats.mean_mpl, 4.0)
        self.assertAlmostEqual(stats.beta, 0.25)
        self.assertAlmostEqual(stats.cr, 8 / 6)
        self.assertAlmostEqual(stats.p_c, 0.1)
        self.assertAlmostEqual(stats.throughput, 1.0)
        self.assertEqual(tracker.history, [stats])

    def test_estimates_use_previous_window(self):
        """Test estimates combine the last full window with the current one."""
        tracker = WindowTracker(length=1)
        tracker.integrate(1.0, mpl=2, blocked=1, held_active=1, held_blocked=1)
        tracker.commit(1.0)
        tracker.integrate(1.0, mpl=2, blocked=0, held_active=2, held_blocked=0)
        beta, cr, p_c = tracker.estimates()
        self.assertAlmostEqual(beta, 0.25)
        self.assertAlmostEqual(cr, 4 / 3)
        self.assertEqual(p_c, 0.0)

    def test_estimates_with_no_data(self):
        """Test an empty tracker reports no contention."""
        self.assertEqual(WindowTracker(length=5).estimates(), (0.0, 1.0, 0.0))

    def test_cr_without_active_locks(self):
        """Test locks held only by blocked txns give an infinite CR."""
        tracker = WindowTracker(length=5)
        tracker.integrate(1.0, mpl=1, blocked=1, held_active=0, held_blocked=3)
        self.assertTrue(math.isinf(tracker.estimates()[1]))


if __name__ == "__main__":
    unittest.main()
