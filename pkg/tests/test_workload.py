import json
import os
import tempfile
import unittest

import numpy as np
import pytest
from pydantic import ValidationError

from contention_lab.analytic import AccessSkew
from contention_lab.errors import WorkloadValidationError
from contention_lab.workload import (
    DbrSpec,
    LockMode,
    PlanSampler,
    StepTimeDist,
    TxnClassSpec,
    WorkloadSpec,
    effective_size,
    ensure_valid,
    mean_locks_per_txn,
    mean_step_time,
    nominal_processing_time,
    sample_txn,
    snapshot_conflict_rate,
    to_hdam,
    validate,
)


def uniform(k=10, D=1000, step=1.0):
    return WorkloadSpec(
        dbrs=[DbrSpec(id="db", D=D)],
        classes=[
            TxnClassSpec(
                id="t", frequency=1.0, lock_counts={"db": k}, step_time_dist=StepTimeDist(mean=step)
            )
        ],
    )


def two_region():
    return WorkloadSpec(
        dbrs=[DbrSpec(id="hot", D=100, skew=AccessSkew(b=0.8, c=0.2)), DbrSpec(id="cold", D=900)],
        classes=[
            TxnClassSpec(
                id="writer",
                frequency=0.75,
                lock_counts={"hot": 2, "cold": 2},
                shared_fractions={"hot": 0.5},
            ),
            TxnClassSpec(id="reader", frequency=0.25, lock_counts={"cold": 8}),
        ],
    )


class TestValidation(unittest.TestCase):

    def test_valid_workloads(self):
        """Test well-formed workloads have no validation errors."""
        self.assertEqual(validate(uniform()), [])
        self.assertEqual(validate(two_region()), [])

    def test_frequencies_must_sum_to_one(self):
        """Test class frequencies are checked against 1."""
        spec = two_region()
        spec.classes[0].frequency = 0.5
        errors = validate(spec)
        self.assertTrue(any("sum to 1" in e for e in errors))

    def test_more_locks_than_objects(self):
        """Test k_{i,j} > D_j is rejected."""
        errors = validate(uniform(k=11, D=10))
        self.assertTrue(any("distinct objects" in e for e in errors))

    def test_every_problem_is_reported(self):
        """Test validation collects all problems instead of stopping at the first."""
        spec = WorkloadSpec(
            dbrs=[DbrSpec(id="db", D=0)],
            classes=[
                TxnClassSpec(
                    id="t",
                    frequency=1.0,
                    lock_counts={"nowhere": 1},
                    restart_speedup=0.0,
                )
            ],
        )
        errors = validate(spec)
        self.assertGreaterEqual(len(errors), 3)
        with self.assertRaises(WorkloadValidationError) as ctx:
            ensure_valid(spec)
        self.assertEqual(ctx.exception.errors, errors)

    def test_hot_set_covering_everything(self):
        """Test a hot set spanning the whole DBR is rejected unless b = 1."""
        spec = WorkloadSpec(
            dbrs=[DbrSpec(id="db", D=2, skew=AccessSkew(b=0.5, c=0.9))],
            classes=[TxnClassSpec(id="t", frequency=1.0, lock_counts={"db": 1})],
        )
        self.assertTrue(any("hot set covers" in e for e in validate(spec)))

    def test_from_file_rejects_unknown_fields(self):
        """Test workload documents are validated strictly."""
        document = uniform().model_dump()
        document["extra"] = 1
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "w.json")
            with open(path, "w") as f:
                json.dump(document, f)
            with self.assertRaises(ValidationError):
                WorkloadSpec.from_file(path)


class TestSummaries(unittest.TestCase):

    def test_single_class_summaries(self):
        """Test K1, step time and r of a single class."""
        spec = uniform(k=10, step=2.0)
        self.assertEqual(mean_locks_per_txn(spec), 10)
        self.assertEqual(mean_step_time(spec), 2.0)
        self.assertEqual(nominal_processing_time(spec), 22.0)
        self.assertEqual(effective_size(spec), 1000.0)

    def test_multiclass_summaries(self):
        """Test frequency-weighted summaries over two classes."""
        spec = two_region()
        self.assertAlmostEqual(mean_locks_per_txn(spec), 0.75 * 4 + 0.25 * 8)
        self.assertAlmostEqual(nominal_processing_time(spec), 0.75 * 5 + 0.25 * 9)
        shared = 0.75 * 2 * 0.5 / 5.0
        self.assertAlmostEqual(effective_size(spec), (100 / 3.25 + 900) / (1 - shared**2))

    def test_to_hdam(self):
        """Test the workload maps onto per-DBR HDAM vectors."""
        hdam = to_hdam(two_region(), [3.0, 1.0])
        self.assertEqual(hdam.classes[0].lock_counts, [2.0, 2.0])
        self.assertEqual(hdam.classes[1].lock_counts, [0.0, 8.0])
        self.assertEqual(hdam.classes[0].held_locks, [1.0, 1.0])
        self.assertEqual(hdam.classes[0].shared_fractions, [0.5, 0.0])
        self.assertAlmostEqual(hdam.dbr_skew_factors[0], 1 / 3.25)
        self.assertEqual(hdam.dbr_skew_factors[1], 1.0)


class TestSampling(unittest.TestCase):

    def test_plan_shape(self):
        """Test a plan has k lock steps plus a final step, on distinct objects."""
        plan = sample_txn(uniform(k=10, D=20), np.random.default_rng(1))
        self.assertEqual(len(plan.steps), 11)
        self.assertIsNone(plan.steps[-1].lock)
        requests = plan.lock_requests
        self.assertEqual(plan.k, 10)
        self.assertEqual(len({(r.dbr, r.obj) for r in requests}), 10)
        self.assertTrue(all(0 <= r.obj < 20 for r in requests))
        self.assertTrue(all(r.mode is LockMode.X for r in requests))

    def test_full_region_is_drawn_exhaustively(self):
        """Test k = D takes every object exactly once."""
        plan = sample_txn(uniform(k=5, D=5), np.random.default_rng(3))
        self.assertEqual(sorted(r.obj for r in plan.lock_requests), [0, 1, 2, 3, 4])

    def test_zero_lock_class(self):
        """Test a class without locks has a single step."""
        plan = sample_txn(uniform(k=0), np.random.default_rng(0))
        self.assertEqual(plan.k, 0)
        self.assertEqual(len(plan.steps), 1)

    def test_sampling_is_reproducible(self):
        """Test equal seeds give equal plans."""
        sampler = PlanSampler(two_region())
        first = [sampler.sample(np.random.default_rng(42)) for _ in range(3)]
        second = [sampler.sample(np.random.default_rng(42)) for _ in range(3)]
        self.assertEqual([p.lock_requests for p in first], [p.lock_requests for p in second])

    def test_multiclass_requests_stay_in_their_regions(self):
        """Test readers only touch the cold region and writers make four requests."""
        sampler = PlanSampler(two_region())
        rng = np.random.default_rng(7)
        for _ in range(50):
            plan = sampler.sample(rng)
            dbrs = [r.dbr for r in plan.lock_requests]
            if plan.class_id == "reader":
                self.assertEqual(dbrs, [1] * 8)
                self.assertTrue(all(r.mode is LockMode.X for r in plan.lock_requests))
            else:
                self.assertEqual(len(dbrs), 4)

    def test_hot_set_receives_its_share(self):
        """Test about b of the skewed region's requests hit the hot set."""
        spec = WorkloadSpec(
            dbrs=[DbrSpec(id="db", D=1000, skew=AccessSkew(b=0.8, c=0.2))],
            classes=[TxnClassSpec(id="t", frequency=1.0, lock_counts={"db": 1})],
        )
        _, objs, _ = PlanSampler(spec).draw_requests(np.random.default_rng(5), 0, 20000)
        hot_share = float(np.mean(objs < 200))
        self.assertAlmostEqual(hot_share, 0.8, delta=0.02)

    def test_snapshot_conflict_rate(self):
        """Test the sampler's conflict rate against held/D for uniform X access."""
        rate = snapshot_conflict_rate(uniform(k=1, D=1000), 5, 20000, np.random.default_rng(11))
        self.assertAlmostEqual(rate, 5 / 1000, delta=0.0025)


@pytest.mark.slow
class TestEffectiveSizeLaws(unittest.TestCase):

    def test_skewed_region_matches_smaller_uniform_one(self):
        """Test b=0.8, c=0.2 on D conflicts like uniform access on 0.3077 D."""
        skewed = WorkloadSpec(
            dbrs=[DbrSpec(id="db", D=1000, skew=AccessSkew(b=0.8, c=0.2))],
            classes=[TxnClassSpec(id="t", frequency=1.0, lock_counts={"db": 1})],
        )
        measured = snapshot_conflict_rate(skewed, 20, 100000, np.random.default_rng(21))
        reference = snapshot_conflict_rate(uniform(k=1, D=308), 20, 100000, np.random.default_rng(22))
        self.assertAlmostEqual(measured / reference, 1.0, delta=0.1)

    def test_shared_mix_matches_larger_exclusive_region(self):
        """Test s=0.5 on D conflicts like X-only access on 1.333 D."""
        mixed = WorkloadSpec(
            dbrs=[DbrSpec(id="db", D=1000)],
            classes=[
                TxnClassSpec(
                    id="t", frequency=1.0, lock_counts={"db": 1}, shared_fractions={"db": 0.5}
                )
            ],
        )
        measured = snapshot_conflict_rate(mixed, 20, 400000, np.random.default_rng(23))
        reference = snapshot_conflict_rate(uniform(k=1, D=1333), 20, 400000, np.random.default_rng(24))
        self.assertAlmostEqual(measured / reference, 1.0, delta=0.1)


if __name__ == "__main__":
    unittest.main()
