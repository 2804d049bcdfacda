import os
import numpy as np
import unittest

from swarmlab.swarmsim.lib.trajopt.trajectory import RingPose, TrajectoryError, \
    initial_solution
from swarmlab.swarmsim.lib.trajopt.distributed import AlgParams, Event, \
    EventKind, RunResult
from swarmlab.swarmsim.lib.trajopt.comparison import ComparisonReport, \
    compare_runs, pool_runs, random_crossing_scenario
from tests.swarmlab.swarmsim.lib.trajopt import test_constraints


SLOW = os.environ.get('SWARMSIM_SLOW_TESTS', '') not in ('', '0')

RING = RingPose.from_normal((0.0, 0.0, 1.5), (0.0, 1.0, 0.0))


class TestRandomScenario(unittest.TestCase):

    def test_sides_and_spacing(self):
        rng = np.random.default_rng(1)
        bc = random_crossing_scenario(12, rng, RING, K=30, h=0.2, min_spacing=0.6)
        self.assertEqual(bc.n_agents, 12)
        self.assertEqual(bc.K, 30)
        start = RING.local(bc.p0)
        goal = RING.local(bc.pf)
        self.assertTrue(np.all(start[:, 0] >= 1.0))
        self.assertTrue(np.all(goal[:, 0] <= -1.0))
        np.testing.assert_array_equal(bc.v0, 0.0)
        np.testing.assert_array_equal(bc.vf, 0.0)
        for points in (bc.p0, bc.pf):
            for i in range(12):
                for j in range(i + 1, 12):
                    self.assertGreaterEqual(np.linalg.norm(points[i] - points[j]), 0.6)

    def test_seeded(self):
        a = random_crossing_scenario(5, np.random.default_rng(7), RING)
        b = random_crossing_scenario(5, np.random.default_rng(7), RING)
        np.testing.assert_array_equal(a.p0, b.p0)
        np.testing.assert_array_equal(a.pf, b.pf)

    def test_errors(self):
        rng = np.random.default_rng(2)
        with self.assertRaises(TrajectoryError):
            random_crossing_scenario(0, rng, RING)
        with self.assertRaises(TrajectoryError):
            random_crossing_scenario(4, rng, RING, min_spacing=50.0, max_tries=100)


class TestPoolRuns(unittest.TestCase):

    def setUp(self):
        bc = test_constraints.crossing_bc()
        self.plans = [initial_solution(bc, i, test_constraints.RING) for i in range(2)]

    def run_with(self, algorithm, events):
        return RunResult(algorithm, self.plans, self.plans, events)

    def test_in_flight_rows(self):
        replanned = self.run_with('alg1', [
            Event(2, 0, EventKind.reopt, 20, 0.4, partners=1),
            Event(2, 1, EventKind.reopt, 10, 0.2, partners=1, repetition=1),
        ])
        quiet = self.run_with('alg1', [])
        row = pool_runs(2, 'alg1', [replanned, quiet])
        self.assertEqual(row.repetitions, 2)
        self.assertEqual(row.optimizations, 2)
        self.assertEqual(row.avg_constraints_per_agent, 15.0)
        self.assertEqual(row.avg_partners_per_agent, 1.0)
        # 0.6 s over two rounds of two agents, the quiet run is left out
        self.assertAlmostEqual(row.avg_solve_time_per_agent, 0.15)
        self.assertEqual(row.min_distance, replanned.min_distance())
        self.assertEqual(row.convergence_failures, 0)

    def test_before_takeoff_rows(self):
        first = self.run_with('baseline', [
            Event(0, 0, EventKind.reopt, 24, 0.3, partners=1),
            Event(0, 1, EventKind.reopt, 24, 0.3, partners=1),
            Event(0, 0, EventKind.reopt, 24, 0.2, partners=1, repetition=1),
        ])
        second = self.run_with('baseline', [
            Event(0, 0, EventKind.reopt, 24, 0.1, partners=1),
            Event(0, 1, EventKind.reopt, 24, 0.1, partners=1),
        ])
        row = pool_runs(2, 'baseline', [first, second])
        self.assertEqual(row.avg_partners_per_agent, 1.0)
        # per run totals over N: 0.8 / 2 and 0.2 / 2
        self.assertAlmostEqual(row.avg_solve_time_per_agent, (0.4 + 0.1) / 2)


class TestCompareRuns(unittest.TestCase):

    def test_small_comparison(self):
        params = AlgParams(M1=5)
        counts = []
        report = compare_runs(
            [2, 3], 1, np.random.default_rng(11), params, RING, K=20, h=0.2,
            progress=lambda n, rep: counts.append((n, rep)))
        self.assertIsInstance(report, ComparisonReport)
        self.assertEqual(counts, [(2, 0), (3, 0)])
        self.assertEqual(len(report.rows), 4)
        for n in (2, 3):
            baseline = report.row(n, 'baseline')
            alg1 = report.row(n, 'alg1')
            self.assertEqual(baseline.avg_partners_per_agent, n - 1)
            self.assertEqual(baseline.avg_constraints_per_agent, (n - 1) * 20)
            self.assertGreaterEqual(baseline.optimizations, n)
            self.assertLessEqual(alg1.avg_partners_per_agent, n - 1)
        self.assertEqual(report.series('baseline', 'avg_partners_per_agent'), [1.0, 2.0])
        rows = report.to_rows(timing=False)
        self.assertNotIn('avg_solve_time_per_agent', rows[0])
        self.assertIn('avg_solve_time_per_agent', report.to_rows()[0])
        with self.assertRaises(KeyError):
            report.row(5, 'alg1')

    def test_reproducible(self):
        params = AlgParams(M1=5)
        a = compare_runs([3], 1, np.random.default_rng(5), params, RING, K=16, h=0.25)
        b = compare_runs([3], 1, np.random.default_rng(5), params, RING, K=16, h=0.25)
        self.assertEqual(a.to_rows(timing=False), b.to_rows(timing=False))

    def test_errors(self):
        rng = np.random.default_rng(0)
        with self.assertRaises(TrajectoryError):
            compare_runs([], 1, rng)
        with self.assertRaises(TrajectoryError):
            compare_runs([2], 0, rng)

    @unittest.skipUnless(SLOW, "set SWARMSIM_SLOW_TESTS=1 for the scaling comparison")
    def test_scaling_trend(self):
        counts = [4, 8, 12, 16, 20]
        report = compare_runs(counts, 20, np.random.default_rng(2020), AlgParams(), RING)
        baseline = report.series('baseline', 'avg_partners_per_agent')
        alg1 = report.series('alg1', 'avg_partners_per_agent')
        self.assertEqual(baseline, [n - 1.0 for n in counts])
        for n, value in zip(counts, alg1):
            if n >= 12:
                self.assertLess(value, n - 1)
        self.assertLess(alg1[-1], 1.15 * alg1[-2])


if __name__ == '__main__':
    unittest.main()
