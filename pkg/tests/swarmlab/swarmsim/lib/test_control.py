import numpy as np
import unittest

from swarmlab.swarmsim.lib.graph import WeightedGraph, LeaderSet
from swarmlab.swarmsim.lib.numerics import euler_step_swarm
from swarmlab.swarmsim.lib.control import ControlGains, ControlError, \
    FormationSpec, default_control_gains, control_law, control_all, saturate, \
    closed_loop_matrix, check_controller_stability
from swarmlab.swarmsim.lib.estimation import slowest_decay_rate
from tests.swarmlab.swarmsim.lib.test_graph import random_connected_graph


SQUARE = np.array([
    [1.0, 1.0, 1.0], [-1.0, 1.0, 1.0], [-1.0, -1.0, 1.0], [1.0, -1.0, 1.0]
])


class TestControlGains(unittest.TestCase):

    def test_default_gains(self):
        star = WeightedGraph.star(4)
        gains = default_control_gains(star, LeaderSet([1]))
        # node 1 is a leaf of the star, N_i = 1
        self.assertAlmostEqual(gains.k_gp(1), 4.5)

        g = WeightedGraph.ring(4)
        gains = default_control_gains(g, LeaderSet([0]))
        self.assertAlmostEqual(gains.k_gp(0), 3.0)
        self.assertAlmostEqual(gains.k_gv(0), 4.0 / 3)
        self.assertAlmostEqual(gains.k_rp(0, 1), 3.0)
        self.assertAlmostEqual(gains.k_rv(0, 1), 4.0 / 3)

        complete = WeightedGraph.complete(4)
        gains = default_control_gains(complete, LeaderSet([0]))
        self.assertAlmostEqual(gains.k_rp(2, 3), 3.0)
        self.assertAlmostEqual(gains.k_rv(2, 3), 4.0 / 3)
        self.assertEqual(gains.k_gp(2), 0.0)
        self.assertEqual(gains.k_gv(2), 0.0)

    def test_ratio(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            g = random_connected_graph(rng, 6)
            gains = default_control_gains(g, LeaderSet([0, 3]))
            for (i, j) in gains.relative_gains:
                self.assertAlmostEqual(gains.k_rp(i, j) / gains.k_rv(i, j), 2.25, places=10)
            for i in gains.global_gains:
                self.assertAlmostEqual(gains.k_gp(i) / gains.k_gv(i), 2.25, places=10)

    def test_errors(self):
        with self.assertRaises(ControlError):
            default_control_gains(WeightedGraph(3, [(0, 1, 1.0)]), LeaderSet([0]))
        with self.assertRaises(ControlError):
            default_control_gains(WeightedGraph.ring(3), LeaderSet([]))
        with self.assertRaises(ControlError):
            ControlGains(0.0, {}, {})


class TestControlLaw(unittest.TestCase):

    def test_equilibrium(self):
        g = WeightedGraph.ring(4)
        gains = default_control_gains(g, LeaderSet([0]))
        spec = FormationSpec.static(SQUARE)
        u = control_all(SQUARE, np.zeros((4, 3)), spec, gains)
        np.testing.assert_array_equal(u, np.zeros((4, 3)))

    def test_single_leader(self):
        g = WeightedGraph(1, [])
        gains = default_control_gains(g, LeaderSet([0]))
        spec = FormationSpec.static(np.zeros((1, 3)))
        u = control_law(0, np.array([1.0, 0, 0]), np.zeros(3), {}, spec, gains)
        np.testing.assert_allclose(u, [-9.0, 0, 0])

    def test_follower_translation_invariance(self):
        rng = np.random.default_rng(4)
        g = WeightedGraph.ring(4)
        gains = default_control_gains(g, LeaderSet([0]))
        p = rng.normal(size=(4, 3))
        v = rng.normal(size=(4, 3))
        spec = FormationSpec(SQUARE, rng.normal(size=(4, 3)))
        offset = rng.normal(size=3)
        u = control_all(p, v, spec, gains)
        moved = control_all(
            p + offset, v, FormationSpec(SQUARE + offset, spec.v_star), gains)
        np.testing.assert_allclose(moved, u, atol=1e-12)

        # only the leader sees a shift of the swarm against a fixed spec
        shifted = control_all(p + offset, v, spec, gains)
        np.testing.assert_allclose(shifted[1:], u[1:], atol=1e-12)
        np.testing.assert_allclose(shifted[0], u[0] - 3.0 * offset, atol=1e-12)

    def test_missing_neighbor(self):
        gains = default_control_gains(WeightedGraph.path(2), LeaderSet([0]))
        spec = FormationSpec.static(np.zeros((2, 3)))
        with self.assertRaises(ControlError):
            control_law(1, np.zeros(3), np.zeros(3), {}, spec, gains)

    def test_saturate(self):
        u = np.array([[6.0, -7.0, 1.0]])
        np.testing.assert_array_equal(saturate(u, 5.0), [[5.0, -5.0, 1.0]])
        with self.assertRaises(ControlError):
            saturate(u, 0.0)


class TestControllerStability(unittest.TestCase):

    def test_two_node_example(self):
        g = WeightedGraph.path(2)
        gains = ControlGains.uniform(g, LeaderSet([0]), leader_gain=1.0)
        result = check_controller_stability(g, LeaderSet([0]), gains)
        np.testing.assert_allclose(result.matrix, [[2, -1], [-1, 1]])
        self.assertTrue(result.stable)

    def test_no_leaders(self):
        g = WeightedGraph.ring(4)
        gains = ControlGains.uniform(g, LeaderSet([]))
        result = check_controller_stability(g, LeaderSet([]), gains)
        self.assertLessEqual(abs(result.min_eigenvalue), 1e-12)
        self.assertFalse(result.stable)

    def test_all_leaders(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            g = random_connected_graph(rng, 5)
            everyone = LeaderSet(range(5))
            gains = ControlGains.uniform(g, everyone, leader_gain=0.7)
            result = check_controller_stability(g, everyone, gains)
            self.assertGreaterEqual(result.min_eigenvalue, 0.7 - 1e-10)

    def test_hurwitz(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            g = random_connected_graph(rng, n)
            leaders = LeaderSet([int(rng.integers(0, n))])
            gains = default_control_gains(g, leaders)
            self.assertTrue(check_controller_stability(g, leaders, gains).stable)
            self.assertGreater(slowest_decay_rate(closed_loop_matrix(gains, n)), 0.0)


class TestClosedLoop(unittest.TestCase):

    def test_true_state_convergence(self):
        g = WeightedGraph.ring(4)
        gains = default_control_gains(g, LeaderSet([0]))
        rate = slowest_decay_rate(closed_loop_matrix(gains, 4))
        self.assertAlmostEqual(rate, 0.175, delta=0.005)

        spec = FormationSpec.static(SQUARE)
        p = SQUARE + np.array([0.2, -0.2, 0.1])
        v = np.zeros((4, 3))
        dt = 0.005
        # 60 s is ten time constants of the slowest mode
        for _ in range(int(60.0 / dt)):
            u = saturate(control_all(p, v, spec, gains))
            p, v = euler_step_swarm(p, v, u, dt)
        self.assertLessEqual(np.max(np.abs(p - SQUARE)), 1e-3)
        self.assertLessEqual(np.max(np.abs(v)), 1e-3)


if __name__ == '__main__':
    unittest.main()
