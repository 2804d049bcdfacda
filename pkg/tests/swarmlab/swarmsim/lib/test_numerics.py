import itertools
import numpy as np
import unittest

from swarmlab.swarmsim.lib.graph import WeightedGraph, laplacian
from swarmlab.swarmsim.lib.numerics import AgentState, NumericsError, \
    QpProblem, QpStatus, solve_qp, project_onto, sym_eigenvalues, \
    min_real_eigenvalue, euler_step, forward_difference_matrix


def enumerate_active_sets(p: QpProblem):
    '''
    Brute force oracle: solve the KKT system for every subset of inequality
    rows and keep the feasible point with non-negative multipliers and the
    lowest objective.
    '''
    best = None
    m_in = p.A_in.shape[0]
    for size in range(m_in + 1):
        for subset in itertools.combinations(range(m_in), size):
            rows = list(subset)
            m = np.vstack([p.A_eq, p.A_in[rows]])
            b = np.concatenate([p.b_eq, p.b_in[rows]])
            n = p.n
            kkt = np.block([
                [p.Q, m.T],
                [m, np.zeros((m.shape[0], m.shape[0]))]
            ])
            rhs = np.concatenate([-p.q, b])
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            x = sol[:n]
            mu = sol[n + p.A_eq.shape[0]:]
            if np.max(np.abs(kkt @ sol - rhs)) > 1e-8:
                continue
            eq, ineq = p.violation(x)
            if eq > 1e-8 or ineq > 1e-8 or np.min(mu, initial=0.0) < -1e-8:
                continue
            value = p.objective(x)
            if best is None or value < best[1]:
                best = (x, value)
    return best


def random_qp(rng, n, m_eq, m_in):
    g = rng.normal(size=(n, n))
    q_mat = g.T @ g + 0.1 * np.eye(n)
    x_feasible = rng.normal(size=n)
    a_eq = rng.normal(size=(m_eq, n))
    a_in = rng.normal(size=(m_in, n))
    return QpProblem(
        Q=q_mat,
        q=rng.normal(size=n) * 3,
        A_eq=a_eq,
        b_eq=a_eq @ x_feasible,
        A_in=a_in,
        b_in=a_in @ x_feasible + rng.uniform(0.0, 1.0, size=m_in))


class TestQpSolver(unittest.TestCase):

    def test_halfspace_projection(self):
        p = QpProblem(
            Q=2 * np.eye(2), q=np.array([-4.0, 0.0]),
            A_in=[[1.0, 0.0]], b_in=[1.0])
        sol = solve_qp(p)
        self.assertEqual(sol.status, QpStatus.optimal)
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-8)

    def test_equality_only(self):
        p = QpProblem(
            Q=2 * np.eye(2), q=np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[2.0])
        sol = solve_qp(p)
        self.assertTrue(sol.ok)
        np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-10)

    def test_inconsistent_equalities(self):
        p = QpProblem(
            Q=np.eye(1), q=np.zeros(1), A_eq=[[1.0], [1.0]], b_eq=[0.0, 1.0])
        self.assertEqual(solve_qp(p).status, QpStatus.infeasible)

    def test_infeasible_inequalities(self):
        p = QpProblem(
            Q=np.eye(1), q=np.zeros(1),
            A_in=[[1.0], [-1.0]], b_in=[0.0, -1.0])
        sol = solve_qp(p, max_iter=2000)
        self.assertEqual(sol.status, QpStatus.infeasible)

    def test_against_active_set_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            m_eq = int(rng.integers(0, min(3, n - 1) + 1))
            m_in = int(rng.integers(1, 7))
            p = random_qp(rng, n, m_eq, m_in)
            expected_x, expected_value = enumerate_active_sets(p)
            sol = solve_qp(p)
            self.assertEqual(sol.status, QpStatus.optimal)
            self.assertAlmostEqual(p.objective(sol.x), expected_value, delta=1e-6)
            np.testing.assert_allclose(sol.x, expected_x, atol=1e-5)

    def test_six_variable_example(self):
        rng = np.random.default_rng(11)
        p = random_qp(rng, 6, 3, 4)
        expected_x, _ = enumerate_active_sets(p)
        sol = solve_qp(p)
        np.testing.assert_allclose(sol.x, expected_x, atol=1e-6)
        eq, ineq = p.violation(sol.x)
        self.assertLessEqual(eq, 1e-7)
        self.assertLessEqual(ineq, 1e-7)

    def test_dimension_checks(self):
        with self.assertRaises(NumericsError):
            QpProblem(Q=np.eye(2), q=np.zeros(3))
        with self.assertRaises(NumericsError):
            QpProblem(Q=[[1.0, 1.0], [0.0, 1.0]], q=np.zeros(2))
        with self.assertRaises(NumericsError):
            QpProblem(Q=np.eye(2), q=np.zeros(2), A_in=[[1.0, 0.0]], b_in=[1.0, 2.0])


class TestProjection(unittest.TestCase):

    def test_fixed_point(self):
        p = QpProblem(Q=np.eye(2), q=np.zeros(2), A_in=[[1.0, 1.0]], b_in=[3.0])
        sol = project_onto(p, np.array([0.5, 0.25]))
        np.testing.assert_allclose(sol.x, [0.5, 0.25], atol=1e-8)

    def test_halfspace(self):
        p = QpProblem(Q=np.eye(2), q=np.zeros(2), A_in=[[-1.0, 0.0]], b_in=[-1.0])
        sol = project_onto(p, np.zeros(2))
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-8)

    def test_box_clamp(self):
        p = QpProblem(
            Q=np.eye(2), q=np.zeros(2),
            A_in=np.vstack([np.eye(2), -np.eye(2)]),
            b_in=[1.0, 1.0, 0.0, 0.0])
        sol = project_onto(p, np.array([2.0, -1.0]))
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-8)

    def test_idempotent_and_nonexpansive(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a_in = rng.normal(size=(5, 3))
            p = QpProblem(
                Q=np.eye(3), q=np.zeros(3),
                A_in=a_in, b_in=rng.uniform(0.5, 1.5, size=5))
            x = rng.normal(size=3) * 4
            y = rng.normal(size=3) * 4
            px = project_onto(p, x).x
            py = project_onto(p, y).x
            ppx = project_onto(p, px).x
            self.assertLessEqual(np.linalg.norm(ppx - px), 2e-8)
            self.assertLessEqual(
                np.linalg.norm(px - py), np.linalg.norm(x - y) + 1e-8)


class TestEigenvalues(unittest.TestCase):

    def test_examples(self):
        np.testing.assert_allclose(sym_eigenvalues(np.eye(3)), [1, 1, 1])
        np.testing.assert_allclose(
            sym_eigenvalues([[2.0, -1.0], [-1.0, 1.0]]),
            [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2])
        np.testing.assert_allclose(
            sym_eigenvalues(laplacian(WeightedGraph.path(2))), [0, 2],
            atol=1e-12)

    def test_asymmetric(self):
        with self.assertRaises(NumericsError):
            sym_eigenvalues([[1.0, 2.0], [0.0, 1.0]])

    def test_leader_diagonal_positive(self):
        lap = laplacian(WeightedGraph.ring(5))
        lap[2, 2] += 0.5
        self.assertGreater(sym_eigenvalues(lap)[0], 0.0)

    def test_min_real_eigenvalue_asymmetric(self):
        m = np.array([[1.0, -0.5], [-1.0, 1.0]])
        expected = 1.0 - np.sqrt(0.5)
        self.assertAlmostEqual(min_real_eigenvalue(m), expected, places=12)


class TestIntegration(unittest.TestCase):

    def test_euler_step(self):
        s = euler_step(AgentState([0, 0, 0], [1, 0, 0]), np.zeros(3), 0.005)
        np.testing.assert_allclose(s.p, [0.005, 0, 0])
        np.testing.assert_allclose(s.v, [1, 0, 0])

        s = euler_step(AgentState([0, 0, 0], [0, 0, 0]), [2, 0, 0], 0.1)
        np.testing.assert_allclose(s.p, [0, 0, 0])
        np.testing.assert_allclose(s.v, [0.2, 0, 0])

        with self.assertRaises(NumericsError):
            euler_step(AgentState([0, 0, 0], [0, 0, 0]), np.zeros(3), 0.0)

    def test_forward_difference(self):
        d = forward_difference_matrix(3, 0.15, 1)
        np.testing.assert_allclose(d @ np.array([0.0, 0.15, 0.45]), [1.0, 2.0])

        d = forward_difference_matrix(5, 0.15, 3)
        self.assertEqual(d.shape, (12, 15))
        np.testing.assert_allclose(d @ np.tile([1.0, 2.0, 3.0], 5), 0.0, atol=1e-12)

        ramp = np.repeat(np.arange(5) * 0.3, 3)
        np.testing.assert_allclose(d @ ramp, 2.0, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
