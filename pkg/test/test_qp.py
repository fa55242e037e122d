from unittest import mock

import numpy as np
from scipy.optimize import lsq_linear

from bsbu import qp
from bsbu.errors import SolverFailureError, ValidationError
from bsbu.sieve import BernsteinBasis, shape_constraint_matrix

from .common.bsbu_test_case import BsbuTestCase


def _monotone_reference(design, responses):
    """Bounded least squares on the increments of a monotone coefficient
    vector, beta = L theta with theta_1.. >= 0"""
    n = design.shape[1]
    lower = np.tril(np.ones((n, n)))
    lb = np.r_[-np.inf, np.zeros(n - 1)]
    ub = np.full(n, np.inf)
    res = lsq_linear(design @ lower, responses, bounds=(lb, ub),
                     method='bvls', tol=1e-12)
    return lower @ res.x


class ConstrainedLeastSquaresTest(BsbuTestCase):

    def test_against_bounded_least_squares(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            m = int(rng.integers(30, 300))
            J = int(rng.integers(1, 10))
            z = rng.uniform(0.0, 1.0, m)
            truth = rng.choice([np.sqrt, np.square, lambda v: 0.0 * v,
                                lambda v: np.minimum(v, 0.5)])
            u = truth(z) + rng.normal(0.0, rng.uniform(0.01, 0.5), m)
            design = BernsteinBasis(J).design_matrix(z)
            a = shape_constraint_matrix('monotone', J)
            res = qp.solve_constrained_ls(design, u, a)
            reference = _monotone_reference(design, u)

            ssr = np.sum((design @ res.beta - u) ** 2)
            ssr_ref = np.sum((design @ reference - u) ** 2)
            self.assertAlmostEqual(ssr_ref, ssr, delta=1e-8 * max(1.0, ssr_ref))
            self.assertGreaterEqual(np.min(np.diff(res.beta)), -1e-8)
            self.assertLessEqual(res.kkt_residual, 1e-8)
            self.assertLessEqual(
                qp.kkt_residual(design, u, a, res.beta, res.working_set,
                                res.multipliers), 1e-8)
            self.assertTrue(np.all(res.multipliers >= -1e-8))

    def test_without_constraints(self):
        rng = np.random.default_rng(22)
        design = rng.normal(size=(50, 4))
        u = rng.normal(size=50)
        res = qp.solve_constrained_ls(design, u, np.zeros((0, 4)))
        expected = np.linalg.lstsq(design, u, rcond=None)[0]
        self.assertArrayAlmostEqual(expected, res.beta, atol=1e-10)
        self.assertEqual((), res.working_set)

    def test_iteration_cap(self):
        design = np.eye(2)
        u = np.array([1.0, 0.0])
        a = shape_constraint_matrix('monotone', 1)
        with self.assertRaises(SolverFailureError) as ctx:
            qp.solve_constrained_ls(design, u, a, max_iter=1)
        self.assertEqual(1, ctx.exception.iterations)
        res = qp.solve_constrained_ls(design, u, a)
        self.assertArrayAlmostEqual([0.5, 0.5], res.beta)
        self.assertEqual((0,), res.working_set)
        self.assertAlmostEqual(0.5, res.multipliers[0], places=12)

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            qp.solve_constrained_ls(np.eye(3), np.ones(3), np.ones((1, 2)))

    def test_kkt_residual_detects_infeasibility(self):
        design = np.eye(2)
        u = np.array([1.0, 0.0])
        a = shape_constraint_matrix('monotone', 1)
        # the unconstrained optimum violates the ordering
        self.assertAlmostEqual(1.0, qp.kkt_residual(design, u, a, u),
                               places=12)

    def test_violated_kkt_conditions_raise(self):
        design = np.eye(2)
        u = np.array([1.0, 0.0])
        a = shape_constraint_matrix('monotone', 1)
        with mock.patch('bsbu.qp.kkt_residual', return_value=1e-3):
            with self.assertRaises(SolverFailureError) as ctx:
                qp.solve_constrained_ls(design, u, a)
        self.assertEqual(1e-3, ctx.exception.residual)
        self.assertGreaterEqual(ctx.exception.iterations, 1)
