import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from bsbu.errors import SolverFailureError, ValidationError

logger = logging.getLogger(__name__)

# The qp module solves the inequality constrained least squares problem
#
#    min (1/M) |Phi beta - U|^2   subject to   A beta >= 0
#
# with a primal active-set method. The constraint rows used by the sieve
# (first and second differences) are linearly independent and admit the
# constant vector as a feasible start, so the working set always has full
# row rank.

KKT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class QpResult(object):
    beta: np.ndarray
    working_set: tuple
    multipliers: np.ndarray
    iterations: int
    kkt_residual: float


def _reduce(design, responses):
    """Replaces (Phi, U) by (R, Q^T U) so every iterate works on J+1 rows"""
    q, r = np.linalg.qr(design, mode='reduced')
    return r, q.T @ responses


def _subspace(constraints, working):
    if not working:
        return np.eye(constraints.shape[1])
    return scipy.linalg.null_space(constraints[working])


def _gradient(r, z, beta, m):
    return (2.0 / m) * (r.T @ (r @ beta - z))


def _multipliers(constraints, working, grad):
    if not working:
        return np.zeros(0)
    lam, _, _, _ = np.linalg.lstsq(constraints[working].T, grad, rcond=None)
    return lam


def kkt_residual(design, responses, constraints, beta, working=(),
                 multipliers=None):
    """Largest violation among the KKT conditions of the problem above.

    Multipliers of rows outside the working set are taken as zero. When no
    multipliers are passed they are recovered by least squares.

    Returns:
      max of stationarity, primal infeasibility, dual infeasibility and
      complementarity violations
    """
    design = np.asarray(design, dtype=float)
    responses = np.asarray(responses, dtype=float)
    m = design.shape[0]
    grad = (2.0 / m) * (design.T @ (design @ beta - responses))
    working = list(working)
    if multipliers is None:
        multipliers = _multipliers(constraints, working, grad)
    lam = np.zeros(constraints.shape[0])
    lam[working] = multipliers
    slack = constraints @ beta if constraints.shape[0] else np.zeros(0)
    parts = [np.max(np.abs(grad - constraints.T @ lam), initial=0.0),
             max(0.0, -np.min(slack, initial=0.0)),
             max(0.0, -np.min(lam, initial=0.0)),
             np.max(np.abs(lam * slack), initial=0.0)]
    return float(max(parts))


def solve_constrained_ls(design, responses, constraints, max_iter=None,
                         tol=KKT_TOLERANCE):
    """Active-set solve of the constrained least squares problem.

    Args:
      design Phi, float array (M, J+1)
      responses U, float array (M,)
      constraints A, float array (b, J+1), rows linearly independent
      max_iter iteration cap, 100 (J+1) by default
      tol feasibility and multiplier tolerance

    Returns:
      a QpResult

    Raises:
      SolverFailureError when the cap is reached before the KKT conditions
      hold, or when the final iterate violates them by more than tol
    """
    design = np.asarray(design, dtype=float)
    responses = np.asarray(responses, dtype=float)
    constraints = np.atleast_2d(np.asarray(constraints, dtype=float))
    m, n = design.shape
    if constraints.shape[1] != n:
        raise ValidationError('constraint matrix has %d columns, design has %d'
                              % (constraints.shape[1], n))
    if max_iter is None:
        max_iter = 100 * n

    r, z = _reduce(design, responses)
    beta = np.full(n, float(np.mean(responses)))
    working = []
    lam = np.zeros(0)
    # set once beta minimizes the objective on the current working face
    stationary = False
    for it in range(1, max_iter + 1):
        if not stationary:
            basis = _subspace(constraints, working)
            if basis.shape[1] == 0:
                step = np.zeros(n)
            else:
                y, _, _, _ = np.linalg.lstsq(r @ basis, z - r @ beta,
                                             rcond=None)
                step = basis @ y
            stationary = bool(np.linalg.norm(step) <=
                              1e-14 * (1.0 + np.linalg.norm(beta)))

        if stationary:
            lam = _multipliers(constraints, working,
                               _gradient(r, z, beta, m))
            if not working or np.min(lam) >= -tol:
                residual = kkt_residual(design, responses, constraints, beta,
                                        working, lam)
                if residual > tol:
                    raise SolverFailureError(
                        'active set stopped with the kkt conditions violated',
                        residual=residual, iterations=it)
                logger.debug('qp converged after %d iterations, |W|=%d',
                             it, len(working))
                return QpResult(beta, tuple(working), lam, it, residual)
            dropped = working.pop(int(np.argmin(lam)))
            logger.debug('qp iteration %d drops constraint %d', it, dropped)
            stationary = False
            continue

        slack = constraints @ beta
        rate = constraints @ step
        alpha, blocking = 1.0, None
        for i in range(constraints.shape[0]):
            if i in working or rate[i] >= -1e-14:
                continue
            ratio = max(slack[i], 0.0) / -rate[i]
            if ratio < alpha:
                alpha, blocking = ratio, i
        beta = beta + alpha * step
        if blocking is not None:
            working.append(blocking)
        stationary = blocking is None

    residual = kkt_residual(design, responses, constraints, beta, working)
    raise SolverFailureError('active-set iteration cap %d reached' % max_iter,
                             residual=residual, iterations=max_iter)
