import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from bsbu import qp
from bsbu.errors import DomainRangeError, ValidationError

logger = logging.getLogger(__name__)

# The sieve module regresses responses on a univariate regressor over the
# span of a Bernstein polynomial basis, optionally restricting the
# coefficients so the fitted function keeps a shape (monotone, convex...).
# Because B_{j,J}(u) is nonnegative and the basis is a partition of unity,
# ordering of the coefficients carries over to the fitted function.


class ShapeConstraint(enum.Enum):
    NONE = 'none'
    MONOTONE = 'monotone'
    CONVEX = 'convex'
    CONCAVE = 'concave'
    CONVEX_MONOTONE = 'convex-monotone'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace('_', '-')
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValidationError('unknown shape constraint %r, expected one of %s'
                              % (name, [k.value for k in cls]))

    @property
    def min_order(self):
        """Smallest basis order J the constraint is defined for"""
        if self is ShapeConstraint.NONE:
            return 0
        if self is ShapeConstraint.MONOTONE:
            return 1
        return 2


class SelectionCriterion(enum.Enum):
    MALLOWS_CP = 'mallows-cp'
    GCV = 'gcv'
    LOOCV = 'loocv'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace('_', '-')
        for crit in cls:
            if crit.value == key:
                return crit
        raise ValidationError('unknown selection criterion %r, expected one '
                              'of %s' % (name, [c.value for c in cls]))


@dataclass(frozen=True)
class BernsteinBasis(object):
    """Bernstein polynomials of degree J on [lo, hi].

    B_j(z) = C(J, j) u^j (1 - u)^(J - j) with u = (z - lo) / (hi - lo).
    """
    order: int
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 0:
            raise ValidationError('basis order must be a non-negative '
                                  'integer, got %s' % self.order)
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)
                and self.lo < self.hi):
            raise ValidationError('invalid basis domain [%s, %s]' %
                                  (self.lo, self.hi))
        object.__setattr__(self, 'order', int(self.order))
        object.__setattr__(self, 'lo', float(self.lo))
        object.__setattr__(self, 'hi', float(self.hi))

    @property
    def size(self):
        return self.order + 1

    def rescale(self, z):
        z = np.asarray(z, dtype=float)
        outside = ~((z >= self.lo) & (z <= self.hi))
        if np.any(outside):
            bad = np.atleast_1d(z)[np.atleast_1d(outside)]
            raise DomainRangeError(
                '%d regressor value(s) outside the basis domain [%s, %s], '
                'e.g. %s' % (bad.size, self.lo, self.hi, bad[:5]))
        return np.clip((z - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def design_matrix(self, z):
        """Basis values for every regressor value.

        Returns:
          float array of shape (len(z), J+1)
        """
        u = self.rescale(np.atleast_1d(z))[:, None]
        j = np.arange(self.size)
        coef = scipy.special.comb(self.order, j, exact=False)
        return coef * np.power(u, j) * np.power(1.0 - u, self.order - j)


def bernstein_basis_eval(basis, z):
    """All J+1 basis values at a single regressor value"""
    return basis.design_matrix(np.array([float(z)]))[0]


def shape_constraint_matrix(kind, J):
    """Matrix A_J with A_J beta >= 0 encoding the shape constraint.

    Args:
      kind a ShapeConstraint
      J the basis order

    Returns:
      float array with J+1 columns; first-difference rows (-1, 1) for
      monotone, second-difference rows (1, -2, 1) for convex, their negation
      for concave, and for convex-monotone the first monotone row stacked
      on the convex rows; no rows for NONE
    """
    kind = ShapeConstraint.parse(kind)
    if int(J) != J or J < kind.min_order:
        raise ValidationError('shape constraint %s needs J >= %d, got %s' %
                              (kind.value, kind.min_order, J))
    J = int(J)
    eye = np.eye(J + 1)
    if kind is ShapeConstraint.NONE:
        return np.zeros((0, J + 1))
    if kind is ShapeConstraint.MONOTONE:
        return np.diff(eye, n=1, axis=0)
    convex = np.diff(eye, n=2, axis=0)
    if kind is ShapeConstraint.CONVEX:
        return convex
    if kind is ShapeConstraint.CONCAVE:
        return 0.0 - convex
    return np.vstack([np.diff(eye, n=1, axis=0)[:1], convex])


@dataclass(frozen=True)
class RegressionSample(object):
    """Pairs (U, Z) of responses and regressors"""
    responses: np.ndarray
    regressors: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.responses, dtype=float).ravel()
        z = np.asarray(self.regressors, dtype=float).ravel()
        if u.shape != z.shape:
            raise ValidationError('%d responses but %d regressors' %
                                  (u.size, z.size))
        if u.size == 0:
            raise ValidationError('empty regression sample')
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
            raise ValidationError('regression sample holds non-finite values')
        object.__setattr__(self, 'responses', u)
        object.__setattr__(self, 'regressors', z)

    def __len__(self):
        return self.responses.size

    def drop(self, m):
        keep = np.arange(len(self)) != m
        return RegressionSample(self.responses[keep], self.regressors[keep])


@dataclass(frozen=True)
class FitDiagnostics(object):
    ssr: float
    kkt_residual: float
    n: int
    rank_deficient: bool = False
    degenerate: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class FittedSieve(object):
    """Regression estimate g(z) = beta^T phi(z)"""
    basis: BernsteinBasis
    coefficients: np.ndarray
    constraint: ShapeConstraint
    diagnostics: FitDiagnostics = field(compare=False)

    def predict(self, z):
        return self.basis.design_matrix(z) @ self.coefficients

    @classmethod
    def constant(cls, basis, value, constraint=ShapeConstraint.NONE, n=0):
        return cls(basis, np.full(basis.size, float(value)), constraint,
                   FitDiagnostics(ssr=0.0, kkt_residual=0.0, n=n,
                                  degenerate=True))


def sieve_predict(fit, z):
    return float(fit.predict(np.array([float(z)]))[0])


def fit_sieve(sample, basis, constraint=ShapeConstraint.NONE):
    """Least squares fit of the sample over the (constrained) sieve space.

    With constraint NONE the least-norm least squares solution is returned
    and rank deficiency is flagged. Otherwise the active-set solver finds
    the minimizer subject to A_J beta >= 0.

    Raises:
      DomainRangeError when a regressor lies outside the basis domain
      SolverFailureError when the active-set solver does not converge
    """
    constraint = ShapeConstraint.parse(constraint)
    m = len(sample)
    if m < basis.size:
        logger.warning('fitting %d basis functions to %d points', basis.size, m)
    design = basis.design_matrix(sample.regressors)
    u = sample.responses

    if np.ptp(sample.regressors) == 0.0:
        mean = float(np.mean(u))
        return FittedSieve(basis, np.full(basis.size, mean), constraint,
                           FitDiagnostics(ssr=float(np.sum((u - mean) ** 2)),
                                          kkt_residual=0.0, n=m,
                                          degenerate=True))

    if constraint is ShapeConstraint.NONE:
        beta, _, rank, _ = np.linalg.lstsq(design, u, rcond=None)
        deficient = rank < basis.size
        if deficient:
            logger.debug('rank deficient design: rank %d < %d', rank,
                         basis.size)
        residual = qp.kkt_residual(design, u, np.zeros((0, basis.size)), beta)
        diag = FitDiagnostics(ssr=float(np.sum((u - design @ beta) ** 2)),
                              kkt_residual=residual, n=m,
                              rank_deficient=bool(deficient))
        return FittedSieve(basis, beta, constraint, diag)

    a = shape_constraint_matrix(constraint, basis.order)
    res = qp.solve_constrained_ls(design, u, a)
    diag = FitDiagnostics(ssr=float(np.sum((u - design @ res.beta) ** 2)),
                          kkt_residual=res.kkt_residual, n=m,
                          iterations=res.iterations)
    return FittedSieve(basis, res.beta, constraint, diag)


def mallows_cp(ssr, m, J):
    """SSR/M + 2 sigma^2 J/M with sigma^2 = SSR/M"""
    mse = ssr / m
    return mse + 2.0 * mse * (J / m)


def gcv(ssr, m, J):
    """(SSR/M) / (1 - J/M)^2, undefined (None) when J/M >= 1"""
    if J / m >= 1.0:
        return None
    return (ssr / m) / (1.0 - J / m) ** 2


def _loocv_hat(sample, basis):
    design = basis.design_matrix(sample.regressors)
    beta, _, _, _ = np.linalg.lstsq(design, sample.responses, rcond=None)
    resid = sample.responses - design @ beta
    left, sing, _ = np.linalg.svd(design, full_matrices=False)
    rank = int(np.sum(sing > sing[0] * max(design.shape) *
                      np.finfo(float).eps))
    leverage = np.sum(left[:, :rank] ** 2, axis=1)
    if np.any(leverage >= 1.0 - 1e-10):
        return None
    return float(np.mean((resid / (1.0 - leverage)) ** 2))


def loocv(sample, basis, constraint=ShapeConstraint.NONE):
    """Mean squared leave-one-out prediction error of the sieve fit.

    Unconstrained fits use the hat-matrix identity e_m / (1 - h_mm); other
    fits are recomputed with every point removed in turn.
    """
    constraint = ShapeConstraint.parse(constraint)
    if constraint is ShapeConstraint.NONE:
        value = _loocv_hat(sample, basis)
        if value is not None:
            return value
    m = len(sample)
    errors = np.empty(m)
    for i in range(m):
        fit = fit_sieve(sample.drop(i), basis, constraint)
        errors[i] = sample.responses[i] - sieve_predict(fit,
                                                        sample.regressors[i])
    return float(np.mean(errors ** 2))


def selection_score(sample, J, criterion, constraint=ShapeConstraint.NONE,
                    domain=(0.0, 1.0)):
    """Value of the selection criterion for basis order J, None if undefined"""
    criterion = SelectionCriterion.parse(criterion)
    basis = BernsteinBasis(J, domain[0], domain[1])
    m = len(sample)
    if criterion is SelectionCriterion.LOOCV:
        if m < 2:
            return None
        return loocv(sample, basis, constraint)
    ssr = fit_sieve(sample, basis, constraint).diagnostics.ssr
    if criterion is SelectionCriterion.MALLOWS_CP:
        return mallows_cp(ssr, m, J)
    return gcv(ssr, m, J)


def select_basis_count(sample, candidates, criterion,
                       constraint=ShapeConstraint.NONE, domain=None):
    """Basis order minimizing the selection criterion.

    Args:
      sample a RegressionSample
      candidates iterable of basis orders J
      criterion a SelectionCriterion (or its name)
      constraint the ShapeConstraint every candidate is fitted with
      domain (lo, hi) of the basis, the regressor range [min Z, max Z]
        when omitted

    Returns:
      the selected J; ties within 1e-12 go to the smallest J
    """
    candidates = sorted(set(int(j) for j in candidates))
    if not candidates:
        raise ValidationError('no candidate basis orders')
    constraint = ShapeConstraint.parse(constraint)
    for j in candidates:
        if j < constraint.min_order:
            raise ValidationError('candidate J=%d too small for constraint %s'
                                  % (j, constraint.value))
    if len(candidates) == 1:
        return candidates[0]
    if domain is None:
        lo, hi = float(np.min(sample.regressors)), float(np.max(sample.regressors))
        if lo == hi:
            hi = lo + 1.0
        domain = (lo, hi)

    scores = {}
    for j in candidates:
        score = selection_score(sample, j, criterion, constraint, domain)
        if score is None:
            logger.warning('criterion %s undefined for J=%d with %d points, '
                           'candidate skipped', criterion, j, len(sample))
            continue
        scores[j] = score
    if not scores:
        raise ValidationError('criterion %s is undefined for every candidate '
                              'in %s' % (criterion, candidates))
    best = min(scores.values())
    tol = 1e-12 * max(1.0, abs(best))
    chosen = min(j for j, s in scores.items() if s <= best + tol)
    logger.debug('selected J=%d from scores %s', chosen, scores)
    return chosen
