import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from bsbu.errors import (BsbuError, ContractViolationError, MissingSliceError,
                         RepeatFailedError, ValidationError)
from bsbu.model import PointBatch
from bsbu.sieve import (BernsteinBasis, RegressionSample, SelectionCriterion,
                        ShapeConstraint, fit_sieve, select_basis_count)
from bsbu.simulate import (CrRule, RandomStream, UniformPostActionSampler,
                           forward_simulate)
from bsbu.truncation import (TruncatedDomain, absorbing_continuations,
                             boundary_values, truncated_step_batch)

logger = logging.getLogger(__name__)

# The solver module runs the backward recursion of least-squares Monte Carlo.
# At every step t the continuation function C_t(k) = E[V_{t+1}(H(k, e))] is
# regressed, one sieve per discrete label of k, on responses built from the
# estimate of V_{t+1}. Backward simulation (bsbu) draws the regression
# sample of post-action values from an artificial law; forward simulation
# (fsbu) gets it from paths driven by randomized controls.

DIAGNOSTIC_COLUMNS = ['step', 'slice', 'n', 'n_absorbed', 'j_used', 'ssr',
                      'kkt_residual', 'rank_deficient', 'degenerate']


class Engine(enum.Enum):
    BSBU = 'bsbu'
    FSBU_CR0 = 'fsbu-cr0'
    FSBU_CR1 = 'fsbu-cr1'
    FSBU_CR2 = 'fsbu-cr2'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for engine in cls:
            if engine.value == key:
                return engine
        raise ValidationError('unknown engine %r, expected one of %s' %
                              (name, [e.value for e in cls]))

    @property
    def rule(self):
        """The control randomization rule of a forward engine, else None"""
        if self is Engine.BSBU:
            return None
        return CrRule[self.value.split('-')[1].upper()]


@dataclass(frozen=True)
class SolverConfig(object):
    """Settings of a solve.

    Args:
      M sample size per step
      J basis order (upper bound when j_candidates are given)
      R upper truncation bound of the account value
      constraint ShapeConstraint of every slice fit
      seed root seed of the random streams
      repeats number of independent repeats of the solve
      j_candidates basis orders to select from per slice, or None
      criterion SelectionCriterion used with j_candidates
      workers processes used for repeats, 1 runs them in this process
    """
    M: int = 100000
    J: int = 20
    R: float = 4.0
    constraint: ShapeConstraint = ShapeConstraint.MONOTONE
    seed: int = 12345
    repeats: int = 1
    j_candidates: tuple = None
    criterion: SelectionCriterion = None
    workers: int = 1

    def __post_init__(self):
        for name in ('M', 'J', 'repeats', 'seed'):
            value = getattr(self, name)
            if int(value) != value:
                raise ValidationError('%s must be an integer, got %s' %
                                      (name, value))
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, 'constraint',
                           ShapeConstraint.parse(self.constraint))
        if self.J < self.constraint.min_order:
            raise ValidationError('J=%d too small for constraint %s' %
                                  (self.J, self.constraint.value))
        if self.M < self.J + 1:
            raise ValidationError('M=%d must be at least J+1=%d' %
                                  (self.M, self.J + 1))
        if not (math.isfinite(self.R) and self.R > 0):
            raise ValidationError('R must be finite and > 0, got %s' % self.R)
        if self.repeats < 1:
            raise ValidationError('repeats must be >= 1, got %d' %
                                  self.repeats)
        if self.seed < 0:
            raise ValidationError('seed must be >= 0, got %d' % self.seed)
        if self.workers is None or int(self.workers) != self.workers or \
                self.workers < 1:
            raise ValidationError('workers must be a positive integer, got %s'
                                  % self.workers)
        object.__setattr__(self, 'workers', int(self.workers))
        if self.j_candidates is not None:
            cands = tuple(sorted(set(int(j) for j in self.j_candidates)))
            if not cands:
                raise ValidationError('j_candidates is empty')
            if self.criterion is None:
                raise ValidationError('j_candidates need a criterion')
            if cands[0] < self.constraint.min_order:
                raise ValidationError('candidate J=%d too small for %s' %
                                      (cands[0], self.constraint.value))
            object.__setattr__(self, 'j_candidates', cands)
        if self.criterion is not None:
            object.__setattr__(self, 'criterion',
                               SelectionCriterion.parse(self.criterion))

    def domain(self):
        return TruncatedDomain.interval(0.0, self.R)


class ValueEstimate(object):
    """Fitted continuation functions, per step and discrete label.

    Args:
      horizon T of the model
      fallback whether a query for a label without a fit is answered by the
        nearest fitted label (forward engines leave labels empty) instead
        of raising MissingSliceError
    """

    def __init__(self, horizon, fallback=False):
        self.horizon = horizon
        self.fallback = fallback
        self.fits = {t: {} for t in range(horizon)}
        self._warned = set()

    def set_fit(self, t, label, fit):
        self.fits[t][tuple(label)] = fit

    def labels(self, t):
        return sorted(self.fits[t])

    def fit(self, t, label):
        label = tuple(label)
        slices = self.fits.get(t)
        if not slices:
            raise MissingSliceError('no continuation fit at step %d' % t)
        if label in slices:
            return slices[label]
        if not self.fallback:
            raise MissingSliceError('no continuation fit for label %s at '
                                    'step %d (fitted: %s)' %
                                    (label, t, sorted(slices)))
        nearest = min(slices, key=lambda other: (
            sum(abs(a - b) for a, b in zip(other, label)), other))
        if (t, label) not in self._warned:
            self._warned.add((t, label))
            logger.warning('step %d has no fit for label %s, using label %s',
                           t, label, nearest)
        return slices[nearest]


def _check_univariate(dom):
    if len(dom.lower) != 1:
        raise ValidationError('sieve regression needs one continuous '
                              'coordinate, domain has %d' % len(dom.lower))


def continuation_values(est, model, dom, t, post):
    """C~_t at a batch of post-action values.

    Absorbing values get their closed form, the rest the sieve fit of
    their label at k1.
    """
    if not np.all(dom.contains(post.continuous)):
        raise ContractViolationError('post-action values outside %s at t=%d'
                                     % (dom, t))
    out = np.empty(len(post))
    absorbing = dom.boundary(post.continuous)
    if np.any(absorbing):
        out[absorbing] = absorbing_continuations(model, dom, t,
                                                 post.take(absorbing))
    inside = ~absorbing
    if np.any(inside):
        labels = post.discrete[inside]
        k1 = post.continuous[inside, 0]
        values = np.empty(k1.size)
        for label in np.unique(labels, axis=0):
            rows = np.all(labels == label, axis=1)
            values[rows] = est.fit(t, tuple(int(v) for v in label)).predict(
                k1[rows])
        out[inside] = values
    return out


def continuation_query(est, model, dom, t, k):
    return float(continuation_values(est, model, dom, t,
                                     PointBatch.from_points([k]))[0])


def bellman_values(est, model, dom, t, states):
    """V~_t at a batch of states of the truncated process.

    Boundary states get the frozen-state value, interior states the best of
    f_t(x, a) + phi C~_t(K(x, a)) over the feasible actions; a later action
    replaces an earlier one only when strictly better.
    """
    if t == model.horizon:
        return model.terminal_reward_batch(states)
    out = np.empty(len(states))
    frozen = dom.boundary(states.continuous)
    if np.any(frozen):
        out[frozen] = boundary_values(model, t, states.take(frozen))
    inside = ~frozen
    if np.any(inside):
        xs = states.take(inside)
        best = None
        for actions in model.action_choices(t, xs):
            post = model.pre_action_batch(t, xs, actions)
            value = model.reward_batch(t, xs, actions) + model.discount * \
                continuation_values(est, model, dom, t, post)
            best = value if best is None else np.where(value > best, value,
                                                       best)
        out[inside] = best
    return out


def bellman_update(est, model, dom, t, x):
    return float(bellman_values(est, model, dom, t,
                                PointBatch.from_points([x]))[0])


@dataclass
class RunResult(object):
    value: float
    diagnostics: pd.DataFrame
    wall_time: float
    estimate: ValueEstimate = field(default=None, repr=False)
    engine: str = Engine.BSBU.value


def _slice_order(config, sample, n):
    """Basis order and constraint used for a slice with n points"""
    constraint = config.constraint
    J = config.J
    if config.j_candidates is not None:
        usable = [j for j in config.j_candidates
                  if constraint.min_order <= j <= max(n - 1, 0)]
        if usable:
            J = select_basis_count(sample, usable, config.criterion,
                                   constraint, domain=(0.0, config.R))
    j_used = min(J, max(n - 1, 0))
    if j_used < J:
        logger.warning('slice with %d points: basis order reduced from %d to '
                       '%d', n, J, j_used)
    if j_used < constraint.min_order:
        logger.warning('basis order %d too small for %s, fitting without '
                       'shape constraint', j_used, constraint.value)
        constraint = ShapeConstraint.NONE
    return j_used, constraint


def _fit_slices(est, t, post, responses, config, dom, absorbed=None):
    """Fits one sieve per discrete label of the post-action sample.

    Returns:
      list of diagnostic records
    """
    records = []
    labels = post.discrete
    for label in np.unique(labels, axis=0):
        label = tuple(int(v) for v in label)
        rows = np.all(labels == np.asarray(label), axis=1)
        n = int(np.sum(rows))
        sample = RegressionSample(responses[rows], post.continuous[rows, 0])
        j_used, constraint = _slice_order(config, sample, n)
        basis = BernsteinBasis(j_used, dom.lower[0], dom.upper[0])
        fit = fit_sieve(sample, basis, constraint)
        est.set_fit(t, label, fit)
        d = fit.diagnostics
        records.append({'step': t,
                        'slice': label[0] if len(label) == 1 else str(label),
                        'n': n,
                        'n_absorbed': (absorbed or {}).get(label, 0),
                        'j_used': j_used,
                        'ssr': d.ssr,
                        'kkt_residual': d.kkt_residual,
                        'rank_deficient': d.rank_deficient,
                        'degenerate': d.degenerate})
    return records


def _borrow_missing_slices(est, model, t):
    """Labels of step t that drew no point take the nearest fitted slice.

    Only happens when M is below the number of labels at t.
    """
    fitted = est.labels(t)
    records = []
    for label in model.post_action_labels(t):
        label = tuple(int(v) for v in label)
        if label in est.fits[t]:
            continue
        nearest = min(fitted, key=lambda other: (
            sum(abs(a - b) for a, b in zip(other, label)), other))
        logger.warning('step %d: no post-action value drawn for label %s, '
                       'using the fit of label %s', t, label, nearest)
        fit = est.fits[t][nearest]
        est.set_fit(t, label, fit)
        records.append({'step': t,
                        'slice': label[0] if len(label) == 1 else str(label),
                        'n': 0, 'n_absorbed': 0,
                        'j_used': fit.basis.order,
                        'ssr': 0.0, 'kkt_residual': 0.0,
                        'rank_deficient': False, 'degenerate': True})
    return records


def _prepare(model, dom, config):
    if dom is None:
        dom = config.domain()
    _check_univariate(dom)
    if dom.lower[0] != 0.0 or dom.upper[0] != config.R:
        raise ValidationError('domain %s does not match R=%s' % (dom,
                                                                config.R))
    return dom


def _initial_value(est, model, dom):
    x0 = PointBatch.from_points([model.initial_state])
    return float(bellman_values(est, model, dom, 0, x0)[0])


def bsbu_solve(model, dom, config, stream=None, sampler=None):
    """Backward simulation and backward updating.

    For t = T-1 .. 0 a fresh sample of post-action values is drawn from the
    artificial law, moved one step through the truncated dynamics, valued
    with the estimate of V_{t+1} and regressed per label. The value at X_0
    is the Bellman update at t = 0.

    Args:
      model a ControlModel with one continuous coordinate
      dom the TruncatedDomain [0, R], built from config when None
      config a SolverConfig
      stream the RandomStream steps derive their streams from
      sampler the artificial law, UniformPostActionSampler by default

    Returns:
      a RunResult
    """
    dom = _prepare(model, dom, config)
    stream = stream or RandomStream(config.seed)
    sampler = sampler or UniformPostActionSampler()
    started = time.perf_counter()
    est = ValueEstimate(model.horizon)
    records = []
    for t in reversed(range(model.horizon)):
        rng = stream.spawn(t).generator()
        post = sampler.sample(model, dom, t, config.M, rng)
        eps = model.innovation_law.sample(config.M, rng)
        following = truncated_step_batch(model, dom, t, post, eps)
        responses = bellman_values(est, model, dom, t + 1, following)
        records.extend(_fit_slices(est, t, post, responses, config, dom))
        records.extend(_borrow_missing_slices(est, model, t))
        logger.debug('bsbu step %d: %d post-action values', t, config.M)
    value = _initial_value(est, model, dom)
    elapsed = time.perf_counter() - started
    logger.info('bsbu solve with M=%d J=%d: V0=%.6f in %.1fs', config.M,
                config.J, value, elapsed)
    return RunResult(value, pd.DataFrame(records, columns=DIAGNOSTIC_COLUMNS),
                     elapsed, est, Engine.BSBU.value)


def fsbu_solve(model, dom, config, rule, stream=None):
    """Forward simulation and backward updating.

    The regression sample at step t is the post-action value of fresh paths
    simulated from X_0 under the control randomization rule. Paths already
    frozen on the boundary at t, or whose post-action value is absorbing,
    have closed-form continuations and are left out of the regression.
    """
    dom = _prepare(model, dom, config)
    rule = CrRule.parse(rule)
    stream = stream or RandomStream(config.seed)
    started = time.perf_counter()
    est = ValueEstimate(model.horizon, fallback=True)
    records = []
    for t in reversed(range(model.horizon)):
        paths = forward_simulate(model, dom, rule, t, config.M,
                                 stream.spawn(t))
        keep = dom.interior(paths.current.continuous) & \
            dom.interior(paths.post.continuous)
        absorbed = {}
        for label in np.unique(paths.post.discrete[~keep], axis=0):
            rows = np.all(paths.post.discrete[~keep] == label, axis=1)
            absorbed[tuple(int(v) for v in label)] = int(np.sum(rows))
        if not np.any(keep):
            logger.warning('step %d: every path is absorbed, no fit', t)
            continue
        following = paths.following.take(keep)
        responses = bellman_values(est, model, dom, t + 1, following)
        records.extend(_fit_slices(est, t, paths.post.take(keep), responses,
                                   config, dom, absorbed))
        logger.debug('fsbu step %d: %d of %d paths regressed', t,
                     int(np.sum(keep)), config.M)
    value = _initial_value(est, model, dom)
    elapsed = time.perf_counter() - started
    logger.info('fsbu-%s solve with M=%d J=%d: V0=%.6f in %.1fs',
                rule.name.lower(), config.M, config.J, value, elapsed)
    return RunResult(value, pd.DataFrame(records, columns=DIAGNOSTIC_COLUMNS),
                     elapsed, est, 'fsbu-%s' % rule.name.lower())


def solve(model, dom, config, engine=Engine.BSBU, stream=None):
    engine = Engine.parse(engine)
    if engine is Engine.BSBU:
        return bsbu_solve(model, dom, config, stream)
    return fsbu_solve(model, dom, config, engine.rule, stream)


@dataclass
class SummaryStats(object):
    """Mean, sd (n-1 divisor), min and max of V0 over repeats"""
    mean: float
    sd: float
    min: float
    max: float
    values: np.ndarray
    results: list = field(default_factory=list, repr=False)

    @classmethod
    def from_results(cls, results):
        values = np.array([r.value for r in results], dtype=float)
        sd = float(np.std(values, ddof=1)) if values.size > 1 else float('nan')
        return cls(float(np.mean(values)), sd, float(np.min(values)),
                   float(np.max(values)), values, list(results))


# first spawn label of repeat streams, distinct from every step index
REPEAT_LABEL = 1 << 32


def repeat_streams(config, share_stream=False):
    root = RandomStream(config.seed)
    if share_stream:
        return [root] * config.repeats
    return [root.spawn(REPEAT_LABEL, i) for i in range(config.repeats)]


def _run_repeat(model, dom, config, engine, stream, repeat):
    try:
        result = solve(model, dom, config, engine, stream)
    except Exception as e:
        raise RepeatFailedError(repeat, e)
    logger.info('repeat %d: V0=%.6f', repeat, result.value)
    return result


def repeat_experiment(model, dom, config, engine=Engine.BSBU,
                      share_stream=False):
    """Runs config.repeats independent solves and summarises V0.

    Each repeat derives its own stream from config.seed, so results do not
    depend on config.workers. With share_stream every repeat uses the same
    stream and returns the same value.

    Raises:
      RepeatFailedError naming the first failing repeat
    """
    engine = Engine.parse(engine)
    streams = repeat_streams(config, share_stream)
    started = time.perf_counter()
    if config.workers == 1 or config.repeats == 1:
        results = [_run_repeat(model, dom, config, engine, s, i)
                   for i, s in enumerate(streams)]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_repeat, model, dom, config, engine,
                                   s, i) for i, s in enumerate(streams)]
            results = []
            for i, future in enumerate(futures):
                try:
                    results.append(future.result())
                except RepeatFailedError:
                    raise
                except BsbuError as e:
                    raise RepeatFailedError(i, e)
    stats = SummaryStats.from_results(results)
    logger.info('%s: %d repeats, mean %.6f sd %.6f in %.1fs', engine.value,
                config.repeats, stats.mean, stats.sd,
                time.perf_counter() - started)
    return stats
