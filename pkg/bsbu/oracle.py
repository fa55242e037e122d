import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from bsbu.errors import NumericError, ValidationError
from bsbu.model import PointBatch
from bsbu.truncation import boundary_values

logger = logging.getLogger(__name__)

# The oracle module solves the truncated problem by dynamic programming on a
# grid of account values. Expectations over the innovation use Gauss-Hermite
# quadrature and the next-step value is linearly interpolated, so its error
# profile does not depend on the sieve regression it is used to check.

MIN_GRID_POINTS = 201


@dataclass(frozen=True)
class GridSpec(object):
    """Grid of account values and Gauss-Hermite quadrature order.

    Args:
      w_grid sorted points of [0, R], both ends included
      order number of quadrature nodes
    """
    w_grid: tuple
    order: int = 48

    def __post_init__(self):
        grid = np.asarray(self.w_grid, dtype=float)
        if grid.ndim != 1 or grid.size < MIN_GRID_POINTS:
            raise ValidationError('grid needs at least %d points, got %d' %
                                  (MIN_GRID_POINTS, grid.size))
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise ValidationError('grid points must be finite and strictly '
                                  'increasing')
        if grid[0] != 0.0:
            raise ValidationError('grid must start at 0, starts at %s' %
                                  grid[0])
        if int(self.order) != self.order or self.order < 1:
            raise ValidationError('quadrature order must be >= 1, got %s' %
                                  self.order)
        object.__setattr__(self, 'w_grid', tuple(grid))
        object.__setattr__(self, 'order', int(self.order))

    @classmethod
    def uniform(cls, R, points=801, order=48):
        return cls(tuple(np.linspace(0.0, R, points)), order)

    @property
    def points(self):
        return np.asarray(self.w_grid)


class GridValueFunction(object):
    """Tabulated value and continuation functions of the truncated problem.

    values[t][label] holds V_t on the grid for t = 0..T and
    continuations[t][label] holds C_t on the grid for t = 0..T-1.
    """

    def __init__(self, grid, values, continuations, initial_value):
        self.grid = grid
        self.values = values
        self.continuations = continuations
        self.initial_value = initial_value

    def value(self, t, state):
        table = self.values[t][tuple(state.discrete)]
        return float(np.interp(state.continuous[0], self.grid, table))

    def continuation(self, t, k):
        table = self.continuations[t][tuple(k.discrete)]
        return float(np.interp(k.continuous[0], self.grid, table))

    def to_frame(self):
        """Long table with columns step, label, w, value"""
        frames = []
        for t in sorted(self.values):
            for label in sorted(self.values[t]):
                frames.append(pd.DataFrame({
                    'step': t,
                    'label': label[0] if len(label) == 1 else str(label),
                    'w': self.grid,
                    'value': self.values[t][label]}))
        return pd.concat(frames, ignore_index=True)


def _grid_states(grid, label):
    n = grid.size
    return PointBatch(grid, np.tile(np.asarray(label, dtype=np.int64), (n, 1)))


def _interpolate(continuation, grid, post):
    out = np.empty(len(post))
    for label in np.unique(post.discrete, axis=0):
        rows = np.all(post.discrete == label, axis=1)
        table = continuation[tuple(int(v) for v in label)]
        out[rows] = np.interp(post.continuous[rows, 0], grid, table)
    return out


def _bellman(model, dom, t, states, continuation, grid):
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
                _interpolate(continuation, grid, post)
            best = value if best is None else np.where(value > best, value,
                                                       best)
        out[inside] = best
    return out


def _expectation(table, grid, k1, nodes, weights, t, label):
    # the next account value k1 e beyond R is frozen at R, which np.interp
    # reproduces by holding the last table entry
    following = np.outer(k1, nodes)
    with np.errstate(over='ignore', invalid='ignore'):
        values = np.interp(following, grid, table) @ weights
    if not np.all(np.isfinite(values)):
        raise NumericError('non-finite continuation at step %d label %s' %
                           (t, label), nodes=nodes)
    return values


def grid_dp_solve(model, dom, grid):
    """Backward dynamic programming of the truncated problem on a grid.

    Args:
      model a ControlModel with one continuous coordinate, e.g. the
        variable annuity
      dom the TruncatedDomain [0, R]; the grid must end at R
      grid a GridSpec

    Returns:
      a GridValueFunction

    Raises:
      NumericError when the quadrature nodes or the continuation values
      are not finite
    """
    if len(dom.lower) != 1:
        raise ValidationError('grid solver needs one continuous coordinate')
    points = grid.points
    if points[0] != dom.lower[0] or points[-1] != dom.upper[0]:
        raise ValidationError('grid [%s, %s] does not span the domain %s' %
                              (points[0], points[-1], dom))
    nodes, weights = model.innovation_law.quadrature(grid.order)
    if not (np.all(np.isfinite(nodes)) and np.all(nodes > 0)):
        raise NumericError('quadrature nodes under- or overflow',
                           nodes=nodes[~(np.isfinite(nodes) & (nodes > 0))])

    T = model.horizon
    values = {T: {tuple(label): model.terminal_reward_batch(
        _grid_states(points, label)) for label in model.state_labels(T)}}
    continuations = {}
    for t in reversed(range(T)):
        continuations[t] = {}
        for label in model.post_action_labels(t):
            table = values[t + 1][tuple(label)]
            c = _expectation(table, points, points, nodes, weights, t, label)
            # k1 in {0, R} is absorbing, the next state is that boundary point
            c[0], c[-1] = table[0], table[-1]
            continuations[t][tuple(label)] = c
        values[t] = {tuple(label): _bellman(model, dom, t,
                                            _grid_states(points, label),
                                            continuations[t], points)
                     for label in model.state_labels(t)}
        logger.debug('grid step %d done', t)
    x0 = PointBatch.from_points([model.initial_state])
    initial = float(_bellman(model, dom, 0, x0, continuations[0], points)[0])
    logger.info('grid solve with %d points, order %d: V0=%.8f', points.size,
                grid.order, initial)
    return GridValueFunction(points, values, continuations, initial)


def compare_estimates(a, b):
    """Absolute and relative error of a against the reference b"""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValidationError('estimates must be finite, got %s and %s' %
                              (a, b))
    err = abs(a - b)
    return err, err / max(abs(b), 1e-12)
