import abc
import logging
import math
from dataclasses import dataclass

import numpy as np

from bsbu.errors import InfeasibleActionError, ValidationError

logger = logging.getLogger(__name__)

# The model module defines the abstract discrete-time stochastic control
# problem shared by every solver. A transition is split in two: the
# pre-action map K(x, a) gives the post-action value and the innovation map
# H(k, e) turns it into the next state.


@dataclass(frozen=True)
class HybridPoint(object):
    """A point with a real-valued part and an integer-valued part"""
    continuous: tuple
    discrete: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'continuous',
                           tuple(float(c) for c in np.atleast_1d(self.continuous)))
        object.__setattr__(self, 'discrete',
                           tuple(int(d) for d in np.atleast_1d(self.discrete)))

    def is_finite(self):
        return all(math.isfinite(c) for c in self.continuous)


class State(HybridPoint):
    """State x_t of the controlled process"""


class Action(HybridPoint):
    """Action a_t taken by the decision maker"""


class PostActionValue(HybridPoint):
    """Post-action value K(x_t, a_t), i.e. the state before the innovation"""


class PointBatch(object):
    """Column-aligned batch of hybrid points.

    Args:
      continuous float array of shape (n, d_c)
      discrete int array of shape (n, d_d)
    """

    def __init__(self, continuous, discrete):
        continuous = np.asarray(continuous, dtype=float)
        discrete = np.asarray(discrete, dtype=np.int64)
        if continuous.ndim == 1:
            continuous = continuous[:, None]
        if discrete.ndim == 1:
            discrete = discrete[:, None]
        if continuous.shape[0] != discrete.shape[0]:
            raise ValidationError(
                'continuous part has %d rows but discrete part has %d' %
                (continuous.shape[0], discrete.shape[0]))
        self.continuous = continuous
        self.discrete = discrete

    def __len__(self):
        return self.continuous.shape[0]

    @classmethod
    def from_points(cls, points):
        points = list(points)
        if not points:
            raise ValidationError('cannot build a batch from no points')
        cont = np.array([p.continuous for p in points], dtype=float)
        disc = np.array([p.discrete for p in points], dtype=np.int64)
        if disc.size == 0:
            disc = np.zeros((len(points), 0), dtype=np.int64)
        return cls(cont, disc)

    @classmethod
    def repeat(cls, point, n):
        cont = np.tile(np.asarray(point.continuous, dtype=float), (n, 1))
        disc = np.tile(np.asarray(point.discrete, dtype=np.int64), (n, 1))
        return cls(cont, disc.reshape(n, len(point.discrete)))

    def point(self, i, kind=HybridPoint):
        return kind(tuple(self.continuous[i]), tuple(self.discrete[i]))

    def points(self, kind=HybridPoint):
        return [self.point(i, kind) for i in range(len(self))]

    def take(self, index):
        return PointBatch(self.continuous[index], self.discrete[index])

    def where(self, mask, other):
        """Rows of self where mask holds, rows of other elsewhere"""
        mask = np.asarray(mask, dtype=bool)[:, None]
        return PointBatch(np.where(mask, self.continuous, other.continuous),
                          np.where(mask, self.discrete, other.discrete))


class ControlModel(abc.ABC):
    """Abstract discrete-time stochastic optimal control problem.

    Subclasses provide the horizon T, the discount factor, the innovation
    law and the per-point maps below. The batch methods default to looping
    over the per-point maps; models with many paths should override them
    with vectorised versions.

    Instances must be immutable once built: solvers share them between
    workers.
    """
    horizon = None
    discount = None
    innovation_law = None

    @property
    @abc.abstractmethod
    def initial_state(self):
        """The state X_0 the problem is solved for"""

    @abc.abstractmethod
    def pre_action_map(self, t, x, a):
        """K(x, a) as a PostActionValue"""

    @abc.abstractmethod
    def innovation_map(self, t, k, eps):
        """H(k, e) as a State"""

    @abc.abstractmethod
    def feasible_actions(self, t, x):
        """Finite, deterministically ordered list of feasible Actions"""

    @abc.abstractmethod
    def intermediate_reward(self, t, x, a):
        """f_t(x, a)"""

    @abc.abstractmethod
    def terminal_reward(self, x):
        """f_T(x)"""

    @abc.abstractmethod
    def post_action_labels(self, t):
        """Discrete parts (tuples) a post-action value may take at step t"""

    def state_labels(self, t):
        """Discrete parts (tuples) a state may take at step t"""
        if t == 0:
            return [tuple(self.initial_state.discrete)]
        return self.post_action_labels(t - 1)

    def transition(self, t, x, a, eps):
        """Monolithic transition S(x, a, e), if the model has one for cross-checks"""
        return None

    # batch API

    def action_choices(self, t, states):
        """Candidate actions for every state in a batch.

        Returns:
          list of PointBatch, one per action slot; slot i of row m is the
          i-th feasible action of state m. States with fewer feasible
          actions repeat their last action, which never changes a max and
          keeps enumeration-order tie breaking intact.
        """
        per_state = [self.feasible_actions(t, x)
                     for x in states.points(State)]
        for m, acts in enumerate(per_state):
            if not acts:
                raise ValidationError('no feasible action at t=%d for %s' %
                                      (t, states.point(m, State)))
        width = max(len(acts) for acts in per_state)
        return [PointBatch.from_points([acts[min(i, len(acts) - 1)]
                                        for acts in per_state])
                for i in range(width)]

    def pre_action_batch(self, t, states, actions):
        return PointBatch.from_points(
            [self.pre_action_map(t, x, a)
             for x, a in zip(states.points(State), actions.points(Action))])

    def innovation_batch(self, t, post, eps):
        eps = np.asarray(eps, dtype=float)
        return PointBatch.from_points(
            [self.innovation_map(t, k, e)
             for k, e in zip(post.points(PostActionValue), eps)])

    def reward_batch(self, t, states, actions):
        return np.array([self.intermediate_reward(t, x, a) for x, a in
                         zip(states.points(State), actions.points(Action))],
                        dtype=float)

    def terminal_reward_batch(self, states):
        return np.array([self.terminal_reward(x)
                         for x in states.points(State)], dtype=float)


def _same_action(a, b, tol=1e-12):
    return (a.discrete == b.discrete and
            len(a.continuous) == len(b.continuous) and
            np.allclose(a.continuous, b.continuous, rtol=0.0, atol=tol))


def check_feasible(model, t, x, a):
    """Raises InfeasibleActionError unless a is in A_t(x)"""
    feasible = model.feasible_actions(t, x)
    if not any(_same_action(a, f) for f in feasible):
        raise InfeasibleActionError(t, a, feasible)


def compose_transition(model, t, x, a, eps):
    """One step of the controlled process, x_{t+1} = H(K(x, a), e)

    Args:
      model a ControlModel
      t the step index
      x the State at t
      a an Action feasible at (t, x)
      eps the innovation e_{t+1}

    Returns:
      the State at t+1
    """
    if not x.is_finite() or not a.is_finite() or \
            not np.all(np.isfinite(np.asarray(eps, dtype=float))):
        raise ValidationError('non-finite input to transition at t=%d: '
                              'x=%s a=%s eps=%s' % (t, x, a, eps))
    check_feasible(model, t, x, a)
    k = model.pre_action_map(t, x, a)
    return model.innovation_map(t, k, eps)


def discounted_path_reward(model, path, terminal_state):
    """Total discounted reward of one path.

    Args:
      path list of (t, State, Action) covering t = 0..T-1 in order
      terminal_state the State x_T

    Returns:
      sum_t phi^t f_t(x_t, a_t) + phi^T f_T(x_T)
    """
    T = model.horizon
    if len(path) != T:
        raise ValidationError('path has %d steps but the horizon is %d' %
                              (len(path), T))
    steps = [t for t, _, _ in path]
    if steps != list(range(T)):
        raise ValidationError('path steps %s do not cover 0..%d' %
                              (steps, T - 1))
    phi = model.discount
    total = 0.0
    for t, x, a in path:
        total += phi ** t * model.intermediate_reward(t, x, a)
    return total + phi ** T * model.terminal_reward(terminal_state)
