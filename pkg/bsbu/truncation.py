import logging
import math
from dataclasses import dataclass

import numpy as np

from bsbu.errors import (ConfigurationError, ContractViolationError,
                         ValidationError)
from bsbu.model import PointBatch, State

logger = logging.getLogger(__name__)

# The truncation module bounds the continuous part of the state to a box.
# A state leaving the open box is projected onto its boundary and frozen
# there; on the boundary the value function has a closed form, so no
# regression estimate is ever evaluated outside the box.


@dataclass(frozen=True)
class TruncatedDomain(object):
    """Closed box [lo_i, hi_i] over the continuous coordinates.

    Discrete coordinates pass through untruncated. The interior is the
    open box, the boundary is the closed box minus the interior.
    """
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise ValidationError('bounds of different length: %s vs %s' %
                                  (lower, upper))
        for lo, hi in zip(lower, upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError('invalid interval [%s, %s]' % (lo, hi))
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @classmethod
    def interval(cls, lo, hi):
        return cls((lo,), (hi,))

    @property
    def lo(self):
        return np.asarray(self.lower)

    @property
    def hi(self):
        return np.asarray(self.upper)

    def contains(self, continuous):
        """Row-wise membership of the closed box"""
        c = np.atleast_2d(continuous)
        return np.all((c >= self.lo) & (c <= self.hi), axis=1)

    def interior(self, continuous):
        """Row-wise membership of the open box"""
        c = np.atleast_2d(continuous)
        return np.all((c > self.lo) & (c < self.hi), axis=1)

    def boundary(self, continuous):
        """Row-wise membership of the boundary"""
        return self.contains(continuous) & ~self.interior(continuous)


def project_batch(continuous, dom):
    """Componentwise clamp, the Euclidean projection onto the closed box"""
    return np.clip(np.atleast_2d(continuous), dom.lo, dom.hi)


def project_to_closure(x, dom):
    """Nearest point of the closed box to x, discrete part unchanged"""
    c = project_batch(np.asarray(x.continuous, dtype=float), dom)[0]
    return type(x)(tuple(c), x.discrete)


def is_interior(x, dom):
    return bool(dom.interior(np.asarray(x.continuous))[0])


def on_boundary(x, dom):
    return bool(dom.boundary(np.asarray(x.continuous))[0])


def is_absorbing(k, dom):
    """Whether a post-action value lies in the absorbing set.

    For a box domain this is the set of post-action values whose continuous
    part is on the box boundary, e.g. {0, R} x labels for an account value
    truncated to [0, R].
    """
    return on_boundary(k, dom)


def truncated_step_batch(model, dom, t, post, eps):
    """H~(k, e) for a batch: H(k, e) when it is interior, else its projection"""
    nxt = model.innovation_batch(t, post, eps)
    inside = dom.interior(nxt.continuous)
    projected = PointBatch(project_batch(nxt.continuous, dom), nxt.discrete)
    return nxt.where(inside, projected)


def truncated_step(model, dom, t, k, eps):
    """H~(k, e) for a single post-action value"""
    x = model.innovation_map(t, k, eps)
    if is_interior(x, dom):
        return x
    return project_to_closure(x, dom)


def auxiliary_step(model, dom, t, states, actions, eps):
    """Transition of the truncated process for a batch.

    Boundary states stay where they are; interior states move to
    H~(K(x, a), e).
    """
    post = model.pre_action_batch(t, states, actions)
    moved = truncated_step_batch(model, dom, t, post, eps)
    frozen = dom.boundary(states.continuous)
    return states.where(frozen, moved), post


def boundary_values(model, t, states):
    """Value of boundary states, which stay frozen until the horizon.

    Each remaining step collects the largest immediate reward over the
    feasible actions, the first such action in enumeration order.

    Returns:
      float array, one value per state
    """
    T = model.horizon
    phi = model.discount
    total = np.zeros(len(states))
    for n in range(t, T):
        choices = model.action_choices(n, states)
        if not choices:
            raise ConfigurationError('empty feasible set at step %d' % n)
        best = model.reward_batch(n, states, choices[0])
        for acts in choices[1:]:
            best = np.maximum(best, model.reward_batch(n, states, acts))
        total += phi ** (n - t) * best
    return total + phi ** (T - t) * model.terminal_reward_batch(states)


def boundary_value(model, t, x):
    """Value of a single boundary state at step t"""
    return float(boundary_values(model, t, PointBatch.from_points([x]))[0])


def absorbing_continuation(model, dom, t, k):
    """Continuation value of an absorbing post-action value.

    The next state is the same boundary point whatever the innovation, so
    the value is the boundary value at t+1 of H~(k, e) for one
    representative innovation e.
    """
    if not is_absorbing(k, dom):
        raise ContractViolationError(
            'post-action value %s is not absorbing for %s' % (k, dom))
    e = model.innovation_law.representative
    nxt = truncated_step(model, dom, t, k, e)
    if not on_boundary(nxt, dom):
        raise ContractViolationError(
            'H~(%s, %s) = %s is not on the boundary' % (k, e, nxt))
    return boundary_value(model, t + 1, State(nxt.continuous, nxt.discrete))


def absorbing_continuations(model, dom, t, post):
    """absorbing_continuation for a batch of absorbing post-action values"""
    e = np.full(len(post), model.innovation_law.representative)
    nxt = truncated_step_batch(model, dom, t, post, e)
    if not np.all(dom.boundary(nxt.continuous)):
        raise ContractViolationError(
            'non-absorbing post-action values passed at t=%d' % t)
    return boundary_values(model, t + 1, nxt)


@dataclass(frozen=True)
class TruncationBound(object):
    """Inputs of the truncation error bound.

    Args:
      horizon T
      reward_bound xi(R), bound on squared rewards inside the box
      moment_bound zeta, bound on the expected squared-reward envelope
      exit_probability E(X0, R), bound on the chance of leaving the box
    """
    horizon: int
    reward_bound: float
    moment_bound: float
    exit_probability: float

    def __post_init__(self):
        for name in ('horizon', 'reward_bound', 'moment_bound',
                     'exit_probability'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError('%s must be finite and non-negative, '
                                      'got %s' % (name, value))
        if self.exit_probability > 1:
            raise ValidationError('exit_probability %s exceeds 1' %
                                  self.exit_probability)


def truncation_error_bound(b):
    """|V_0 - V~_0| <= T sqrt(2 (xi + zeta) E)"""
    return b.horizon * math.sqrt(
        2.0 * (b.reward_bound + b.moment_bound) * b.exit_probability)
