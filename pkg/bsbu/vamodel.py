import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from bsbu.errors import InfeasibleActionError, ValidationError
from bsbu.model import (Action, ControlModel, PointBatch, PostActionValue,
                        State)
from bsbu.simulate import LognormalInnovationSpec
from bsbu.truncation import TruncationBound

logger = logging.getLogger(__name__)

# The vamodel module instantiates the control problem for a variable annuity
# with a guaranteed withdrawal benefit. The state is (W, I): the investment
# account and the first-withdrawal time (0 while withdrawals have not
# started). Actions are (gamma, tau): the amount withdrawn and whether the
# withdrawal is (or has been) initiated.

DEFAULT_GUARANTEE = ((0, 3, 0.03), (4, 7, 0.05), (8, 11, 0.07))


@dataclass(frozen=True)
class VaContract(object):
    """Contract and market parameters.

    Args:
      T number of withdrawal dates (steps)
      delta year fraction between two dates
      r, q, sigma annual risk-free rate, fee rate and volatility
      W0 initial premium
      P0 guarantee base, W0 when omitted
      kappa penalty rate on withdrawals above the guaranteed amount
      guarantee bands (lo, hi, rate): G(I) = rate for lo <= I <= hi
    """
    T: int = 12
    delta: float = 1.0 / 12
    r: float = 0.03
    q: float = 0.01
    sigma: float = 0.15
    W0: float = 1.0
    P0: float = None
    kappa: float = 0.8
    guarantee: tuple = DEFAULT_GUARANTEE

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValidationError('T must be a positive integer, got %s' %
                                  self.T)
        object.__setattr__(self, 'T', int(self.T))
        for name in ('delta', 'r', 'q', 'sigma', 'W0', 'kappa'):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError('%s must be finite, got %s' %
                                      (name, getattr(self, name)))
        if self.delta <= 0:
            raise ValidationError('delta must be > 0, got %s' % self.delta)
        if self.sigma < 0:
            raise ValidationError('sigma must be >= 0, got %s' % self.sigma)
        if self.W0 <= 0:
            raise ValidationError('W0 must be > 0, got %s' % self.W0)
        if not 0.0 <= self.kappa <= 1.0:
            raise ValidationError('kappa must lie in [0, 1], got %s' %
                                  self.kappa)
        if self.P0 is None:
            object.__setattr__(self, 'P0', float(self.W0))
        elif not (math.isfinite(self.P0) and self.P0 > 0):
            raise ValidationError('P0 must be finite and > 0, got %s' %
                                  self.P0)
        bands = tuple((int(lo), int(hi), float(rate))
                      for lo, hi, rate in self.guarantee)
        object.__setattr__(self, 'guarantee', bands)
        for lo, hi, rate in bands:
            if lo > hi or not math.isfinite(rate) or rate < 0:
                raise ValidationError('invalid guarantee band (%s, %s, %s)' %
                                      (lo, hi, rate))
        for i in range(self.T):
            if not any(lo <= i <= hi for lo, hi, _ in bands):
                raise ValidationError('guarantee schedule does not cover I=%d'
                                      % i)

    def with_horizon(self, T):
        return replace(self, T=T)

    @property
    def discount(self):
        return math.exp(-self.r * self.delta)

    @property
    def rates(self):
        """G(I) for I = 0..T-1"""
        return tuple(guarantee_rate(self, i) for i in range(self.T))

    @property
    def innovation_spec(self):
        return LognormalInnovationSpec(self.r, self.q, self.sigma, self.delta)


class VaState(State):
    """State (W, I)"""

    def __init__(self, W, I=0):
        super(VaState, self).__init__(tuple(np.ravel(W)), tuple(np.ravel(I)))

    @property
    def W(self):
        return self.continuous[0]

    @property
    def I(self):
        return self.discrete[0]


class VaAction(Action):
    """Action (gamma, tau)"""

    def __init__(self, gamma, tau=0):
        super(VaAction, self).__init__(tuple(np.ravel(gamma)),
                                       tuple(np.ravel(tau)))

    @property
    def gamma(self):
        return self.continuous[0]

    @property
    def tau(self):
        return self.discrete[0]


def guarantee_rate(contract, I):
    if int(I) != I or not 0 <= I <= contract.T - 1:
        raise ValidationError('first-withdrawal time %s outside 0..%d' %
                              (I, contract.T - 1))
    for lo, hi, rate in contract.guarantee:
        if lo <= I <= hi:
            return rate
    raise ValidationError('no guarantee band covers I=%s' % I)


def va_feasible_actions(contract, t, x):
    """Bang-bang action set: no withdrawal, guaranteed amount, surrender.

    No withdrawal is allowed at inception, so t = 0 has the single null
    action (0, 0). Coinciding actions are listed once, first position kept.
    """
    if t == 0:
        return [VaAction(0.0, 0)]
    W, I = x.continuous[0], x.discrete[0]
    guaranteed = guarantee_rate(contract, I) * contract.P0
    first = VaAction(0.0, 0) if I == 0 else VaAction(0.0, 1)
    actions = []
    for a in (first, VaAction(guaranteed, 1), VaAction(W, 1)):
        if all((a.continuous, a.discrete) != (b.continuous, b.discrete)
               for b in actions):
            actions.append(a)
    return actions


def va_reward(contract, t, x, a):
    """f_t(x, a) = gamma - kappa (gamma - G(I) P0)+, zero at inception"""
    feasible = va_feasible_actions(contract, t, x)
    if not any(a.discrete == b.discrete and
               abs(a.continuous[0] - b.continuous[0]) <= 1e-12
               for b in feasible):
        raise InfeasibleActionError(t, a, feasible,
                                    'gamma in {0, G(I) P0, W}, tau per I')
    if t == 0:
        return 0.0
    gamma = a.continuous[0]
    guaranteed = guarantee_rate(contract, x.discrete[0]) * contract.P0
    return gamma - contract.kappa * max(gamma - guaranteed, 0.0)


def va_terminal_reward(contract, x):
    return x.continuous[0]


def va_tail_probability(contract, R):
    """Reflection-principle bound on the chance W leaves [0, R) before T.

    Args:
      contract a VaContract with sigma > 0
      R upper truncation bound, R > W0

    Returns:
      the probability bound, a float in [0, 1]
    """
    if not R > contract.W0:
        raise ValidationError('R must exceed W0=%s, got %s' % (contract.W0, R))
    sigma = contract.sigma
    if sigma <= 0:
        raise ValidationError('the tail bound needs sigma > 0')
    alpha = (contract.r - contract.q - 0.5 * sigma ** 2) / sigma
    horizon = contract.delta * contract.T
    scale = math.sqrt(horizon)
    level = math.log(R / contract.W0)
    upper = norm.sf((level / sigma - alpha * horizon) / scale)
    # (R/W0)^(2 alpha / sigma) N(.) in log space, the power overflows for big R
    log_mirror = (2.0 * alpha / sigma * level +
                  norm.logcdf((-level / sigma - alpha * horizon) / scale))
    return float(min(1.0, max(0.0, upper + math.exp(log_mirror))))


def va_reward_bound(contract, R):
    """xi(R): no reward inside [0, R] exceeds max(R, G_max P0)"""
    top = max(R, max(rate for _, _, rate in contract.guarantee) * contract.P0)
    return top ** 2


def va_moment_bound(contract):
    """zeta: E[W_T^2] of the untruncated account plus the squared largest
    guaranteed payment"""
    growth = (2.0 * (contract.r - contract.q) + contract.sigma ** 2) * \
        contract.delta * contract.T
    g_max = max(rate for _, _, rate in contract.guarantee) * contract.P0
    return contract.W0 ** 2 * math.exp(growth) + g_max ** 2


def va_truncation_bound(contract, R):
    return TruncationBound(horizon=contract.T,
                           reward_bound=va_reward_bound(contract, R),
                           moment_bound=va_moment_bound(contract),
                           exit_probability=va_tail_probability(contract, R))


class VariableAnnuityModel(ControlModel):
    """The variable annuity as a ControlModel.

    K((W, I), (gamma, tau)) = ((W - gamma)+, S(I, tau)) and
    H(k, e) = (k1 e, k2), where S records t as the first-withdrawal time
    when I = 0 and tau = 1.
    """

    def __init__(self, contract=None):
        self.contract = contract if contract is not None else VaContract()
        self.horizon = self.contract.T
        self.discount = self.contract.discount
        self.innovation_law = self.contract.innovation_spec
        self._guaranteed = np.array(self.contract.rates) * self.contract.P0

    def __repr__(self):
        return 'VariableAnnuityModel(%r)' % (self.contract,)

    @property
    def initial_state(self):
        return State((self.contract.W0,), (0,))

    def _record(self, t, I, tau):
        return t if (I == 0 and tau == 1) else I

    def pre_action_map(self, t, x, a):
        W, I = x.continuous[0], x.discrete[0]
        gamma, tau = a.continuous[0], a.discrete[0]
        return PostActionValue((max(W - gamma, 0.0),),
                               (self._record(t, I, tau),))

    def innovation_map(self, t, k, eps):
        e = float(np.ravel(eps)[0])
        return State((k.continuous[0] * e,), k.discrete)

    def transition(self, t, x, a, eps):
        W, I = x.continuous[0], x.discrete[0]
        gamma, tau = a.continuous[0], a.discrete[0]
        e = float(np.ravel(eps)[0])
        return State((max(W - gamma, 0.0) * e,), (self._record(t, I, tau),))

    def feasible_actions(self, t, x):
        return va_feasible_actions(self.contract, t, x)

    def intermediate_reward(self, t, x, a):
        return va_reward(self.contract, t, x, a)

    def terminal_reward(self, x):
        return va_terminal_reward(self.contract, x)

    def post_action_labels(self, t):
        return [(i,) for i in range(t + 1)]

    # vectorised batch API, no feasibility checks

    def _guarantee_of(self, I):
        if np.any((I < 0) | (I >= self.horizon)):
            raise ValidationError('first-withdrawal time outside 0..%d' %
                                  (self.horizon - 1))
        return self._guaranteed[I]

    def action_choices(self, t, states):
        n = len(states)
        if t == 0:
            return [PointBatch(np.zeros(n), np.zeros(n, dtype=np.int64))]
        W = states.continuous[:, 0]
        I = states.discrete[:, 0]
        ones = np.ones(n, dtype=np.int64)
        return [PointBatch(np.zeros(n), (I > 0).astype(np.int64)),
                PointBatch(self._guarantee_of(I), ones),
                PointBatch(W, ones)]

    def pre_action_batch(self, t, states, actions):
        W = states.continuous[:, 0]
        I = states.discrete[:, 0]
        gamma = actions.continuous[:, 0]
        tau = actions.discrete[:, 0]
        recorded = np.where((I == 0) & (tau == 1), t, I)
        return PointBatch(np.maximum(W - gamma, 0.0), recorded)

    def innovation_batch(self, t, post, eps):
        eps = np.asarray(eps, dtype=float).reshape(-1, 1)
        return PointBatch(post.continuous * eps, post.discrete)

    def reward_batch(self, t, states, actions):
        if t == 0:
            return np.zeros(len(states))
        gamma = actions.continuous[:, 0]
        guaranteed = self._guarantee_of(states.discrete[:, 0])
        return gamma - self.contract.kappa * np.maximum(gamma - guaranteed,
                                                        0.0)

    def terminal_reward_batch(self, states):
        return states.continuous[:, 0].copy()
