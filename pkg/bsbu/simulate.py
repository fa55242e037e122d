import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from bsbu.errors import ContractViolationError, ValidationError
from bsbu.model import PointBatch
from bsbu.truncation import auxiliary_step

logger = logging.getLogger(__name__)

# The simulate module holds every source of randomness: innovation draws,
# the artificial post-action samples of backward simulation, and the
# control-randomized forward paths of the baseline solvers.


@dataclass(frozen=True)
class RandomStream(object):
    """Counter-based random stream identified by (seed, stream_id).

    Equal pairs reproduce the same draws whatever process or thread builds
    the generator; distinct stream ids give independent streams.
    """
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ('seed', 'stream_id'):
            value = getattr(self, name)
            if int(value) != value or value < 0 or value >= 2 ** 64:
                raise ValidationError('%s must be an unsigned 64-bit integer, '
                                      'got %s' % (name, value))
            object.__setattr__(self, name, int(value))

    def generator(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))

    def spawn(self, *labels):
        """Stream derived from this one and the integer labels (repeat, step...)"""
        seq = np.random.SeedSequence(
            self.seed, spawn_key=(self.stream_id,) + tuple(int(l) for l in labels))
        child = int(seq.generate_state(1, dtype=np.uint64)[0])
        return RandomStream(self.seed, child)


@dataclass(frozen=True)
class LognormalInnovationSpec(object):
    """Law of the gross return over one step of length delta (in years).

    log e ~ Normal((r - q - sigma^2 / 2) delta, sigma^2 delta)
    """
    r: float
    q: float
    sigma: float
    delta: float

    # innovation that leaves an absorbing post-action value where it is
    representative = 1.0

    def __post_init__(self):
        for name in ('r', 'q', 'sigma', 'delta'):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError('%s must be finite, got %s' %
                                      (name, getattr(self, name)))
        if self.sigma < 0:
            raise ValidationError('sigma must be >= 0, got %s' % self.sigma)
        if self.delta <= 0:
            raise ValidationError('delta must be > 0, got %s' % self.delta)

    @property
    def mean_log(self):
        return (self.r - self.q - 0.5 * self.sigma ** 2) * self.delta

    @property
    def var_log(self):
        return self.sigma ** 2 * self.delta

    @property
    def mean(self):
        return math.exp((self.r - self.q) * self.delta)

    def sample(self, M, rng):
        if int(M) != M or M < 1:
            raise ValidationError('sample size must be >= 1, got %s' % M)
        z = rng.standard_normal(int(M))
        return np.exp(self.mean_log + math.sqrt(self.var_log) * z)

    def quadrature(self, order):
        """Gauss-Hermite nodes and weights for E[g(e)].

        log e = mu + sqrt(2 var) u over the Hermite nodes u, weights divided
        by sqrt(pi) so they sum to one.
        """
        if order < 1:
            raise ValidationError('quadrature order must be >= 1, got %s' %
                                  order)
        u, w = hermgauss(order)
        nodes = np.exp(self.mean_log + math.sqrt(2.0 * self.var_log) * u)
        return nodes, w / math.sqrt(math.pi)


def sample_innovations(spec, M, stream):
    """M independent draws of the innovation law from the given stream"""
    return spec.sample(M, stream.generator())


def _open_uniform(rng, lo, hi, M):
    k = rng.uniform(lo, hi, size=M)
    # rng.uniform samples [lo, hi); the artificial law lives on (lo, hi)
    return np.where(k <= lo, np.nextafter(lo, hi), k)


def balanced_labels(rng, n_labels, M):
    """Label indices in 0..n_labels-1, uniform for each draw.

    Labels are dealt round-robin over a random permutation of the M draws,
    so every label gets floor(M / n_labels) or one more of them.
    """
    return rng.permutation(M) % n_labels


class UniformPostActionSampler(object):
    """Artificial law of the post-action values at step t.

    The continuous part is uniform on the open truncation box, the discrete
    part uniform on the labels the model declares for step t. Labels are
    balanced across the sample (see balanced_labels).
    """

    def sample(self, model, dom, t, M, rng):
        if int(M) != M or M < 1:
            raise ValidationError('sample size must be >= 1, got %s' % M)
        M = int(M)
        cont = np.column_stack([_open_uniform(rng, lo, hi, M)
                                for lo, hi in zip(dom.lower, dom.upper)])
        labels = np.asarray(model.post_action_labels(t), dtype=np.int64)
        if labels.ndim == 1:
            labels = labels[:, None]
        disc = labels[balanced_labels(rng, len(labels), M)]
        return PointBatch(cont, disc)


def sample_post_actions(t, R, M, stream):
    """Post-action values (k1, k2), k1 uniform on (0, R), k2 uniform on 0..t.

    Returns:
      a PointBatch; batch.points(PostActionValue) lists them
    """
    if R <= 0:
        raise ValidationError('R must be > 0, got %s' % R)
    if t < 0:
        raise ValidationError('step must be >= 0, got %s' % t)
    if int(M) != M or M < 1:
        raise ValidationError('sample size must be >= 1, got %s' % M)
    rng = stream.generator()
    k1 = _open_uniform(rng, 0.0, float(R), int(M))
    k2 = balanced_labels(rng, t + 1, int(M))
    return PointBatch(k1, k2)


class CrRule(enum.Enum):
    """Control randomization rules of the forward baseline.

    Each rule draws, uniformly, one of the action slots (no withdrawal,
    guaranteed withdrawal, full surrender) listed in its value.
    """
    CR0 = (1,)
    CR1 = (0, 1, 2)
    CR2 = (0, 1)

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValidationError('unknown control randomization rule %r' %
                                  name)

    @property
    def slots(self):
        return self.value


@dataclass
class ForwardSample(object):
    """Paths of a forward simulation up to step t+1.

    Args:
      states list of PointBatch, the states at 0..t+1
      post PointBatch, the post-action values K(X_t, a_t)
    """
    states: list
    post: PointBatch

    @property
    def t(self):
        return len(self.states) - 2

    @property
    def current(self):
        return self.states[-2]

    @property
    def following(self):
        return self.states[-1]


def draw_actions(model, rule, n, states, rng):
    """Actions drawn by a control randomization rule for every state"""
    choices = model.action_choices(n, states)
    if len(choices) == 1:
        return choices[0]
    slots = rule.slots
    if len(choices) <= max(slots):
        raise ContractViolationError(
            'rule %s needs %d action slots at t=%d, model offers %d' %
            (rule.name, max(slots) + 1, n, len(choices)))
    pick = np.asarray(slots)[rng.integers(0, len(slots), size=len(states))]
    chosen = choices[slots[0]]
    for slot in slots[1:]:
        chosen = choices[slot].where(pick == slot, chosen)
    return chosen


def forward_simulate(model, dom, rule, t, M, stream):
    """Simulates M truncated paths from X_0 with randomized controls.

    Boundary states stay frozen. Actions at every step 0..t are drawn by
    the rule, innovations from the model's law.

    Returns:
      a ForwardSample holding the states at 0..t+1 and the post-action
      values at t
    """
    if t < 0 or t >= model.horizon:
        raise ValidationError('step %s outside 0..%d' % (t, model.horizon - 1))
    if int(M) != M or M < 1:
        raise ValidationError('sample size must be >= 1, got %s' % M)
    rule = CrRule.parse(rule)
    rng = stream.generator()
    states = [PointBatch.repeat(model.initial_state, int(M))]
    post = None
    for n in range(t + 1):
        actions = draw_actions(model, rule, n, states[-1], rng)
        eps = model.innovation_law.sample(int(M), rng)
        nxt, post = auxiliary_step(model, dom, n, states[-1], actions, eps)
        states.append(nxt)
    logger.debug('forward simulated %d paths to t=%d with %s', M, t + 1,
                 rule.name)
    return ForwardSample(states, post)
