import logging
import os
from dataclasses import dataclass, field, replace

import yaml

from bsbu.errors import ConfigParseError, ValidationError
from bsbu.sieve import ShapeConstraint
from bsbu.solver import Engine, SolverConfig
from bsbu.vamodel import VaContract

logger = logging.getLogger(__name__)

# Experiment documents are flat lists of `key = value` assignments, several
# per line when separated by commas, with `#` starting a comment. Values are
# YAML flow values (numbers, words, quoted strings, lists), e.g.
#
#   contract.sigma = 0.15, contract.T = 12
#   solver.M = 200000, solver.J = 20    # larger sample
#   engine = bsbu
#   contract.guarantee = [[0, 3, 0.03], [4, 7, 0.05], [8, 11, 0.07]]

REGRESSIONS = ('spse', 'rse')

DEFAULT_SETTINGS = ((100000, 15), (100000, 20), (100000, 25), (200000, 20),
                   (400000, 20))


def _number(value):
    # YAML 1.1 reads exponents without a dot (1e-12) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def _as_int(value):
    value = _number(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or \
            not float(value).is_integer():
        raise ValueError('expected an integer, got %r' % (value,))
    return int(value)


def _as_float(value):
    value = _number(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError('expected a number, got %r' % (value,))
    return float(value)


def _as_str(value):
    if not isinstance(value, str):
        raise ValueError('expected a word or string, got %r' % (value,))
    return value


def _as_ints(value):
    if not isinstance(value, list):
        raise ValueError('expected a list, got %r' % (value,))
    return tuple(_as_int(v) for v in value)


def _as_pairs(value):
    if not isinstance(value, list) or \
            any(not isinstance(p, list) or len(p) != 2 for p in value):
        raise ValueError('expected a list of [M, J] pairs, got %r' % (value,))
    return tuple((_as_int(m), _as_int(j)) for m, j in value)


def _as_bands(value):
    if not isinstance(value, list) or \
            any(not isinstance(b, list) or len(b) != 3 for b in value):
        raise ValueError('expected a list of [lo, hi, rate] bands, got %r' %
                         (value,))
    return tuple((_as_int(lo), _as_int(hi), _as_float(rate))
                 for lo, hi, rate in value)


KEYS = {
    'contract.T': _as_int,
    'contract.delta': _as_float,
    'contract.r': _as_float,
    'contract.q': _as_float,
    'contract.sigma': _as_float,
    'contract.W0': _as_float,
    'contract.P0': _as_float,
    'contract.kappa': _as_float,
    'contract.guarantee': _as_bands,
    'solver.M': _as_int,
    'solver.J': _as_int,
    'solver.R': _as_float,
    'solver.constraint': _as_str,
    'solver.seed': _as_int,
    'solver.repeats': _as_int,
    'solver.workers': _as_int,
    'solver.j_candidates': _as_ints,
    'solver.criterion': _as_str,
    'engine': _as_str,
    'regression': _as_str,
    'output.dir': _as_str,
    'experiment.settings': _as_pairs,
    'experiment.sweep_M': _as_ints,
    'simulation.t': _as_int,
    'simulation.M': _as_int,
    'simulation.bins': _as_int,
    'oracle.T': _as_int,
    'oracle.points': _as_int,
    'oracle.order': _as_int,
    'oracle.tolerance': _as_float,
}


@dataclass(frozen=True)
class ExperimentConfig(object):
    """Everything an experiment command needs.

    The solver block is the one used for SPSE runs; `solver_for('rse')`
    gives the unconstrained variant.
    """
    contract: VaContract = field(default_factory=VaContract)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(
        repeats=40, workers=os.cpu_count() or 1))
    engine: Engine = Engine.BSBU
    regression: str = 'spse'
    output_dir: str = 'out'
    settings: tuple = DEFAULT_SETTINGS
    sweep_M: tuple = (100000, 200000, 400000)
    simulation_t: int = None
    simulation_M: int = None
    simulation_bins: int = 40
    oracle_T: int = 3
    oracle_points: int = 801
    oracle_order: int = 48
    oracle_tolerance: float = 0.01
    source: str = field(default='', compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'engine', Engine.parse(self.engine))
        if self.regression not in REGRESSIONS:
            raise ValidationError('regression must be one of %s, got %r' %
                                  (REGRESSIONS, self.regression))
        for m, j in self.settings:
            SolverConfig(M=m, J=j, R=self.solver.R)
        for m in self.sweep_M:
            SolverConfig(M=m, J=self.solver.J, R=self.solver.R)
        if self.simulation_t is not None and \
                not 0 <= self.simulation_t < self.contract.T:
            raise ValidationError('simulation.t must lie in 0..%d, got %d' %
                                  (self.contract.T - 1, self.simulation_t))
        if self.simulation_M is not None and self.simulation_M < 1:
            raise ValidationError('simulation.M must be >= 1')
        if self.simulation_bins < 1:
            raise ValidationError('simulation.bins must be >= 1')
        if not 1 <= self.oracle_T:
            raise ValidationError('oracle.T must be >= 1')
        if self.oracle_points < 201 or self.oracle_order < 1:
            raise ValidationError('oracle needs >= 201 points and order >= 1')
        if not self.oracle_tolerance > 0:
            raise ValidationError('oracle.tolerance must be > 0')
        if self.contract.W0 >= self.solver.R:
            raise ValidationError('W0=%s must lie inside (0, R=%s)' %
                                  (self.contract.W0, self.solver.R))

    def solver_for(self, regression=None):
        """Solver settings of a regression kind, rse fits without constraint"""
        regression = regression or self.regression
        if regression == 'rse':
            return replace(self.solver, constraint=ShapeConstraint.NONE)
        return self.solver

    def with_overrides(self, seed=None, repeats=None, workers=None, out=None):
        changes = {k: v for k, v in (('seed', seed), ('repeats', repeats),
                                     ('workers', workers)) if v is not None}
        cfg = replace(self, solver=replace(self.solver, **changes)) \
            if changes else self
        if out is not None:
            cfg = replace(cfg, output_dir=out)
        return cfg


def _split_assignments(line):
    """Top-level comma separated parts of a line, comment removed"""
    parts, depth, quote, start = [], 0, None, 0
    for i, ch in enumerate(line):
        if quote:
            if ch == quote and line[i - 1] != '\\':
                quote = None
        elif ch in '"\'':
            quote = ch
        elif ch in '[{':
            depth += 1
        elif ch in ']}':
            depth -= 1
        elif ch == '#':
            line = line[:i]
            break
        elif ch == ',' and depth == 0:
            parts.append(line[start:i])
            start = i + 1
    parts.append(line[start:])
    return [p.strip() for p in parts if p.strip()]


def _parse_value(raw):
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ValueError('cannot read value %r: %s' % (raw, e))


def parse_assignments(text):
    """Typed values of every assignment of a document.

    Returns:
      dict key -> (value, line number)
    """
    found = {}
    for number, line in enumerate(text.splitlines(), start=1):
        for part in _split_assignments(line):
            if '=' not in part:
                raise ConfigParseError(part, number, 'expected key = value')
            key, raw = (s.strip() for s in part.split('=', 1))
            if key not in KEYS:
                raise ConfigParseError(key, number, 'unknown key')
            if key in found:
                raise ConfigParseError(key, number, 'duplicate key, first '
                                       'set on line %d' % found[key][1])
            try:
                value = KEYS[key](_parse_value(raw))
            except ValueError as e:
                raise ConfigParseError(key, number, str(e))
            found[key] = (value, number)
    return found


def _blame(found, prefix):
    """Most recently set key of a block, the one reported for block errors"""
    keys = [(line, key) for key, (_, line) in found.items()
            if key.startswith(prefix)]
    if not keys:
        return prefix.rstrip('.'), 0
    line, key = max(keys)
    return key, line


def _build(found, prefix, build):
    try:
        return build()
    except ValidationError as e:
        key, line = _blame(found, prefix)
        raise ConfigParseError(key, line, str(e))


def parse_config(text):
    """ExperimentConfig of a document, defaults filled in.

    Defaults are the standard 12-month contract, R = 4, a monotone constraint, 40
    repeats and the bsbu engine.

    Raises:
      ConfigParseError naming the key and line of the first problem
    """
    found = parse_assignments(text)

    def get(key, default=None):
        return found[key][0] if key in found else default

    contract = _build(found, 'contract.', lambda: VaContract(**{
        key.split('.', 1)[1]: value for key, (value, _) in found.items()
        if key.startswith('contract.')}))
    solver = _build(found, 'solver.', lambda: SolverConfig(
        M=get('solver.M', 100000),
        J=get('solver.J', 20),
        R=get('solver.R', 4.0),
        constraint=get('solver.constraint', 'monotone'),
        seed=get('solver.seed', 12345),
        repeats=get('solver.repeats', 40),
        workers=get('solver.workers', os.cpu_count() or 1),
        j_candidates=get('solver.j_candidates'),
        criterion=get('solver.criterion')))
    kwargs = {
        'contract': contract,
        'solver': solver,
        'engine': get('engine', 'bsbu'),
        'regression': get('regression', 'spse'),
        'output_dir': get('output.dir', 'out'),
        'settings': get('experiment.settings', DEFAULT_SETTINGS),
        'sweep_M': get('experiment.sweep_M', (100000, 200000, 400000)),
        'simulation_t': get('simulation.t'),
        'simulation_M': get('simulation.M'),
        'simulation_bins': get('simulation.bins', 40),
        'oracle_T': get('oracle.T', 3),
        'oracle_points': get('oracle.points', 801),
        'oracle_order': get('oracle.order', 48),
        'oracle_tolerance': get('oracle.tolerance', 0.01),
        'source': text,
    }
    cfg = _build(found, '', lambda: ExperimentConfig(**kwargs))
    logger.debug('parsed %d config keys', len(found))
    return cfg
