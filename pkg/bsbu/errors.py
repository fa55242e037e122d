"""Exceptions raised by the bsbu package."""


class BsbuError(Exception):
    """Base class for every error raised by bsbu"""


class ValidationError(BsbuError, ValueError):
    """An input value violates a documented precondition"""


class InfeasibleActionError(ValidationError):
    """An action is not a member of the feasible set A_t(x)"""

    def __init__(self, t, action, feasible, constraint=None):
        self.t = t
        self.action = action
        self.feasible = feasible
        self.constraint = constraint or 'a in A_t(x)'
        super(InfeasibleActionError, self).__init__(
            'Infeasible action %s at t=%d: violates %s (feasible set %s)' %
            (action, t, self.constraint, feasible))

    def __reduce__(self):
        return (type(self), (self.t, self.action, self.feasible,
                             self.constraint))


class DomainRangeError(ValidationError):
    """A point lies outside the domain a function is defined on"""


class ConfigParseError(ValidationError):
    """A configuration document could not be turned into a config"""

    def __init__(self, key, line, reason):
        self.key = key
        self.line = line
        self.reason = reason
        super(ConfigParseError, self).__init__(
            'line %s, key %r: %s' % (line, key, reason))

    def __reduce__(self):
        return (type(self), (self.key, self.line, self.reason))


class ConfigurationError(BsbuError):
    """The model is configured in a way the solvers cannot use"""


class ContractViolationError(BsbuError):
    """A caller broke the contract of an operation"""


class SolverFailureError(BsbuError):
    """The quadratic programme did not converge"""

    def __init__(self, message, residual=None, iterations=None):
        self.message = message
        self.residual = residual
        self.iterations = iterations
        super(SolverFailureError, self).__init__(
            '%s (kkt residual %s after %s iterations)' %
            (message, residual, iterations))

    def __reduce__(self):
        return (type(self), (self.message, self.residual, self.iterations))


class MissingSliceError(BsbuError):
    """A value estimate has no fit for a requested discrete slice"""


class NumericError(BsbuError):
    """Non-finite numbers appeared in a numerical routine"""

    def __init__(self, message, nodes=None):
        self.message = message
        self.nodes = nodes
        super(NumericError, self).__init__(
            message if nodes is None else '%s; nodes: %s' % (message, nodes))

    def __reduce__(self):
        return (type(self), (self.message, self.nodes))


class RepeatFailedError(BsbuError):
    """One repeat of an experiment failed"""

    def __init__(self, repeat, cause):
        self.repeat = repeat
        self.cause = cause
        super(RepeatFailedError, self).__init__(
            'repeat %d failed: %s: %s' % (repeat, type(cause).__name__, cause))

    def __reduce__(self):
        return (type(self), (self.repeat, self.cause))
