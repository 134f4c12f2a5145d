"""Exception types raised across the package."""


class DasfError(Exception):
    """Base class for all package errors."""


class ShapeError(DasfError, ValueError):
    """Array dimensions do not conform to the network or problem."""


class CapabilityError(DasfError, TypeError):
    """The problem or solver lacks a required capability (prox, projection, ...)."""


class DegeneratePointError(DasfError, ValueError):
    """An operation is undefined at the given point, e.g. projecting x = 0."""


class DeclaredSignalError(DasfError, KeyError):
    """A signal name was requested that the source does not declare."""


class InsufficientSamplesError(DasfError, ValueError):
    pass


class IncompleteAggregationError(DasfError, ValueError):
    """A payload from some non-updating node is missing."""


class CurvatureError(DasfError, ArithmeticError):
    """Hessian is not positive definite."""


class FactorizationError(DasfError, ArithmeticError):
    pass


class NumericalError(DasfError, ArithmeticError):
    pass


class PreconditionError(DasfError, ValueError):
    pass


class UndefinedMetricError(DasfError, ZeroDivisionError):
    pass


class CertificateUnavailableError(DasfError, ValueError):
    pass


class SolverDivergenceError(DasfError, ArithmeticError):
    """The local solver produced a non-finite objective.

    The partially completed DASF state is available as ``state``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(DasfError, ValueError):
    """Invalid scenario configuration; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        text = f"{message} ({', '.join(where)})" if where else message
        super().__init__(text)
        self.field = field
        self.line = line
