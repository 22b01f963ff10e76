"""Exception hierarchy shared by all modules."""


class LpvFrdError(Exception):
    """Base class for domain failures (mapped to exit code 1 by the CLI)."""


# data ingestion
class MissingCell(LpvFrdError, ValueError):
    pass


class NonMonotoneGrid(LpvFrdError, ValueError):
    pass


class NanSample(LpvFrdError, ValueError):
    pass


class UnknownChannel(LpvFrdError, KeyError):
    pass


# state-space machinery
class NonFiniteExponential(LpvFrdError, ArithmeticError):
    pass


class SingularResolvent(LpvFrdError, ArithmeticError):
    pass


class NotStabilizable(LpvFrdError):
    pass


class NotDetectable(LpvFrdError):
    pass


class ResidualTooLarge(LpvFrdError):
    pass


class OutOfRange(LpvFrdError, ValueError):
    pass


# conic solver
class IllFormedProgram(LpvFrdError, ValueError):
    pass


class NumericalBreakdown(LpvFrdError, ArithmeticError):
    """Interior-point iteration could not continue; ``x`` is the last iterate (scaled back by tau)."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


# synthesis / analysis
class InfeasibleAtUpperBound(LpvFrdError):
    def __init__(self, message, gamma=None, best_slack=None):
        super().__init__(message)
        self.gamma = gamma
        self.best_slack = best_slack


class NearOrigin(LpvFrdError, ArithmeticError):
    pass


class GridTooCoarse(LpvFrdError):
    pass


class UnsupportedBasis(LpvFrdError, NotImplementedError):
    pass


class Divergence(LpvFrdError, ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
