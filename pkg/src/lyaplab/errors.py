"""Exception hierarchy shared by all lyaplab modules."""


class LyapLabError(Exception):
    """Base class for every error raised by lyaplab."""


class DivisionByZero(LyapLabError, ZeroDivisionError):
    pass


class PrecisionLoss(LyapLabError, ArithmeticError):
    """A p-adic result has no significant digits left at the working precision."""


class NumericalFailure(LyapLabError, ArithmeticError):
    """Iteration cap reached or a non-finite value appeared.

    ``trial`` identifies the offending trial (and ``seed`` its stream key) when
    the failure happened inside a simulated product.
    """

    def __init__(self, message, trial=None, seed=None, bracket=None):
        super().__init__(message)
        self.trial = trial
        self.seed = seed
        self.bracket = bracket


class SingularMatrix(LyapLabError, ArithmeticError):
    pass


class InvalidGauge(LyapLabError, ValueError):
    pass


class InvalidMeasure(LyapLabError, ValueError):
    pass


class InvalidRep(LyapLabError, ValueError):
    pass


class TooLarge(LyapLabError, ValueError):
    pass


class Degenerate(LyapLabError, ValueError):
    """Fit impossible: not enough informative cells."""


class NotHyperbolic(LyapLabError, ValueError):
    pass


class ConstructionError(LyapLabError, RuntimeError):
    pass


class ConfigError(LyapLabError, ValueError):
    pass
