"""Exception hierarchy shared by every curveflow module."""


class CurveflowError(Exception):
    """Base class for all curveflow errors."""


class GridMismatch(CurveflowError):
    pass


class RankMismatch(CurveflowError):
    pass


class SingularMetric(CurveflowError):
    """A metric failed positive-definiteness at some node."""

    def __init__(self, message, node=None, eigenvalue=None):
        super().__init__(message)
        self.node = node
        self.eigenvalue = eigenvalue


class NonInvertibleEinstein(CurveflowError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DefinitenessViolated(CurveflowError):
    def __init__(self, message, node=None, eigenvalue=None):
        super().__init__(message)
        self.node = node
        self.eigenvalue = eigenvalue


class LostPositivity(SingularMetric):
    pass


class NonFinite(CurveflowError):
    pass


class OutOfRange(CurveflowError, ValueError):
    pass


class ConfigError(CurveflowError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
