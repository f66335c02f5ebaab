"""Exception hierarchy shared by all modules."""


class ProxyDfmError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(ProxyDfmError):
    pass


class BalancedPanelError(ProxyDfmError):
    pass


class DomainError(ProxyDfmError, ValueError):
    pass


class StateError(ProxyDfmError):
    pass


class DimensionError(ProxyDfmError, ValueError):
    pass


class DegenerateSeriesError(ProxyDfmError, ValueError):
    pass


class RankError(ProxyDfmError):
    """Regressor cross-product is singular."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class RankDeficiencyError(ProxyDfmError):
    pass


class OverlapError(ProxyDfmError):
    pass


class WeakInstrumentError(ProxyDfmError):
    pass


class NormalizationError(ProxyDfmError):
    pass


class ParamError(ProxyDfmError, ValueError):
    pass


class ConfigError(ProxyDfmError, ValueError):
    pass


class ExcessFailuresError(ProxyDfmError):
    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
