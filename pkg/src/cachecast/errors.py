"""Exception hierarchy shared by every stage of the pipeline."""


class CacheCastError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CacheCastError):
    pass


class NonIntegerT(ConfigError):
    pass


class NonIntegerPartition(ConfigError):
    pass


class LibraryTooSmall(ConfigError):
    pass


class NonIntegerTxCache(ConfigError):
    pass


class TrivialFullCache(ConfigError):
    pass


class ConfigParseError(ConfigError):
    pass


class SizeMismatch(CacheCastError):
    pass


class ChannelDegenerate(CacheCastError):
    pass


class SupportTooSmall(CacheCastError):
    pass


class DecodeFailure(CacheCastError):
    pass


class BudgetExceeded(CacheCastError):
    pass
