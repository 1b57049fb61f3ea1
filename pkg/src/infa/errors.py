"""Exception hierarchy. Each family maps to one CLI exit code."""


class InfaError(Exception):
    exit_code = 1


class ConfigError(InfaError):
    """Parameters inconsistent with each other or with the data shape."""

    exit_code = 2


class DataError(InfaError):
    """Malformed or unusable input data."""

    exit_code = 3


class ComputeError(InfaError):
    """A pipeline stage failed or produced an invalid result."""

    exit_code = 4


class FormatError(DataError):
    pass


class ParseError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class DimensionError(DataError):
    pass


class DegenerateTrainingError(DataError):
    pass


class WindowTooLargeError(ConfigError):
    pass


class NoSegmentsError(ConfigError):
    pass


class InfeasibleKError(ConfigError):
    pass


class RepresentationInfeasibleError(ConfigError):
    pass
