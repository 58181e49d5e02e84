"""
Error classes raised by the localization services.

Every error carries the process exit code the CLI reports for it:
1 usage/config, 2 data, 3 degenerate filter.
"""


class LocalizationError(Exception):
    """Base class for all reportable engine errors."""

    exit_code: int = 2


class ConfigError(LocalizationError):
    """Run configuration could not be parsed or validated."""

    exit_code = 1


class InvalidArgumentError(LocalizationError):
    """An operation precondition was violated."""


class IllConditionedLogError(LocalizationError):
    """SE(2) logarithm requested at |theta| = pi."""


class DataError(LocalizationError):
    """Input data is missing or unusable."""


class AssociationError(DataError):
    """Estimated and ground-truth timestamps do not match."""


class ContainerError(DataError):
    """Feature-map container could not be decoded."""


class ContainerMagicError(ContainerError):
    pass


class ContainerVersionError(ContainerError):
    pass


class ContainerTruncatedError(ContainerError):
    pass


class ContainerValueError(ContainerError):
    """Container payload or geo-transform holds invalid values."""


class DegenerateWeightsError(LocalizationError):
    """Every particle weight vanished after an update."""

    exit_code = 3
