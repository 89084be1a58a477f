"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ModelError -> 4.
"""


class SilatentError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SilatentError):
    """Invalid or missing configuration."""


class DataError(SilatentError):
    """Dataset violates a precondition (wrong composition, empty split, ...)."""


class ModelError(SilatentError):
    """Model artifact problem (missing anchor, incompatible bundle, ...)."""


class CorruptModelError(ModelError):
    """Model file failed structural validation."""


class ModelVersionError(ModelError):
    """Model file carries an unsupported format version."""
