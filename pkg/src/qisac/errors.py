"""Exception types raised across the package."""


class QisacError(ValueError):
    """Base class for invalid inputs to the simulator."""


class InvalidDimensionError(QisacError):
    pass


class InvalidArgumentError(QisacError):
    pass


class InvalidMessageError(QisacError):
    pass


class OraclePreconditionError(QisacError):
    pass


class UnsupportedAnsatzError(QisacError):
    pass


class ConfigError(QisacError):
    """Raised for unknown keys, wrong types or violated constraints in a run config."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
