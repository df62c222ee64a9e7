"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class ScadeError(Exception):
    exit_code = 5
    stage = "internal"

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class ConfigError(ScadeError):
    exit_code = 2
    stage = "config"


class DataError(ScadeError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 3
    stage = "data"


class CorpusQualityError(DataError):
    """More than half of the input lines failed to parse."""


class PayloadError(DataError):
    pass


class ConsistencyError(DataError):
    """A document or statistic does not agree with its corpus model."""


class CoverageError(DataError):
    pass


class CalibrationError(ScadeError):
    exit_code = 4
    stage = "threshold"
