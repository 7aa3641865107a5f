"""Exception hierarchy for the DLCZ pair-source simulation."""


class DlczSimError(Exception):
    """Base class for every error raised by this package."""


class ParameterValidationError(DlczSimError, ValueError):
    """A physical parameter is outside its allowed range."""


class TruncationError(DlczSimError):
    """Probability mass excluded by a photon-number cutoff exceeds the threshold."""


class UndefinedEstimateError(DlczSimError):
    """A normalized estimate was requested where its denominator is zero."""


class UnsortedEventsError(DlczSimError, ValueError):
    """An event stream is not ordered by (trial_index, time)."""


class ConfigError(DlczSimError):
    """A configuration text could not be turned into a valid Scenario."""

    def __init__(self, message: str, path: str = ""):
        """Initialize the error.

        Args:
            message: What is wrong
            path: Dotted path of the offending key, empty when not tied to one
        """
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EventFileError(DlczSimError):
    """An event file is malformed, unsorted or of an unsupported version."""

    def __init__(self, message: str, line: int = 0):
        """Initialize the error.

        Args:
            message: What is wrong
            line: 1-based line number in the file, 0 when not tied to one
        """
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class CalibrationError(DlczSimError):
    """The noise calibration fit did not converge."""


class ExportError(DlczSimError):
    """A report or table could not be written."""
