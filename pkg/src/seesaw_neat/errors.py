"""Exception types shared across the toolkit."""


class SeesawError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(SeesawError):
    """An array or vector had the wrong shape/length."""


class LengthMismatch(ShapeMismatch):
    """A flat vector did not match the expected length."""


class IncompatibleIO(SeesawError):
    """Two genomes do not share the same input/output node sets."""


class EmptyPopulation(SeesawError):
    """All species went extinct and reset-on-extinction is disabled."""


class BadConfig(SeesawError):
    """A configuration value is out of range or inconsistent."""


class ConfigError(BadConfig):
    """A run-config file failed to parse or validate.  Carries the offending field."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class FrameTooSmall(SeesawError):
    """Frame smaller than one attention patch."""


class NonFiniteFitness(SeesawError):
    """A fitness value was NaN or infinite."""


class EpisodeOver(SeesawError):
    """step() called after the episode terminated."""


class BadAction(SeesawError):
    """Action id outside the environment's discrete action range."""


class ProtocolError(SeesawError):
    """External environment child sent a malformed reply."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"field '{field}': {message}")
        self.field = field


class EnvTimeout(SeesawError):
    """External environment child did not reply in time."""


class EpisodeFailed(SeesawError):
    """Episode aborted (e.g. child process died); carries the fitness floor."""

    def __init__(self, message, floor):
        super().__init__(message)
        self.floor = floor


class IoMismatch(SeesawError):
    """Genome input/output counts disagree with observation/action sizes."""


class ModelEnvMismatch(SeesawError):
    """A saved model is incompatible with the requested environment."""


class ModelParseError(SeesawError):
    """A model file could not be parsed."""


class LedgerParseError(SeesawError):
    """A ledger file could not be parsed."""
