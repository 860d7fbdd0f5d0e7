"""Exception hierarchy.

The intermediate classes group errors by the CLI exit code they map to.
"""


class NpDnnError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(NpDnnError, ValueError):
    """Invalid configuration or hyperparameters (exit code 2)."""


class DataError(NpDnnError, ValueError):
    """Input data violates a precondition (exit code 4)."""


class TrainingError(NpDnnError, RuntimeError):
    """Training could not complete (exit code 5)."""


class TuningError(NpDnnError, RuntimeError):
    """Hyperparameter search produced no usable trial (exit code 6)."""


class ModelFormatError(NpDnnError, ValueError):
    """A model file cannot be read back (exit code 7)."""


class MalformedCsv(DataError):
    pass


class BadDate(DataError):
    pass


class NonMonotonicDates(DataError):
    pass


class TooFewObservations(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class MissingEndpoint(DataError):
    pass


class ZeroVariance(DataError):
    pass


class LengthMismatch(DataError):
    pass


class BadSpec(ConfigError):
    pass


class BadHyperparams(ConfigError):
    pass


class BadArchitecture(ConfigError):
    pass


class DimensionMismatch(NpDnnError, ValueError):
    pass


class LossActivationMismatch(NpDnnError, ValueError):
    pass


class DivergedLoss(TrainingError):
    pass


class EmptySpace(ConfigError):
    pass


class InconsistentHistory(NpDnnError, ValueError):
    pass


class AllTrialsFailed(TuningError):
    pass


class UnsupportedVersion(ModelFormatError):
    pass


class CorruptModel(ModelFormatError):
    pass

