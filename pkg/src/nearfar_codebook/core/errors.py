"""
Exception hierarchy for the near/far-field codebook simulator.

ConfigError subclasses are raised for bad inputs (CLI exit code 2),
NumericalError subclasses for numerical breakdowns (CLI exit code 3).
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by nearfar_codebook"""


#####################
#   CONFIG ERRORS   #
#####################

class ConfigError(SimulationError, ValueError):
    """Invalid parameters, bounds or configuration"""


class NonPositiveParameter(ConfigError):
    pass


class InconsistentBounds(ConfigError):
    pass


class PilotBudgetExceeded(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class UnknownPreset(ConfigError):
    pass


class EmptyTrainingSet(ConfigError):
    pass


#####################
# NUMERICAL ERRORS  #
#####################

class NumericalError(SimulationError, ArithmeticError):
    """A computation could not produce a meaningful result"""


class SourceOnArray(NumericalError):
    pass


class NoProgress(NumericalError):
    pass


class ZeroReference(NumericalError):
    pass


class SingularChannel(NumericalError):
    pass


class RankDeficientEffectiveChannel(NumericalError):
    pass


class InsufficientFeedback(NumericalError):
    pass


class TrialFailure(NumericalError):
    """Wraps an error raised inside one Monte Carlo trial"""

    def __init__(self, trial_index: int, cause: Exception, snr_db: Optional[float] = None):
        self.trial_index = trial_index
        self.cause = cause
        self.snr_db = snr_db
        where = f"trial {trial_index}" if snr_db is None else f"trial {trial_index} at {snr_db:g} dB"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")


#####################
#   OTHER ERRORS    #
#####################

class IndexOutOfRange(SimulationError, IndexError):
    pass


class IoFailure(SimulationError, OSError):
    pass
