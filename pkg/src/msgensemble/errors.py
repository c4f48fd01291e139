"""Exception types shared across the package."""


class MsgEnsembleError(Exception):
    """Base class for all package errors."""


class InvalidRangeError(MsgEnsembleError, ValueError):
    """An argument is outside its documented range."""


class ConditionViolatedError(MsgEnsembleError, ValueError):
    """A required certificate condition does not hold for the given config."""


class DimensionMismatchError(MsgEnsembleError, ValueError):
    """Vector arguments disagree on dimension."""


class BudgetExceededError(MsgEnsembleError, RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""


class EpisodeFinishedError(MsgEnsembleError, RuntimeError):
    """step() was called on an environment whose episode is already done."""


class ConfigError(MsgEnsembleError, ValueError):
    """An experiment configuration failed validation."""
