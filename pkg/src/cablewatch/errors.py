"""Exception types shared across the package."""


class CableWatchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CableWatchError):
    """An array argument has the wrong rank or an incompatible axis length."""


class ConfigError(CableWatchError):
    """A configuration value is outside its legal range."""


class DataError(CableWatchError):
    """Input data is malformed or inconsistent with its declared layout."""


class UsageError(CableWatchError):
    """An API was called in an unsupported way (bad cache, bad index, ...)."""


class TrainingError(CableWatchError):
    """Training could not proceed."""


class NonFiniteLossError(TrainingError):
    """Loss or a gradient became NaN/inf during training.

    Carries the best parameters seen so far plus the partial history so a
    caller can still write a checkpoint and the learning curve.
    """

    def __init__(self, message, epoch=None, best_params=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.best_params = best_params
        self.history = history
