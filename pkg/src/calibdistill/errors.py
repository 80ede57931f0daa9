"""Exception types raised across the package."""


class CalibDistillError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CalibDistillError, ValueError):
    """Invalid hyper-parameters, specs or experiment configuration."""


class InputError(CalibDistillError, ValueError):
    """Arrays with the wrong shape, range or dtype."""


class FormatError(CalibDistillError, ValueError):
    """Malformed file on disk (CIFAR binary, checkpoint, summary)."""


class UsageError(CalibDistillError, RuntimeError):
    """API called in the wrong order, e.g. backward without a train-mode forward."""


class NumericError(CalibDistillError, FloatingPointError):
    """Non-finite activations, losses or gradients.

    ``checkpoint`` holds the last good parameter list when the error is raised
    from inside a training loop.
    """

    def __init__(self, message, checkpoint=None, diagnostics=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.diagnostics = diagnostics or {}
