"""Exception hierarchy shared by all heatstab modules."""


class HeatStabError(Exception):
    """Base class for every error raised by heatstab."""


class ConfigurationError(HeatStabError, ValueError):
    """Invalid model or experiment configuration."""


class InputError(HeatStabError, ValueError):
    """Invalid numerical input (e.g. non-finite potential values)."""


class DomainError(HeatStabError, ValueError):
    """Argument outside the domain of an operation (negative time, bad M)."""


class ResolutionError(HeatStabError):
    """The grid cannot resolve the requested quantity."""


class DegeneracyError(HeatStabError):
    """Restricted eigenvectors are numerically dependent on the mask."""


class ConvergenceError(HeatStabError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(HeatStabError, ValueError):
    """Hypotheses of an estimate are violated."""


class DivergenceError(HeatStabError):
    """A simulated trajectory became non-finite or exceeded the divergence guard."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
