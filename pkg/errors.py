class SyncError(Exception):
    """Base class for every error raised by this project."""


class ConfigError(SyncError, ValueError):
    """Invalid experiment configuration or command-line input."""


class GraphError(ConfigError):
    """Invalid graph: self-loops, duplicates, bad indices, disconnected, bad edge-list syntax."""


class NumericalError(SyncError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class SpectralError(NumericalError):
    """Matrix is not a valid (connected) graph Laplacian."""


class IntegrationError(NumericalError):
    """The integrated state stopped being finite."""


class ConvergenceError(NumericalError):
    """Fixed point iteration did not converge."""


class ThresholdSearchError(NumericalError):
    """
    Threshold search could not be carried out, e.g. the existence oracle is
    not monotone over the requested coupling interval.
    The full probe table is attached for inspection.
    """
    def __init__(self, message: str, probes=None):
        super().__init__(message)
        self.probes = probes
