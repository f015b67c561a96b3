"""Exception hierarchy shared by all kolmo modules."""


class KolmoError(Exception):
    """Base class for library errors."""


class InputError(KolmoError, ValueError):
    """Malformed or non-finite input."""


class DegeneracyError(KolmoError):
    """The spherical measure fails the non-degeneracy requirement."""


class ResolutionError(KolmoError):
    """A grid is too coarse or too small for the requested accuracy."""

    def __init__(self, message, suggested_spacing=None):
        super().__init__(message)
        self.suggested_spacing = suggested_spacing


class NegativeDensityError(KolmoError):
    """Fourier inversion produced clearly negative density values."""


class DomainError(KolmoError, ValueError):
    """A parameter lies outside the range where a quantity is finite."""


class AssumptionError(KolmoError, ValueError):
    """Model parameters violate the standing structural assumptions."""


class ContractionError(KolmoError):
    """Picard iterates stopped contracting."""

    def __init__(self, message, factor=None, history=None):
        super().__init__(message)
        self.factor = factor
        self.history = history


class ConfigError(KolmoError, ValueError):
    """Invalid run configuration."""
