"""Exception types raised across the toolkit."""


class LdpError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(LdpError, ValueError):
    """A Galerkin state contains non-finite coefficients."""


class DimensionError(LdpError, ValueError):
    """Mismatched bases, mode counts or array shapes."""


class ParameterError(LdpError, ValueError):
    """A numerical parameter is outside its admissible range."""


class DomainError(LdpError, ValueError):
    """An argument lies outside the domain of a function (negative intensity, unknown mark)."""


class BlowUpError(LdpError, RuntimeError):
    """A trajectory left the finite regime.

    Attributes
    ----------
    t : float
        Time at which the blow-up was detected.
    """

    def __init__(self, message, t):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = float(t)


class ConfigError(LdpError, ValueError):
    """A run configuration failed validation.

    ``errors`` holds every problem found, each prefixed by its ``section.key`` location.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
