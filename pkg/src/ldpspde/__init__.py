"""Small-noise large deviations of SPDEs with Lévy noise, at desk scale.

Spectral Galerkin models, skeleton and stochastic solvers, the variational rate
function and Monte Carlo experiments that check its predictions.
"""
from .errors import (BlowUpError, ConfigError, DimensionError, DomainError, InvalidStateError,
                     LdpError, ParameterError)
from ._stepping import uniform_grid
from .spaces import Basis, GalerkinState, dual_pair, norm, project

__version__ = "0.1.0"

__all__ = [
    "Basis", "GalerkinState", "norm", "dual_pair", "project", "uniform_grid",
    "LdpError", "InvalidStateError", "DimensionError", "ParameterError", "DomainError",
    "BlowUpError", "ConfigError",
]
