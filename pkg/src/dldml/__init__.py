"""Deterministic lateral displacement: flow, particle tracing, datasets and surrogates."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DataError, DldError, IntegrationFault, ModelError,
                     OutOfDomainError, ParseError, SolverError, StratificationError)
from .geometry import (DldDesign, PostArray, build_post_array, critical_diameter_davis,
                       critical_diameter_inglis, row_shift_fraction)

__all__ = [
    "ConfigurationError", "DataError", "DldDesign", "DldError", "IntegrationFault",
    "ModelError", "OutOfDomainError", "ParseError", "PostArray", "SolverError",
    "StratificationError", "build_post_array", "critical_diameter_davis",
    "critical_diameter_inglis", "row_shift_fraction",
]
