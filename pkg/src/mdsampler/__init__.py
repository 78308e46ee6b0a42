"""Multi-domain sampling with domain-based representations of a target.

The sampler partitions the state space by basin of attraction and by
density band, flattens the visits across that grid with adaptive weights,
and reports the domain weights and conditional expectations.
"""

__version__ = "0.1.0"

from .core import (MD, MD0, WL, DescentError, MultiDomainSampler, SamplerConfig, SamplerReport,
                   StateSpaceModel, run_burnin, run_sampler)
from .estimation import DomainRepresentation, DrAccumulator, EstimationError
from .kernels import BACKEND, get_backend

__all__ = [
    "__version__", "MD", "MD0", "WL", "DescentError", "EstimationError", "MultiDomainSampler",
    "SamplerConfig", "SamplerReport", "StateSpaceModel", "run_burnin", "run_sampler",
    "DomainRepresentation", "DrAccumulator", "BACKEND", "get_backend",
]
