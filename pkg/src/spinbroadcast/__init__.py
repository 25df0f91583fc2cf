"""Broadcasting of information from a spin register into a spin environment.

Closed-form overlap and decoherence factors, an exact density-matrix
simulator to check them against, ensemble statistics for large environments,
decoherence-free subspace analysis and coupling geometries.
"""
from . import factors, geometry, model, oracle, stats, structure
from .model import CentralState, CouplingMatrix, EnvSpin, Partition, RegisterLabel, make_partition

__version__ = "0.1.0"

__all__ = [
    "factors",
    "geometry",
    "model",
    "oracle",
    "stats",
    "structure",
    "CentralState",
    "CouplingMatrix",
    "EnvSpin",
    "Partition",
    "RegisterLabel",
    "make_partition",
]
