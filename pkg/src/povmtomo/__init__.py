"""Tomography of quantum states via generative modelling of IC-POVM statistics."""

from .backend import BACKEND, USE_NUMBA
from .povm import SingleQubitPOVM, ProbabilityTable, make_povm

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "SingleQubitPOVM",
    "ProbabilityTable",
    "make_povm",
    "__version__",
]
