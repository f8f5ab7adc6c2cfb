"""qergo: a desk-scale laboratory for quasi-stationarity and quasi-ergodicity
of sub-Markov kernel semigroups on finite state spaces."""

from .errors import (
    ClassifierError,
    DegenerateSupportError,
    FitError,
    ModelError,
    NondegeneracyError,
    NonuniquenessWarning,
    PositivityError,
)
from .operators import KernelOperator, MarkovModel
from .spectral import SpectralData, principal_triple
from .statespace import ExhaustingFamily, StateSpace

__version__ = "0.1.0"

__all__ = [
    "StateSpace",
    "ExhaustingFamily",
    "MarkovModel",
    "KernelOperator",
    "SpectralData",
    "principal_triple",
    "ModelError",
    "NondegeneracyError",
    "PositivityError",
    "DegenerateSupportError",
    "FitError",
    "ClassifierError",
    "NonuniquenessWarning",
    "__version__",
]
