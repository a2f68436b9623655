"""Finite-dimensional Krein-space toolkit for abstract Klein-Gordon operators."""

__version__ = "0.1.0"

from .errors import (AccuracyError, ConditioningError, ConfigError, ConsistencyError,
                     ContourError, HorizonError, InputError, KreinError, PreconditionError,
                     ResolventSetError, SamplingError, SplittingError, StructuralError)
from .krein import KreinOperator, KreinSpace
from .operators import KGPair, build_H, build_K, build_Phi
