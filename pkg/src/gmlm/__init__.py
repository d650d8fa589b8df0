"""Generalized multi-linear models for sufficient dimension reduction of tensor predictors."""
from .core import (Dataset, DegenerateFitError, FitResult, GmlmParams, LogPartitionUnavailable,
                   gradients, log_likelihood, monomial_design, normalize, scalar_design,
                   sufficient_reduction, trig_design)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DegenerateFitError", "FitResult", "GmlmParams", "LogPartitionUnavailable",
    "gradients", "log_likelihood", "monomial_design", "normalize", "scalar_design",
    "sufficient_reduction", "trig_design", "__version__",
]
