"""Sparse log-contrast regression for compositional covariates on row-partitioned data.

Solvers: single-machine CDMM (:func:`fit_gcdmm`), one-shot averaging
(:func:`fit_acdmm`), master-worker consensus (:func:`fit_dscdmm`) and the
decentralized chain solver (:func:`fit_dsgcdmm`).
"""

__version__ = "0.1.0"

from .baseline import fit_acdmm, fit_gcdmm
from .core import (LogContrastDesign, PenaltySpec, Shard, ShardedDataset, build_design, load_design,
                   partition, penalty_weights, scad_derivative, soft_threshold)
from .dscdmm import fit_dscdmm
from .dsgcdmm import ChainTopology, fit_dsgcdmm
from .errors import (DomainError, LogContrastError, NumericalError, ParameterError, ShapeError, SimplexError,
                     TopologyError, TuningError, UsageError)
from .results import FitResult, SolverConfig
from .tuning import gic, lambda_grid, select_lambda

__all__ = [
    "ChainTopology", "DomainError", "FitResult", "LogContrastDesign", "LogContrastError", "NumericalError",
    "ParameterError", "PenaltySpec", "Shard", "ShardedDataset", "ShapeError", "SimplexError", "SolverConfig",
    "TopologyError", "TuningError", "UsageError", "build_design", "fit_acdmm", "fit_dscdmm", "fit_dsgcdmm",
    "fit_gcdmm", "gic", "lambda_grid", "load_design", "partition", "penalty_weights", "scad_derivative",
    "select_lambda", "soft_threshold",
]
