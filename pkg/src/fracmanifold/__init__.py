"""Mittag-Leffler functions, matrix decompositions and local stable manifolds
for fractional systems ``D^p x = A x + f(x)``."""

from __future__ import annotations

from .exceptions import (
    DivergedTrajectory,
    DomainError,
    FracManifoldError,
    InvalidInputError,
    NoContraction,
    NonConvergence,
    NonHyperbolic,
    NumericalFailure,
    SectorError,
    StepOverflow,
    TailNotDecaying,
)
from .jordan import JordanBlock, JordanSystem
from .manifold import (
    QuadratureSpec,
    TrajectoryGrid,
    VectorField,
    manifold_map,
    solve_extrapolated,
    solve_fixed_point,
    verify_unstable_decay,
)
from .mittag_leffler import MLParams, ml_branch_values, ml_eval, ml_lambda_derivative
from .spectral import SpectralSplit, build_split, classify

__version__ = "0.1.0"

__all__ = [
    "DivergedTrajectory",
    "DomainError",
    "FracManifoldError",
    "InvalidInputError",
    "JordanBlock",
    "JordanSystem",
    "MLParams",
    "NoContraction",
    "NonConvergence",
    "NonHyperbolic",
    "NumericalFailure",
    "QuadratureSpec",
    "SectorError",
    "SpectralSplit",
    "StepOverflow",
    "TailNotDecaying",
    "TrajectoryGrid",
    "VectorField",
    "build_split",
    "classify",
    "manifold_map",
    "ml_branch_values",
    "ml_eval",
    "ml_lambda_derivative",
    "solve_extrapolated",
    "solve_fixed_point",
    "verify_unstable_decay",
]
