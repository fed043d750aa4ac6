"""Variational estimation of quantum relative entropies from Gauss-Radau-Jacobi quadrature.

The exact spectral oracles live in :mod:`entroq.divergences`, the trainable
estimators in :mod:`entroq.vqa` and the two-device harness in
:mod:`entroq.distributed`.
"""
from ._accel import NUMBA_ENABLED, backend_name
from .divergences import ft_divergence_exact, petz_renyi, quadrature_divergence, relative_entropy
from .errors import DomainError, EntroqError, EstimationError, TrainingError, ValidationError
from .quadrature import QuadratureRule, grj_rule
from .states import DensityMatrix, PureState, random_marginal_state, random_mixed_state, seeded_pair
from .vqa import FtConfig, estimate_ft, estimate_petz, estimate_relative_entropy

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend_name", "ft_divergence_exact", "petz_renyi", "quadrature_divergence",
    "relative_entropy", "DomainError", "EntroqError", "EstimationError", "TrainingError", "ValidationError",
    "QuadratureRule", "grj_rule", "DensityMatrix", "PureState", "random_marginal_state", "random_mixed_state",
    "seeded_pair", "FtConfig", "estimate_ft", "estimate_petz", "estimate_relative_entropy", "__version__",
]
