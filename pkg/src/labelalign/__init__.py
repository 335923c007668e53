"""Label-alignment regularization for unsupervised domain adaptation with linear models."""

__version__ = "0.1.0"

from .adapt import (  # noqa: E402
    AdaptConfig,
    RegularizedProblem,
    SolutionReport,
    fit_closed_form,
    fit_gd,
    objective_gradient,
    objective_value,
    source_least_squares,
    target_oracle,
)
from .alignment import alignment_profile, k_epsilon, projection_energy  # noqa: E402
from .spectral import DesignMatrix, SpectralDecomposition, decompose  # noqa: E402

__all__ = [
    "AdaptConfig",
    "DesignMatrix",
    "RegularizedProblem",
    "SolutionReport",
    "SpectralDecomposition",
    "alignment_profile",
    "decompose",
    "fit_closed_form",
    "fit_gd",
    "k_epsilon",
    "objective_gradient",
    "objective_value",
    "projection_energy",
    "source_least_squares",
    "target_oracle",
]
