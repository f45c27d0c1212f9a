"""Gaussian noise stability of conical partitions: operators, searches and checks."""

from .errors import (
    NoiseStabilityError,
    InvalidParameterError,
    DimensionMismatchError,
    UnsupportedGeometryError,
    MethodUnavailableError,
    QuadratureError,
    TruncationError,
    EnumerationCapError,
    WitnessNotFoundError,
    ManifestError,
)
from .hermite import MultiIndex, HermiteSeries, hermite_eval, hermite_eval_multi, hermite_norm_sq
from .gauss import CorrelationParam, RandomSource, QuadratureGrid, sample_correlated_pair, tail_bound_check
from .partition import ConicalPartition, classify, barycenter_vector, psi_zero, d2_distance
from .stability import (
    T_rho_apply,
    L_apply,
    dT_drho,
    LT_rho_difference,
    noise_stability_J,
    psi_rho,
)
from .optimize import (
    sup_psi_zero_search,
    first_variation_check,
    perturbation_search_psi,
    negative_rho_witness,
    lemma5_stability_probe,
)
from .discrete import (
    KaryFunction,
    kary_basis,
    fourier_transform,
    discrete_T_rho,
    discrete_stability,
    plurality_fn,
    influence,
)
from .maxkcut import WeightedGraph, Embedding, alpha_k, maxkcut_bruteforce, relax_embed, round_conical
from .logger import setup_logger, set_run_context

__all__ = [
    "NoiseStabilityError",
    "InvalidParameterError",
    "DimensionMismatchError",
    "UnsupportedGeometryError",
    "MethodUnavailableError",
    "QuadratureError",
    "TruncationError",
    "EnumerationCapError",
    "WitnessNotFoundError",
    "ManifestError",
    "MultiIndex",
    "HermiteSeries",
    "hermite_eval",
    "hermite_eval_multi",
    "hermite_norm_sq",
    "CorrelationParam",
    "RandomSource",
    "QuadratureGrid",
    "sample_correlated_pair",
    "tail_bound_check",
    "ConicalPartition",
    "classify",
    "barycenter_vector",
    "psi_zero",
    "d2_distance",
    "T_rho_apply",
    "L_apply",
    "dT_drho",
    "LT_rho_difference",
    "noise_stability_J",
    "psi_rho",
    "sup_psi_zero_search",
    "first_variation_check",
    "perturbation_search_psi",
    "negative_rho_witness",
    "lemma5_stability_probe",
    "KaryFunction",
    "kary_basis",
    "fourier_transform",
    "discrete_T_rho",
    "discrete_stability",
    "plurality_fn",
    "influence",
    "WeightedGraph",
    "Embedding",
    "alpha_k",
    "maxkcut_bruteforce",
    "relax_embed",
    "round_conical",
    "setup_logger",
    "set_run_context",
]
