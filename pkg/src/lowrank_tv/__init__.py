"""Low-rank probability matrix and multi-view density estimation in total variation."""

from lowrank_tv.linalg import (
    bracket_norm,
    entrywise_l1_distance,
    operator_norm,
    soft_threshold_singular_values,
    svd,
)
from lowrank_tv.discrete import (
    Alg1Params,
    DyadicBlocks,
    FrequencyMatrix,
    build_dyadic_blocks,
    histogram_estimate,
    localized_svd_estimate,
    localized_svd_fit,
    oracle_blocks,
    split_and_histogram,
)
from lowrank_tv.density import (
    DensityParams,
    PiecewiseDensity1D,
    PiecewiseDensity2D,
    alg2_density_2d,
    alg3_density_1d,
    choose_k_prime,
)

__version__ = "0.1.0"

__all__ = [
    "Alg1Params",
    "DensityParams",
    "DyadicBlocks",
    "FrequencyMatrix",
    "PiecewiseDensity1D",
    "PiecewiseDensity2D",
    "alg2_density_2d",
    "alg3_density_1d",
    "bracket_norm",
    "build_dyadic_blocks",
    "choose_k_prime",
    "entrywise_l1_distance",
    "histogram_estimate",
    "localized_svd_estimate",
    "localized_svd_fit",
    "operator_norm",
    "oracle_blocks",
    "soft_threshold_singular_values",
    "split_and_histogram",
    "svd",
]
