"""Kernel mean estimation with marginalized (corruption-aware) kernels."""

from .estimators import (
    BASE_KINDS,
    KINDS,
    EstimatorParams,
    MeanEstimate,
    fit,
    fit_kme,
    fit_linear_mkme,
    fit_linear_mmkme,
    fit_marginalized,
    fit_shrinkage,
    inner_product,
    select_params,
    squared_distance,
)
from .kernels import CorruptionModel, gram, marginal_gram, median_heuristic, rbf
from .mmd import mmd2_marginalized, mmd2_unbiased, two_sample_test
from .hsic import hsic_statistic, independence_test
from .density import GaussianMixture, kde_pipeline, kmeans

__all__ = [
    "BASE_KINDS", "KINDS", "CorruptionModel", "EstimatorParams", "GaussianMixture", "MeanEstimate",
    "fit", "fit_kme", "fit_linear_mkme", "fit_linear_mmkme", "fit_marginalized", "fit_shrinkage",
    "gram", "hsic_statistic", "independence_test", "inner_product", "kde_pipeline", "kmeans",
    "marginal_gram", "median_heuristic", "mmd2_marginalized", "mmd2_unbiased", "rbf",
    "select_params", "squared_distance", "two_sample_test",
]
