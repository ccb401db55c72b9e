"""Numerical kernels used by the objectives and the analysis layer."""

from .cluster import KMeansModel, kmeans_fit, pairwise_distances, silhouette
from .forest import ForestConfig, ForestModel, forest_fit, forest_oob_accuracy, forest_predict, forest_votes
from .linear import LinearModel, PcaModel, ols_fit, ols_predict, pca_fit, pca_project

__all__ = [
    "KMeansModel",
    "kmeans_fit",
    "pairwise_distances",
    "silhouette",
    "ForestConfig",
    "ForestModel",
    "forest_fit",
    "forest_predict",
    "forest_votes",
    "forest_oob_accuracy",
    "LinearModel",
    "PcaModel",
    "ols_fit",
    "ols_predict",
    "pca_fit",
    "pca_project",
]
