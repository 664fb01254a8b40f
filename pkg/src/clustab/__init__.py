"""Clustering stability analysis for financial time series under data perturbations."""

__version__ = "0.1.0"

from .clustering import Dendrogram, Partition, cut_at_height, cut_to_k, wpgma_linkage
from .data import (
    PricePanel,
    SyntheticSpec,
    VariationMatrix,
    impute_proxy,
    load_csv,
    synthesize,
    variations,
)
from .distances import (
    DistanceMatrix,
    HazardCurve,
    euclidean_distance,
    gnpr_distance,
    hellinger_sq,
    pearson_distance,
    spearman_distance,
    spreads_to_hazard,
    term_structure_distance,
)
from .stability import StabilityReport, ari, contingency, mean_correlation_series, run_experiment

__all__ = [
    "DistanceMatrix",
    "Dendrogram",
    "HazardCurve",
    "Partition",
    "PricePanel",
    "StabilityReport",
    "SyntheticSpec",
    "VariationMatrix",
    "ari",
    "contingency",
    "cut_at_height",
    "cut_to_k",
    "euclidean_distance",
    "gnpr_distance",
    "hellinger_sq",
    "impute_proxy",
    "load_csv",
    "mean_correlation_series",
    "pearson_distance",
    "run_experiment",
    "spearman_distance",
    "spreads_to_hazard",
    "synthesize",
    "term_structure_distance",
    "variations",
    "wpgma_linkage",
]
