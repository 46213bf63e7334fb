"""Adversarially robust streaming via importance sampling with fresh coins."""
from .coreset import ClusteringConfig, CoresetTree, WeightedPoints, lloyd_refine, offline_coreset
from .graph import SparsifierConfig, StreamingSparsifier, global_min_cut, sparsifier_check, strong_connectivity
from .sampler import RowSampler, SamplerConfig

__all__ = [
    "ClusteringConfig",
    "CoresetTree",
    "RowSampler",
    "SamplerConfig",
    "SparsifierConfig",
    "StreamingSparsifier",
    "WeightedPoints",
    "global_min_cut",
    "lloyd_refine",
    "offline_coreset",
    "sparsifier_check",
    "strong_connectivity",
]
