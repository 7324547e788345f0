"""Geometric and numerical core of an SfM matching front-end."""

from .adalam import AdalamConfig, AffineModel, Neighborhood, SeedPoint, adalam_filter
from .ensemble import SourceTag, UnifiedKeypointTable, merge_keypoints, merge_matches
from .feature_head import Keypoint, decode_heatmap, extract_keypoints, sample_descriptors
from .losses import (batch_distance_matrix, hardneg_constant_loss, hardnet_loss,
                     hardnet_loss_grad)
from .matching import Match, MatchSet, mutual_nn_match
from .retrieval import (EXHAUSTIVE_CUTOFF, GlobalDescriptor, PairShortlist,
                        load_global_descriptors, pairwise_distances, shortlist_pairs)

__version__ = "0.1.0"

__all__ = [
    "AdalamConfig", "AffineModel", "Neighborhood", "SeedPoint", "adalam_filter",
    "SourceTag", "UnifiedKeypointTable", "merge_keypoints", "merge_matches",
    "Keypoint", "decode_heatmap", "extract_keypoints", "sample_descriptors",
    "batch_distance_matrix", "hardneg_constant_loss", "hardnet_loss", "hardnet_loss_grad",
    "Match", "MatchSet", "mutual_nn_match",
    "EXHAUSTIVE_CUTOFF", "GlobalDescriptor", "PairShortlist",
    "load_global_descriptors", "pairwise_distances", "shortlist_pairs",
]
