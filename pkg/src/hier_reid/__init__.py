"""Two-stage person re-identification.

Gallery candidates are first pruned by clustering part-wise color histograms;
the survivors are then scored by a part-based siamese network on average
silhouettes.
"""

__version__ = "0.1.0"

from .clustering import ColorKMeans, clustering_error, elbow_curve, fit_kmeans
from .descriptors import (
    ColorDescriptor,
    FeatureMatrix,
    build_feature_matrix,
    frame_descriptor,
    sequence_descriptor,
)
from .matcher import HierarchicalMatcher, MatchResult, load_gallery, save_gallery
from .siamese import (
    PartSiameseNet,
    SiameseConfig,
    forward_pair,
    init_model,
    load_checkpoint,
    save_checkpoint,
    similarity,
)
from .silhouette import (
    NormalizedSilhouette,
    RGBFrame,
    average_silhouette,
    extract_silhouette,
    normalize,
    split_parts,
)
from .training import TrainConfig, TrainReport, train

__all__ = [
    "__version__",
    "ColorDescriptor",
    "ColorKMeans",
    "FeatureMatrix",
    "HierarchicalMatcher",
    "MatchResult",
    "NormalizedSilhouette",
    "PartSiameseNet",
    "RGBFrame",
    "SiameseConfig",
    "TrainConfig",
    "TrainReport",
    "average_silhouette",
    "build_feature_matrix",
    "clustering_error",
    "elbow_curve",
    "extract_silhouette",
    "fit_kmeans",
    "forward_pair",
    "frame_descriptor",
    "init_model",
    "load_checkpoint",
    "load_gallery",
    "normalize",
    "save_checkpoint",
    "save_gallery",
    "sequence_descriptor",
    "similarity",
    "split_parts",
    "train",
]
