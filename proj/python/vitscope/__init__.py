"""vitscope: a desk-scale workbench for probing a small CLIP-style ViT.

Generates a synthetic shapes dataset, trains a multi-label feature detector,
and exposes the analysis toolkit: Grad-CAM attribution, entropy-based
feature-neuron discovery, and superposition-vs-separability metrics.
"""

from vitscope._core import (
    Manifest,
    Model,
    TrainLogRow,
    VitscopeError,
    default_config_json,
    feature_index,
    feature_names,
    generate_dataset,
    pearson,
    run_pipeline,
    run_stage,
    shannon_entropy_bits,
    spearman,
)

__all__ = [
    "Manifest",
    "Model",
    "TrainLogRow",
    "VitscopeError",
    "default_config_json",
    "feature_index",
    "feature_names",
    "generate_dataset",
    "pearson",
    "run_pipeline",
    "run_stage",
    "shannon_entropy_bits",
    "spearman",
]
