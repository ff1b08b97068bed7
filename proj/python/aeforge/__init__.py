"""Python bindings for the aeforge C++ core.

Images are numpy uint8 arrays of shape (height, width, 3).
"""

from ._aeforge import (
    Autoencoder,
    Detector,
    Error,
    IoError,
    ValidationError,
    bw_fraction,
    calibrate_threshold,
    checkpoint_hash,
    color_randomize,
    encode_ppm,
    generate_scene,
    generate_test_card,
    jpeg_degrade,
    load_ppm,
    metrics,
    profile_config,
    quality_tables,
    random_crops,
    resize_bilinear,
    roc_auc,
    run_stage,
    save_ppm,
    tpr_at_fpr,
    unique_colors,
)

__all__ = [
    "Autoencoder",
    "Detector",
    "Error",
    "IoError",
    "ValidationError",
    "bw_fraction",
    "calibrate_threshold",
    "checkpoint_hash",
    "color_randomize",
    "encode_ppm",
    "generate_scene",
    "generate_test_card",
    "jpeg_degrade",
    "load_ppm",
    "metrics",
    "profile_config",
    "quality_tables",
    "random_crops",
    "resize_bilinear",
    "roc_auc",
    "run_stage",
    "save_ppm",
    "tpr_at_fpr",
    "unique_colors",
]
