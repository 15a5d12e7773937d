"""Kernel-point-convolution point cloud segmentation.

The compiled extension carries the full pipeline: cloud I/O, grid
subsampling, radius search, kernel point convolutions, synthetic interchange
scenes, the rosette scan model, training and inference.
"""

from ._kpseg import (  # noqa: F401
    ArgumentError,
    CLASS_NAMES,
    DataError,
    IGNORE_LABEL,
    IoError,
    NUM_CLASSES,
    Network,
    ParseError,
    augment,
    compute_metrics,
    extract_sphere,
    fov_coverage,
    generate_kernel_points,
    generate_scene,
    gradient_checks,
    grid_subsample,
    kernel_influence,
    kpconv_forward,
    load_cloud,
    make_interchange_spec,
    preset_config_json,
    radius_search,
    rosette_directions,
    save_cloud,
)

__version__ = "0.1.0"
