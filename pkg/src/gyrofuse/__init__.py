"""Gyroscope-driven motion fields fused with image-based optical flow.

Pipeline in one sentence: integrate a gyro log into per-row-patch rotations,
turn them into a rolling-shutter-aware homography array, rasterize a dense
motion field, estimate image flow coarse-to-fine, and blend the two with a
residual-driven fusion map at every pyramid level.
"""

from .errors import (
    CoverageError,
    FormatError,
    GyroFuseError,
    NumericError,
    ParseError,
    SceneSpecError,
    ValidationError,
)
from .field import FlowField, downscale_field
from .rotation import (
    GyroSample,
    Quaternion,
    axis_angle_to_quat,
    integrate_gyro,
    matrix_to_quat,
    quat_multiply,
    quat_to_matrix,
    rodrigues,
    slerp,
)
from .gyro_field import (
    CameraIntrinsics,
    FrameTiming,
    HomographyArray,
    build_homography_array,
    global_homography,
    homography_from_quat,
    interpolate_patch_orientation,
    rasterize_gyro_field,
    smooth_homography_array,
)
from .flow_ops import (
    PyramidLevel,
    build_pyramid,
    census_descriptor,
    census_hamming,
    endpoint_error,
    forward_backward_occlusion,
    psnr,
    warp_bilinear,
)
from .estimator import EstimatorConfig, estimate_pyramid, refine_level, upsample_flow
from .fusion import (
    FusionConfig,
    compute_fusion_flow,
    compute_fusion_map,
    estimate_fused_flow,
    fuse,
)
from .data_io import (
    GyroLog,
    load_image,
    parse_gyro_log,
    read_flo,
    save_image,
    write_flo,
    write_gyro_log,
)
from .synthetic import (
    DegradationSpec,
    RectSpec,
    SceneBundle,
    SceneSpec,
    generate_synthetic_scene,
    load_bundle,
    save_bundle,
    true_rotation_field,
)

__all__ = [
    "CameraIntrinsics",
    "CoverageError",
    "DegradationSpec",
    "EstimatorConfig",
    "FlowField",
    "FormatError",
    "FrameTiming",
    "FusionConfig",
    "GyroFuseError",
    "GyroLog",
    "GyroSample",
    "HomographyArray",
    "NumericError",
    "ParseError",
    "PyramidLevel",
    "Quaternion",
    "RectSpec",
    "SceneBundle",
    "SceneSpec",
    "SceneSpecError",
    "ValidationError",
    "axis_angle_to_quat",
    "build_homography_array",
    "build_pyramid",
    "census_descriptor",
    "census_hamming",
    "compute_fusion_flow",
    "compute_fusion_map",
    "downscale_field",
    "endpoint_error",
    "estimate_fused_flow",
    "estimate_pyramid",
    "forward_backward_occlusion",
    "fuse",
    "generate_synthetic_scene",
    "global_homography",
    "homography_from_quat",
    "integrate_gyro",
    "interpolate_patch_orientation",
    "load_bundle",
    "load_image",
    "matrix_to_quat",
    "parse_gyro_log",
    "psnr",
    "quat_multiply",
    "quat_to_matrix",
    "rasterize_gyro_field",
    "read_flo",
    "refine_level",
    "rodrigues",
    "save_bundle",
    "save_image",
    "slerp",
    "smooth_homography_array",
    "true_rotation_field",
    "upsample_flow",
    "warp_bilinear",
    "write_flo",
    "write_gyro_log",
]
