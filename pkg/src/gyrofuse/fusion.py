"""Fusing gyro-derived motion fields with image-based flow.

The fusion weight map is driven by how well the gyro field alone aligns the
two images: the source is warped by the gyro field, the census mismatch with
the target gives a residual in [0, 1], and the map is 1 - exp(-(r / sigma)^2)
after a small box smoothing.  Weights near 0 keep the gyro field (background
that it already aligns); weights near 1 hand the pixel to the image-flow
path, which is the only one that can observe independently moving content.

The combine step is the exact per-pixel convex blend
fused = M * O + (1 - M) * G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import EstimatorConfig, estimate_pyramid
from .field import FlowField, downscale_field
from .flow_ops import census_descriptor, census_hamming, warp_bilinear


@dataclass(frozen=True)
class FusionConfig:
    residual_sigma: float = 0.1  # census-mismatch scale of the weight map
    smoothing_radius: int = 2  # box half-width applied to the map, pixels
    census_radius: int = 1
    levels: tuple[int, ...] | None = None  # pyramid levels to fuse at; None = all

    def __post_init__(self):
        if not self.residual_sigma > 0.0:
            raise ValueError(f"residual sigma must be > 0, got {self.residual_sigma}")
        if self.smoothing_radius < 0:
            raise ValueError(
                f"smoothing radius must be >= 0, got {self.smoothing_radius}"
            )
        if self.census_radius < 1:
            raise ValueError(f"census radius must be >= 1, got {self.census_radius}")

    def applies_to(self, level: int) -> bool:
        return self.levels is None or level in self.levels


def _box_smooth(arr: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return arr
    out = arr
    for axis in (0, 1):
        n = out.shape[axis]
        idx = np.arange(n)
        acc = np.zeros_like(out)
        for off in range(-radius, radius + 1):
            acc += np.take(out, np.clip(idx + off, 0, n - 1), axis=axis)
        out = acc / (2 * radius + 1)
    return out


def compute_fusion_map(
    image_a: np.ndarray,
    image_b: np.ndarray,
    gyro_field: FlowField,
    cfg: FusionConfig = FusionConfig(),
) -> np.ndarray:
    """Per-pixel weight in [0, 1]: 0 trusts the gyro field, 1 the image path.

    Pixels whose gyro warp leaves the frame cannot be verified against the
    target, so they are forced to 1 (trust the path that still observes data).
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    if (gyro_field.height, gyro_field.width) != a.shape[:2]:
        raise ValueError(
            f"gyro field {gyro_field.width}x{gyro_field.height} does not match "
            f"images {a.shape[1]}x{a.shape[0]}"
        )
    warped, oob = warp_bilinear(a, gyro_field)
    residual = census_hamming(
        census_descriptor(warped, cfg.census_radius),
        census_descriptor(b, cfg.census_radius),
    )
    weight = 1.0 - np.exp(-((residual / cfg.residual_sigma) ** 2))
    weight[oob] = 1.0
    weight = _box_smooth(weight, cfg.smoothing_radius)
    weight[oob] = 1.0
    return np.clip(weight, 0.0, 1.0)


def compute_fusion_flow(gyro_field: FlowField, image_flow: FlowField) -> FlowField:
    """Image flow wherever it is valid, gyro field where it is not."""
    if (gyro_field.height, gyro_field.width) != (image_flow.height, image_flow.width):
        raise ValueError(
            f"field sizes differ: {gyro_field.width}x{gyro_field.height} vs "
            f"{image_flow.width}x{image_flow.height}"
        )
    if image_flow.valid is None:
        return image_flow.copy()
    use_image = image_flow.valid[..., None]
    vectors = np.where(use_image, image_flow.vectors, gyro_field.vectors)
    mask = np.where(image_flow.valid, True, gyro_field.validity())
    return FlowField(vectors, None if mask.all() else mask)


def fuse(gyro_field: FlowField, fusion_flow: FlowField, weights: np.ndarray) -> FlowField:
    """Exact convex blend: weights * fusion_flow + (1 - weights) * gyro_field."""
    if (gyro_field.height, gyro_field.width) != (fusion_flow.height, fusion_flow.width):
        raise ValueError(
            f"field sizes differ: {gyro_field.width}x{gyro_field.height} vs "
            f"{fusion_flow.width}x{fusion_flow.height}"
        )
    m = np.asarray(weights, dtype=np.float64)
    if m.shape != (gyro_field.height, gyro_field.width):
        raise ValueError(
            f"weight map shape {m.shape} does not match fields "
            f"{gyro_field.width}x{gyro_field.height}"
        )
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise ValueError("fusion weights must lie in [0, 1]")
    mm = m[..., None]
    vectors = mm * fusion_flow.vectors + (1.0 - mm) * gyro_field.vectors
    mask = gyro_field.validity() & fusion_flow.validity()
    return FlowField(vectors, None if mask.all() else mask)


def estimate_fused_flow(
    image_a: np.ndarray,
    image_b: np.ndarray,
    gyro_field: FlowField,
    est_cfg: EstimatorConfig = EstimatorConfig(),
    fusion_cfg: FusionConfig = FusionConfig(),
) -> FlowField:
    """Coarse-to-fine flow seeded by the gyro field through the fusion rule.

    At every enabled pyramid level the full-resolution gyro field is
    downscaled to the level, the fusion map is computed from how well it
    aligns the level images, the previous level's flow becomes the fusion
    flow, and the blended result seeds the refinement of that level.
    """
    a = np.asarray(image_a, dtype=np.float64)
    if (gyro_field.height, gyro_field.width) != a.shape[:2]:
        raise ValueError(
            f"gyro field {gyro_field.width}x{gyro_field.height} must match the "
            f"full-resolution images {a.shape[1]}x{a.shape[0]}"
        )
    per_level = {0: gyro_field}
    for i in range(1, est_cfg.levels):
        per_level[i] = downscale_field(gyro_field, 2**i)

    def init_with_fusion(
        level: int, a_level: np.ndarray, b_level: np.ndarray, seed: FlowField
    ) -> FlowField:
        if not fusion_cfg.applies_to(level):
            return seed
        gyro_level = per_level[level]
        weights = compute_fusion_map(a_level, b_level, gyro_level, fusion_cfg)
        fusion_flow = compute_fusion_flow(gyro_level, seed)
        return fuse(gyro_level, fusion_flow, weights)

    return estimate_pyramid(image_a, image_b, est_cfg, level_init=init_with_fusion)
