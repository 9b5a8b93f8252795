"""Dense-flow primitives: warping, pyramids, census descriptors, occlusion
checks, and endpoint error.

Images are float64 arrays in [0, 1], either (H, W) or (H, W, C).  Border
policy everywhere is clamp-to-edge; zero padding would fabricate gradients
that poison coarse pyramid levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import FlowField

# Fixed binomial blur used before each pyramid decimation.
PYRAMID_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0], dtype=np.float64) / 16.0


def validate_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"{name} must be (H, W) or (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} has empty dimensions {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite samples")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name} samples must lie in [0, 1]")
    return img


def to_gray(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=2)
    return img


def warp_bilinear(image: np.ndarray, field: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Sample `image` at (x + u, y + v) per pixel.

    Returns the warped image and a mask of pixels whose sample position fell
    outside the image (those are border-clamped in the output).
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if (field.height, field.width) != (h, w):
        raise ValueError(
            f"field {field.width}x{field.height} does not match image {w}x{h}"
        )
    ys, xs = np.mgrid[0:h, 0:w]
    sx = xs + field.u
    sy = ys + field.v
    oob = (sx < 0.0) | (sx > w - 1.0) | (sy < 0.0) | (sy > h - 1.0)

    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    warped = (
        img[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + img[y0, x1] * fx * (1.0 - fy)
        + img[y1, x0] * (1.0 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    return warped, oob


def _blur_axis(img: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(img)
    n = img.shape[axis]
    idx = np.arange(n)
    for offset, weight in zip(range(-2, 3), PYRAMID_KERNEL):
        taken = np.take(img, np.clip(idx + offset, 0, n - 1), axis=axis)
        out += weight * taken
    return out


def blur5(image: np.ndarray) -> np.ndarray:
    """Separable 5-tap binomial blur with clamped borders."""
    return _blur_axis(_blur_axis(np.asarray(image, dtype=np.float64), 0), 1)


@dataclass(frozen=True)
class PyramidLevel:
    index: int  # 0 = full resolution
    image: np.ndarray

    @property
    def scale(self) -> int:
        return 2**self.index


def build_pyramid(image: np.ndarray, levels: int) -> list[PyramidLevel]:
    """Blur-and-decimate pyramid; level i halves each dimension i times.

    Odd sizes round up (edge rows/cols are carried into the next level), so a
    600x800 frame stays representable at every level.
    """
    img = np.asarray(image, dtype=np.float64)
    if levels < 1:
        raise ValueError(f"pyramid needs at least 1 level, got {levels}")
    h, w = img.shape[:2]
    for _ in range(levels - 1):
        h, w = (h + 1) // 2, (w + 1) // 2
    if min(h, w) < 8:
        raise ValueError(
            f"{levels} levels would shrink {image.shape[1]}x{image.shape[0]} "
            f"below 8x8 at the top"
        )
    out = [PyramidLevel(0, img)]
    for i in range(1, levels):
        img = blur5(img)[::2, ::2]
        out.append(PyramidLevel(i, img))
    return out


def census_descriptor(image: np.ndarray, radius: int = 1) -> np.ndarray:
    """Per-pixel census bits: neighbor > center over a (2r+1)^2 window.

    Returns a (H, W, B) bool array with B = (2r+1)^2 - 1, bits ordered
    row-major over the window with the center skipped.  Borders clamp, and
    the comparison is a pure sign test, so any strictly increasing intensity
    remap leaves the descriptor unchanged.
    """
    if radius < 1:
        raise ValueError(f"census radius must be >= 1, got {radius}")
    img = to_gray(np.asarray(image, dtype=np.float64))
    h, w = img.shape
    ys = np.arange(h)
    xs = np.arange(w)
    bits = []
    for dy in range(-radius, radius + 1):
        ny = np.clip(ys + dy, 0, h - 1)
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nx = np.clip(xs + dx, 0, w - 1)
            bits.append(img[np.ix_(ny, nx)] > img)
    return np.stack(bits, axis=-1)


def census_hamming(desc_a: np.ndarray, desc_b: np.ndarray) -> np.ndarray:
    """Fraction of differing census bits per pixel, in [0, 1]."""
    if desc_a.shape != desc_b.shape:
        raise ValueError(f"descriptor shapes differ: {desc_a.shape} vs {desc_b.shape}")
    return (desc_a != desc_b).mean(axis=-1)


def forward_backward_occlusion(
    fwd: FlowField,
    bwd: FlowField,
    alpha1: float = 0.01,
    alpha2: float = 0.5,
) -> np.ndarray:
    """Bidirectional consistency check; True marks an occluded pixel.

    A pixel is occluded when the backward flow sampled at its forward target
    fails to cancel the forward flow:
    |f + b'|^2 > alpha1 * (|f|^2 + |b'|^2) + alpha2.
    """
    if (fwd.height, fwd.width) != (bwd.height, bwd.width):
        raise ValueError(
            f"flow sizes differ: {fwd.width}x{fwd.height} vs {bwd.width}x{bwd.height}"
        )
    bwd_at_target, _ = warp_bilinear(bwd.vectors, fwd)
    summed = fwd.vectors + bwd_at_target
    sq_sum = (summed**2).sum(axis=-1)
    sq_mag = (fwd.vectors**2).sum(axis=-1) + (bwd_at_target**2).sum(axis=-1)
    return sq_sum > alpha1 * sq_mag + alpha2


def endpoint_error(
    flow: FlowField, gt: FlowField, valid: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean and per-pixel Euclidean distance between two fields.

    The mean runs over `valid` when given, else over the intersection of the
    fields' own validity masks.
    """
    if (flow.height, flow.width) != (gt.height, gt.width):
        raise ValueError(
            f"flow sizes differ: {flow.width}x{flow.height} vs {gt.width}x{gt.height}"
        )
    if valid is None:
        valid = flow.validity() & gt.validity()
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != (flow.height, flow.width):
            raise ValueError(f"validity mask shape {valid.shape} does not match flow")
    if not valid.any():
        raise ValueError("endpoint error needs at least one valid pixel")
    diff = flow.vectors - gt.vectors
    epe_map = np.sqrt((diff**2).sum(axis=-1))
    return float(epe_map[valid].mean()), epe_map


def psnr(image_a: np.ndarray, image_b: np.ndarray, valid: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b) ** 2
    if valid is not None:
        diff = diff[np.asarray(valid, dtype=bool)]
    if diff.size == 0:
        raise ValueError("PSNR needs at least one valid pixel")
    mse = float(diff.mean())
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)
