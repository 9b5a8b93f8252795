"""Dense per-pixel displacement fields.

A field stores one (u, v) offset per pixel, in pixels, with u along x
(columns) and v along y (rows).  Throughout the package a field is used as a
sampling map: the warped value at pixel (x, y) is read from the source image
at (x + u, y + v).  Ground truth, estimated flow, and gyro-derived fields all
share this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FlowField:
    vectors: np.ndarray  # (H, W, 2) float64, [..., 0] = u, [..., 1] = v
    valid: np.ndarray | None = None  # (H, W) bool, None means all valid

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"flow vectors must be (H, W, 2), got {v.shape}")
        self.vectors = v
        if self.valid is not None:
            m = np.asarray(self.valid, dtype=bool)
            if m.shape != v.shape[:2]:
                raise ValueError(
                    f"validity mask {m.shape} does not match field {v.shape[:2]}"
                )
            self.valid = m
            check = v[m]
        else:
            check = v
        if check.size and not np.all(np.isfinite(check)):
            raise ValueError("flow vectors must be finite wherever valid")

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[..., 1]

    def validity(self) -> np.ndarray:
        """Validity mask, materialized (all True when none is stored)."""
        if self.valid is None:
            return np.ones(self.vectors.shape[:2], dtype=bool)
        return self.valid

    def copy(self) -> "FlowField":
        return FlowField(
            self.vectors.copy(),
            None if self.valid is None else self.valid.copy(),
        )

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), dtype=np.float64))

    @classmethod
    def constant(cls, width: int, height: int, uv) -> "FlowField":
        vec = np.empty((height, width, 2), dtype=np.float64)
        vec[..., 0] = float(uv[0])
        vec[..., 1] = float(uv[1])
        return cls(vec)


def pad_to_multiple(arr: np.ndarray, factor: int) -> np.ndarray:
    """Edge-replicate on the right/bottom until both spatial dims divide `factor`."""
    h, w = arr.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return arr
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pad, mode="edge")


def downscale_field(field: FlowField, factor: int) -> FlowField:
    """Area-average a field by `factor` and rescale vectors to coarse pixel units.

    Odd dimensions are edge-padded on the right/bottom first, so the output is
    ceil(dim / factor) on each axis.  A coarse pixel is valid only if every
    contributing fine pixel is.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"downscale factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return field.copy()

    vec = pad_to_multiple(field.vectors, factor)
    h, w = vec.shape[:2]
    blocks = vec.reshape(h // factor, factor, w // factor, factor, 2)
    coarse = blocks.mean(axis=(1, 3)) / float(factor)

    mask = None
    if field.valid is not None:
        m = pad_to_multiple(field.valid, factor)
        mask = m.reshape(h // factor, factor, w // factor, factor).all(axis=(1, 3))
        coarse = coarse.copy()
        coarse[~mask] = 0.0
    return FlowField(coarse, mask)
