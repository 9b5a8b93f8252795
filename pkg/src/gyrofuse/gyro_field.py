"""Rotation-induced motion fields for rolling-shutter cameras.

The inter-frame rotation history is turned into one homography per horizontal
row patch: patch n uses the camera orientations at the mid-row exposure times
of that patch in each frame, H_n = K * R(t_b) * R(t_a)^T * K^-1.  Orientation
discontinuities across patches are removed by interpolating the patch
rotations spherically down to a per-row array, which is then rasterized into
a dense per-pixel field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np

from .errors import NumericError
from .field import FlowField, downscale_field  # noqa: F401  (re-exported)
from .rotation import (
    DEFAULT_MAX_GAP_NS,
    GyroSample,
    Quaternion,
    integrate_gyro,
    matrix_to_quat,
    quat_multiply,
    quat_to_matrix,
    slerp,
)

# Readout used when a capture pipeline does not report one; callers that fall
# back to it should say so in their output metadata.
DEFAULT_READOUT_NS = 25_000_000  # 25 ms

_W_EPS = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"intrinsics must be finite, got {vals}")
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.fx, self.skew, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    def inverse_matrix(self) -> np.ndarray:
        fx, fy, s = self.fx, self.fy, self.skew
        return np.array(
            [
                [1.0 / fx, -s / (fx * fy), (s * self.cy - self.cx * fy) / (fx * fy)],
                [0.0, 1.0 / fy, -self.cy / fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    @classmethod
    def default_for_size(cls, width: int, height: int) -> "CameraIntrinsics":
        """Synthetic placeholder intrinsics: fx = fy = 0.8 * width, centered."""
        f = 0.8 * width
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0)


@dataclass(frozen=True)
class FrameTiming:
    """Start-of-exposure times of two frames plus the scanline readout span."""

    start_a_ns: int
    start_b_ns: int
    readout_ns: int

    def __post_init__(self):
        if self.readout_ns < 0:
            raise ValueError(f"readout duration must be >= 0, got {self.readout_ns}")
        if self.start_b_ns <= self.start_a_ns:
            raise ValueError("frame b must start after frame a")

    def row_time(self, frame: str, row: float, height: int) -> float:
        """Exposure time of `row` (float ns); rows read out linearly in time."""
        start = {"a": self.start_a_ns, "b": self.start_b_ns}[frame]
        if height <= 1:
            return float(start)
        return start + self.readout_ns * (row / (height - 1.0))


@dataclass
class HomographyArray:
    """Per-row-patch 3x3 maps between two frames, top patch first.

    `rotations` keeps the K R K^-1 factorization alive so smoothing can
    interpolate orientations without re-extracting them from the matrices.
    """

    patches: np.ndarray  # (N, 3, 3), normalized to bottom-right = 1
    width: int
    height: int
    rotations: list[Quaternion] | None = None
    intrinsics: CameraIntrinsics | None = None
    metadata: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.patches, dtype=np.float64)
        if p.ndim != 3 or p.shape[1:] != (3, 3) or p.shape[0] < 1:
            raise ValueError(f"patches must be (N, 3, 3), got {p.shape}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad frame size {self.width}x{self.height}")
        if p.shape[0] > self.height:
            raise ValueError(
                f"{p.shape[0]} patches do not fit {self.height} rows"
            )
        dets = np.linalg.det(p)
        if np.any(np.abs(dets) <= 1e-12):
            raise ValueError("every patch homography must be invertible")
        if np.any(np.abs(p[:, 2, 2] - 1.0) > 1e-9):
            raise ValueError("patch homographies must be normalized to H[2,2] = 1")
        self.patches = p
        if self.rotations is not None and len(self.rotations) != p.shape[0]:
            raise ValueError("rotations must match the patch count")

    @property
    def patch_count(self) -> int:
        return self.patches.shape[0]

    def rows_per_patch(self) -> int:
        return self.height // self.patch_count

    def patch_row_span(self, n: int) -> tuple[int, int]:
        """Half-open row range of patch n; trailing remainder rows join the last."""
        rpp = self.rows_per_patch()
        start = n * rpp
        end = (n + 1) * rpp if n < self.patch_count - 1 else self.height
        return start, end

    def patch_of_row(self, row: int) -> int:
        return min(row // self.rows_per_patch(), self.patch_count - 1)

    def patch_center_row(self, n: int) -> float:
        start, end = self.patch_row_span(n)
        return (start + end - 1) / 2.0


def normalize_homography(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    scale = h[2, 2]
    if abs(scale) < _W_EPS:
        raise NumericError("homography cannot be normalized: H[2,2] ~ 0")
    return h / scale


def global_homography(intrinsics: CameraIntrinsics, rotation) -> np.ndarray:
    """Rotation-only homography K R K^-1, normalized to bottom-right = 1."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        raise ValueError("rotation matrix is not orthonormal")
    if np.array_equal(r, np.eye(3)):
        # Keep the no-rotation case exactly zero-displacement; K R K^-1 would
        # otherwise leave ~1e-15 dust in the off-diagonal entries.
        return np.eye(3)
    h = intrinsics.matrix() @ r @ intrinsics.inverse_matrix()
    return normalize_homography(h)


def homography_from_quat(intrinsics: CameraIntrinsics, q: Quaternion) -> np.ndarray:
    return global_homography(intrinsics, quat_to_matrix(q))


def _orientation_at(
    samples: Sequence[GyroSample], t0: float, t: float, max_gap_ns: float
) -> Quaternion:
    """Orientation at time t relative to the orientation at t0."""
    if t == t0:
        return Quaternion.identity()
    if t > t0:
        return integrate_gyro(samples, t0, t, max_gap_ns)
    return integrate_gyro(samples, t, t0, max_gap_ns).conjugate().canonical()


def build_homography_array(
    samples: Sequence[GyroSample],
    timing: FrameTiming,
    intrinsics: CameraIntrinsics,
    width: int,
    height: int,
    patch_count: int = 14,
    max_gap_ns: float = DEFAULT_MAX_GAP_NS,
) -> HomographyArray:
    """Per-patch homographies from a gyro log covering both frames.

    Patch times are the mid-row exposure times of the patch in each frame;
    orientations are taken relative to the log start, so each patch map is
    K * R(t_b) * R(t_a)^T * K^-1.
    """
    if not samples:
        raise ValueError("gyro log is empty")
    if patch_count < 1:
        raise ValueError(f"patch count must be >= 1, got {patch_count}")
    if height // patch_count < 1:
        raise ValueError(f"{patch_count} patches do not fit {height} rows")

    t0 = float(samples[0].timestamp_ns)
    rpp = height // patch_count
    patches = np.empty((patch_count, 3, 3), dtype=np.float64)
    rotations: list[Quaternion] = []
    for n in range(patch_count):
        start = n * rpp
        end = (n + 1) * rpp if n < patch_count - 1 else height
        center = (start + end - 1) / 2.0
        t_a = timing.row_time("a", center, height)
        t_b = timing.row_time("b", center, height)
        q_a = _orientation_at(samples, t0, t_a, max_gap_ns)
        q_b = _orientation_at(samples, t0, t_b, max_gap_ns)
        q_rel = quat_multiply(q_b, q_a.conjugate()).canonical()
        patches[n] = homography_from_quat(intrinsics, q_rel)
        rotations.append(q_rel)
    return HomographyArray(
        patches,
        width,
        height,
        rotations=rotations,
        intrinsics=intrinsics,
        metadata={"patch_count": patch_count, "readout_ns": timing.readout_ns},
    )


def _patch_rotations(array: HomographyArray) -> list[Quaternion]:
    if array.rotations is not None:
        return list(array.rotations)
    if array.intrinsics is None:
        raise ValueError(
            "cannot extract rotations: array carries neither rotations nor intrinsics"
        )
    k = array.intrinsics.matrix()
    k_inv = array.intrinsics.inverse_matrix()
    quats = []
    for h in array.patches:
        m = k_inv @ h @ k
        # The scale left over from homography normalization and any float dust
        # are removed by projecting onto the nearest rotation.
        u, _, vt = np.linalg.svd(m)
        r = u @ vt
        if np.linalg.det(r) < 0.0:
            r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        quats.append(matrix_to_quat(r))
    return quats


def interpolate_patch_orientation(array: HomographyArray, row: float) -> Quaternion:
    """Orientation at a (possibly fractional) row, interpolating patch centers.

    Rows above the first patch center or below the last clamp to the end
    orientations; patch-center rows reproduce the patch rotations exactly.
    """
    quats = _patch_rotations(array)
    if len(quats) == 1:
        return quats[0]
    centers = [array.patch_center_row(n) for n in range(array.patch_count)]
    if row <= centers[0]:
        return quats[0]
    if row >= centers[-1]:
        return quats[-1]
    n = int(np.searchsorted(np.asarray(centers), row, side="right")) - 1
    t = (row - centers[n]) / (centers[n + 1] - centers[n])
    return slerp(quats[n], quats[n + 1], t)


def smooth_homography_array(array: HomographyArray) -> HomographyArray:
    """Replace per-patch maps with a per-row array of interpolated orientations."""
    if array.intrinsics is None:
        raise ValueError("smoothing needs the intrinsics the array was built with")
    rows = array.height
    patches = np.empty((rows, 3, 3), dtype=np.float64)
    rotations = []
    for r in range(rows):
        q = interpolate_patch_orientation(array, float(r))
        patches[r] = homography_from_quat(array.intrinsics, q)
        rotations.append(q)
    return HomographyArray(
        patches,
        array.width,
        array.height,
        rotations=rotations,
        intrinsics=array.intrinsics,
        metadata=dict(array.metadata, smoothed=True),
    )


def rasterize_gyro_field(
    array: HomographyArray, width: int | None = None, height: int | None = None
) -> FlowField:
    """Apply each patch map to its rows and return per-pixel offsets p' - p.

    All pixels stay valid even when they map outside the frame; only a
    degenerate dehomogenization (|w| < 1e-12, impossible for rotation-only
    maps with physical intrinsics) marks a pixel invalid.
    """
    if width is not None and width != array.width:
        raise ValueError(f"array is bound to width {array.width}, got {width}")
    if height is not None and height != array.height:
        raise ValueError(f"array is bound to height {array.height}, got {height}")
    w, h = array.width, array.height

    xs = np.arange(w, dtype=np.float64)
    vectors = np.empty((h, w, 2), dtype=np.float64)
    valid = np.ones((h, w), dtype=bool)
    any_invalid = False
    for n in range(array.patch_count):
        r0, r1 = array.patch_row_span(n)
        ys = np.arange(r0, r1, dtype=np.float64)[:, None]
        hm = array.patches[n]
        xw = hm[0, 0] * xs + hm[0, 1] * ys + hm[0, 2]
        yw = hm[1, 0] * xs + hm[1, 1] * ys + hm[1, 2]
        ww = hm[2, 0] * xs + hm[2, 1] * ys + hm[2, 2]
        ok = np.abs(ww) >= _W_EPS
        safe = np.where(ok, ww, 1.0)
        vectors[r0:r1, :, 0] = np.where(ok, xw / safe - xs, 0.0)
        vectors[r0:r1, :, 1] = np.where(ok, yw / safe - ys, 0.0)
        if not ok.all():
            valid[r0:r1] = ok
            any_invalid = True
    return FlowField(vectors, valid if any_invalid else None)
