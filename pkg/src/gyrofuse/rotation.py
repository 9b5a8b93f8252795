"""Rotation integration and interpolation for gyroscope logs.

Angular-velocity samples are integrated with a zero-order hold: each sample's
rate is held constant until the next sample, and the per-interval increment is
the exponential map of omega * dt.  Increments compose right-to-left, so the
rotation over [a, b] equals integrate(m, b) * integrate(a, m) for any split
point m.

Quaternions are unit-norm with scalar part first and are canonicalized to
w >= 0 after every public operation, which removes the double-cover sign
ambiguity from round trips and comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoverageError

# Default tolerance for "the log ends/starts this far from the window edge
# before we refuse to extrapolate", and for holes inside the window.
DEFAULT_MAX_GAP_NS = 10_000_000  # 10 ms

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class GyroSample:
    """One timestamped 3-axis angular-velocity reading (rad/s)."""

    timestamp_ns: int
    omega: tuple[float, float, float]

    def __post_init__(self):
        if len(self.omega) != 3 or not all(math.isfinite(w) for w in self.omega):
            raise ValueError(f"omega must be 3 finite rates, got {self.omega}")
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))


@dataclass(frozen=True)
class Quaternion:
    """Unit rotation quaternion, scalar part first."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        # Keep components as plain floats so dataclass reprs and JSON dumps
        # stay clean regardless of what numpy scalar types flowed in.
        for name in ("w", "x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def canonical(self) -> "Quaternion":
        """Flip the sign so w >= 0 (ties broken on x, then y, then z)."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0.0:
                return self
            if c < 0.0:
                return Quaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "Quaternion") -> float:
        return (
            self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
        )

    def angle_to(self, other: "Quaternion") -> float:
        """Geodesic angle (radians) between the two rotations."""
        d = min(1.0, abs(self.dot(other)))
        return 2.0 * math.acos(d)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)


def _require_unit(q: Quaternion, name: str = "quaternion") -> None:
    if abs(q.norm() - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must be unit norm, |q| = {q.norm():.9f}")


def quat_multiply(q1: Quaternion, q0: Quaternion) -> Quaternion:
    """Hamilton product q1 * q0: the rotation q0 followed by q1."""
    w = q1.w * q0.w - q1.x * q0.x - q1.y * q0.y - q1.z * q0.z
    x = q1.w * q0.x + q1.x * q0.w + q1.y * q0.z - q1.z * q0.y
    y = q1.w * q0.y - q1.x * q0.z + q1.y * q0.w + q1.z * q0.x
    z = q1.w * q0.z + q1.x * q0.y - q1.y * q0.x + q1.z * q0.w
    return Quaternion(w, x, y, z)


def axis_angle_to_quat(axis_angle) -> Quaternion:
    """Exponential map of a rotation vector (axis * angle, radians)."""
    v = np.asarray(axis_angle, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"axis-angle must be 3 finite components, got {axis_angle}")
    theta2 = float(v @ v)
    theta = math.sqrt(theta2)
    half = 0.5 * theta
    if theta < 1e-6:
        # sin(t/2)/t = 1/2 - t^2/48 + t^4/3840 - ...
        k = 0.5 - theta2 / 48.0 + theta2 * theta2 / 3840.0
        w = math.cos(half)
    else:
        k = math.sin(half) / theta
        w = math.cos(half)
    return Quaternion(w, k * v[0], k * v[1], k * v[2]).normalized().canonical()


def rodrigues(axis_angle) -> np.ndarray:
    """Rotation matrix for a rotation vector: angle = |v|, axis = v / |v|.

    The zero vector maps to the identity.
    """
    v = np.asarray(axis_angle, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"axis-angle must be 3 finite components, got {axis_angle}")
    theta2 = float(v @ v)
    theta = math.sqrt(theta2)
    if theta < 1e-6:
        # sin(t)/t and (1 - cos t)/t^2 via series, exact enough well below 1e-9.
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    k = np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ],
        dtype=np.float64,
    )
    return np.eye(3) + a * k + b * (k @ k)


def quat_to_matrix(q: Quaternion) -> np.ndarray:
    _require_unit(q)
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ],
        dtype=np.float64,
    )


def matrix_to_quat(matrix) -> Quaternion:
    """Convert an SO(3) matrix to its canonical unit quaternion."""
    r = np.asarray(matrix, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation matrix must be 3x3, got {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > _UNIT_TOL or np.linalg.det(r) < 0.0:
        raise ValueError("matrix is not a rotation (orthonormal, det +1)")
    # Shepperd's method: pick the largest diagonal combination for stability.
    t = np.trace(r)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = Quaternion(
            0.25 * s,
            (r[2, 1] - r[1, 2]) / s,
            (r[0, 2] - r[2, 0]) / s,
            (r[1, 0] - r[0, 1]) / s,
        )
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = Quaternion(
            (r[2, 1] - r[1, 2]) / s,
            0.25 * s,
            (r[0, 1] + r[1, 0]) / s,
            (r[0, 2] + r[2, 0]) / s,
        )
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = Quaternion(
            (r[0, 2] - r[2, 0]) / s,
            (r[0, 1] + r[1, 0]) / s,
            0.25 * s,
            (r[1, 2] + r[2, 1]) / s,
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = Quaternion(
            (r[1, 0] - r[0, 1]) / s,
            (r[0, 2] + r[2, 0]) / s,
            (r[1, 2] + r[2, 1]) / s,
            0.25 * s,
        )
    return q.normalized().canonical()


def slerp(q0: Quaternion, q1: Quaternion, t: float) -> Quaternion:
    """Constant-angular-velocity interpolation along the shorter arc."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"slerp parameter must be in [0, 1], got {t}")
    _require_unit(q0, "q0")
    _require_unit(q1, "q1")
    if (q0.w, q0.x, q0.y, q0.z) == (q1.w, q1.x, q1.y, q1.z):
        return q0.canonical()
    if t == 0.0:
        return q0.canonical()
    if t == 1.0:
        return q1.canonical()

    d = q0.dot(q1)
    sign = 1.0
    if d < 0.0:
        d = -d
        sign = -1.0
    if d > 1.0 - 1e-12:
        # Nearly parallel: linear blend, then renormalize.
        w = (1.0 - t) * q0.w + t * sign * q1.w
        x = (1.0 - t) * q0.x + t * sign * q1.x
        y = (1.0 - t) * q0.y + t * sign * q1.y
        z = (1.0 - t) * q0.z + t * sign * q1.z
        return Quaternion(w, x, y, z).normalized().canonical()

    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    a = math.sin((1.0 - t) * theta) / s
    b = math.sin(t * theta) / s * sign
    q = Quaternion(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    )
    return q.normalized().canonical()


def _sample_arrays(samples: Sequence[GyroSample]) -> tuple[np.ndarray, np.ndarray]:
    ts = np.array([s.timestamp_ns for s in samples], dtype=np.float64)
    om = np.array([s.omega for s in samples], dtype=np.float64)
    if len(ts) >= 2 and np.any(np.diff(ts) <= 0):
        raise ValueError("gyro sample timestamps must strictly increase")
    return ts, om


def integrate_gyro(
    samples: Sequence[GyroSample],
    t_a: float,
    t_b: float,
    max_gap_ns: float = DEFAULT_MAX_GAP_NS,
) -> Quaternion:
    """Rotation accumulated over [t_a, t_b] (nanosecond timestamps).

    Each sample's rate is held until the next sample; the first/last sample
    additionally covers up to `max_gap_ns` beyond its own timestamp toward the
    window edge.  Raises CoverageError when the log leaves a larger hole, so
    bad synchronization fails loudly instead of extrapolating.
    """
    if not samples:
        raise ValueError("gyro log is empty")
    if not (t_a < t_b):
        raise ValueError(f"need t_a < t_b, got {t_a} >= {t_b}")
    ts, om = _sample_arrays(samples)

    if ts[0] - t_a > max_gap_ns:
        raise CoverageError(
            f"log starts {(ts[0] - t_a) * 1e-6:.3f} ms after the window "
            f"(max gap {max_gap_ns * 1e-6:.3f} ms)"
        )
    if t_b - ts[-1] > max_gap_ns:
        raise CoverageError(
            f"log ends {(t_b - ts[-1]) * 1e-6:.3f} ms before the window "
            f"(max gap {max_gap_ns * 1e-6:.3f} ms)"
        )
    if len(ts) >= 2:
        gaps = np.diff(ts)
        inside = (ts[1:] > t_a) & (ts[:-1] < t_b)
        if np.any(inside & (gaps > max_gap_ns)):
            worst = float(np.max(gaps[inside]))
            raise CoverageError(
                f"log has a {worst * 1e-6:.3f} ms hole inside the window "
                f"(max gap {max_gap_ns * 1e-6:.3f} ms)"
            )

    # Sample i is active on [start_i, end_i); the edges are stretched to the
    # window so clipped edge intervals use the nearest sample's rate.
    starts = np.concatenate(([min(t_a, ts[0])], ts[1:]))
    ends = np.concatenate((ts[1:], [max(t_b, ts[-1])]))

    q = Quaternion.identity()
    for i in range(len(ts)):
        dur_ns = min(ends[i], t_b) - max(starts[i], t_a)
        if dur_ns <= 0.0:
            continue
        dq = axis_angle_to_quat(om[i] * (dur_ns * 1e-9))
        q = quat_multiply(dq, q)
    return q.normalized().canonical()
