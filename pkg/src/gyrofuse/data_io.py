"""File formats: plain-text gyro logs, Middlebury .flo flows, PNG/PGM frames.

Gyro logs are one `timestamp_ns wx wy wz` line per sample with `#` comments,
kept as text so logs stay auditable with a pager.  Flow files follow the
Middlebury convention exactly: float32 magic 202021.25 ("PIEH"), little-endian
int32 width and height, then row-major interleaved float32 (u, v); components
with magnitude above 1e9 mark invalid pixels.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np
from PIL import Image

from .errors import FormatError, ParseError, ValidationError
from .field import FlowField
from .rotation import GyroSample

FLO_MAGIC = 202021.25
FLO_INVALID_SENTINEL = 1e10  # written for invalid pixels; anything > 1e9 reads as invalid
FLO_INVALID_THRESHOLD = 1e9


@dataclass(frozen=True)
class GyroLog:
    """Ordered gyro samples plus the clock domain they were stamped in."""

    samples: tuple[GyroSample, ...]
    clock_domain: str = "monotonic_ns"

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValidationError(
                f"a gyro log needs at least 2 samples, got {len(self.samples)}"
            )
        ts = [s.timestamp_ns for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("gyro log timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.samples)

    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp_ns for s in self.samples], dtype=np.int64)


def parse_gyro_log(source: str | Path | IO[str]) -> GyroLog:
    """Parse `timestamp_ns wx wy wz` lines; `#` starts a comment."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
        lines = text.splitlines()
    else:
        lines = source.read().splitlines()

    samples: list[GyroSample] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}: {raw!r}", lineno)
        try:
            ts = int(parts[0])
            omega = tuple(float(p) for p in parts[1:])
        except ValueError as exc:
            raise ParseError(f"{exc}: {raw!r}", lineno) from None
        try:
            samples.append(GyroSample(ts, omega))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return GyroLog(tuple(samples))


def format_gyro_log(log: GyroLog | Iterable[GyroSample]) -> str:
    samples = log.samples if isinstance(log, GyroLog) else tuple(log)
    lines = [
        f"{s.timestamp_ns} {s.omega[0]!r} {s.omega[1]!r} {s.omega[2]!r}"
        for s in samples
    ]
    return "\n".join(lines) + "\n"


def write_gyro_log(log: GyroLog, dest: str | Path | IO[str]) -> None:
    text = format_gyro_log(log)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def write_flo(field: FlowField, dest: str | Path | IO[bytes]) -> None:
    """Write a Middlebury .flo; invalid pixels get the 1e10 sentinel."""
    data = field.vectors.astype("<f4")
    if field.valid is not None:
        data = data.copy()
        data[~field.valid] = FLO_INVALID_SENTINEL
    header = struct.pack("<fii", FLO_MAGIC, field.width, field.height)
    payload = data.tobytes(order="C")
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(header + payload)
    else:
        dest.write(header + payload)


def read_flo(source: str | Path | IO[bytes]) -> FlowField:
    """Read a Middlebury .flo; components above 1e9 mark invalid pixels."""
    if isinstance(source, (str, Path)):
        blob = Path(source).read_bytes()
    else:
        blob = source.read()
    if len(blob) < 12:
        raise FormatError(f"flow file truncated: {len(blob)} bytes of header")
    magic, width, height = struct.unpack("<fii", blob[:12])
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"bad flow magic {magic!r}, expected {FLO_MAGIC}")
    if width < 1 or height < 1:
        raise FormatError(f"bad flow dimensions {width}x{height}")
    expected = 12 + width * height * 2 * 4
    if len(blob) != expected:
        raise FormatError(
            f"flow body has {len(blob) - 12} bytes, expected {expected - 12} "
            f"for {width}x{height}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(height, width, 2)
    vectors = data.astype(np.float64)
    invalid = np.abs(vectors).max(axis=-1) > FLO_INVALID_THRESHOLD
    return FlowField(vectors, ~invalid if invalid.any() else None)


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB image as float64 in [0, 1] (value / 255)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(img, dtype=np.float64)
    return arr / 255.0


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Save a [0, 1] image as 8-bit PNG or PGM, rounding to the nearest level."""
    arr = np.asarray(image, dtype=np.float64)
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    mode = "L" if quantized.ndim == 2 else "RGB"
    Image.fromarray(quantized, mode=mode).save(path)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= 128


def flo_bytes(field: FlowField) -> bytes:
    buf = io.BytesIO()
    write_flo(field, buf)
    return buf.getvalue()
