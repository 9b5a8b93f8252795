"""Classical coarse-to-fine flow estimation.

Each pyramid level runs a few warp-and-linearize iterations: the source
image's data channels are warped by the current flow, the photometric
constraint is linearized there, and a diffusion-regularized increment is
solved with a fixed number of Jacobi sweeps (tolerance-free on purpose, so
identical inputs always produce bit-identical flows).

The data term is either plain intensity or a soft census transform: per
neighbor, d / sqrt(d^2 + eps^2), which saturates toward a sign test and makes
the residual nearly invariant to brightness and contrast changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError
from .field import FlowField
from .flow_ops import build_pyramid, to_gray, warp_bilinear

# Horn-Schunck neighbor weighting for the diffusion term.
_AVG_KERNEL = np.array(
    [
        [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
        [1.0 / 6.0, 0.0, 1.0 / 6.0],
        [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
    ],
    dtype=np.float64,
)

LevelInit = Callable[[int, np.ndarray, np.ndarray, FlowField], FlowField]


@dataclass(frozen=True)
class EstimatorConfig:
    levels: int = 5
    iterations: int = 10  # warp-and-linearize passes per level
    smoothness: float = 0.1
    data_term: str = "census"  # "census" or "ssd"
    solver_iterations: int = 30  # Jacobi sweeps per linearization
    census_eps: float = 0.05

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.smoothness > 0.0:
            raise ValueError(f"smoothness must be > 0, got {self.smoothness}")
        if self.data_term not in ("census", "ssd"):
            raise ValueError(f"unknown data term {self.data_term!r}")
        if self.solver_iterations < 1:
            raise ValueError(
                f"solver iterations must be >= 1, got {self.solver_iterations}"
            )


def _neighbor_average(arr: np.ndarray) -> np.ndarray:
    padded = np.pad(arr, 1, mode="edge")
    out = np.zeros_like(arr)
    for dy in range(3):
        for dx in range(3):
            w = _AVG_KERNEL[dy, dx]
            if w == 0.0:
                continue
            out += w * padded[dy : dy + arr.shape[0], dx : dx + arr.shape[1]]
    return out


def _shift_clamped(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = img.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def _data_channels(image: np.ndarray, cfg: EstimatorConfig) -> np.ndarray:
    gray = to_gray(image)
    if cfg.data_term == "ssd":
        return gray[..., None]
    eps2 = cfg.census_eps**2
    channels = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            d = _shift_clamped(gray, dy, dx) - gray
            channels.append(d / np.sqrt(d * d + eps2))
    return np.stack(channels, axis=-1)


def _channel_gradients(channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(channels, axis=(0, 1))
    return gx, gy


def refine_level(
    image_a: np.ndarray,
    image_b: np.ndarray,
    init: FlowField,
    cfg: EstimatorConfig,
    context: str = "",
) -> FlowField:
    """Refine `init` so that image_a sampled at (p + flow) matches image_b."""
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    if (init.height, init.width) != a.shape[:2]:
        raise ValueError(
            f"init flow {init.width}x{init.height} does not match images "
            f"{a.shape[1]}x{a.shape[0]}"
        )
    chan_a = _data_channels(a, cfg)
    chan_b = _data_channels(b, cfg)
    gbx, gby = _channel_gradients(chan_b)
    lam = cfg.smoothness

    # Census bits next to the clamped border are artifacts; drop the data term
    # there and wherever the warp samples into that band, and let the
    # smoothness term carry those pixels.
    h, w = a.shape[:2]
    margin = 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    near_edge = (
        (xs < margin) | (xs > w - 1 - margin) | (ys < margin) | (ys > h - 1 - margin)
    )

    flow = init.vectors.copy()
    for it in range(cfg.iterations):
        base = flow.copy()
        warped, oob = warp_bilinear(chan_a, FlowField(base))
        gwx, gwy = _channel_gradients(warped)
        gx = 0.5 * (gwx + gbx)
        gy = 0.5 * (gwy + gby)
        resid = warped - chan_b

        sx = xs + base[..., 0]
        sy = ys + base[..., 1]
        sample_near_edge = (
            (sx < margin) | (sx > w - 1 - margin) | (sy < margin) | (sy > h - 1 - margin)
        )
        unreliable = oob | near_edge | sample_near_edge
        weight = np.where(unreliable, 0.0, 1.0)[..., None]
        d11 = (weight * gx * gx).sum(axis=-1)
        d12 = (weight * gx * gy).sum(axis=-1)
        d22 = (weight * gy * gy).sum(axis=-1)
        b1 = (weight * gx * resid).sum(axis=-1)
        b2 = (weight * gy * resid).sum(axis=-1)

        det = (d11 + lam) * (d22 + lam) - d12 * d12
        u0 = base[..., 0]
        v0 = base[..., 1]
        u = u0
        v = v0
        for _ in range(cfg.solver_iterations):
            rhs1 = lam * (_neighbor_average(u) - u0) - b1
            rhs2 = lam * (_neighbor_average(v) - v0) - b2
            du = ((d22 + lam) * rhs1 - d12 * rhs2) / det
            dv = ((d11 + lam) * rhs2 - d12 * rhs1) / det
            u = u0 + du
            v = v0 + dv
        flow = np.stack([u, v], axis=-1)
        if not np.all(np.isfinite(flow)):
            raise NumericError(
                f"non-finite flow after iteration {it}{' at ' + context if context else ''}"
            )
    return FlowField(flow)


def upsample_flow(field: FlowField, width: int, height: int) -> FlowField:
    """Bilinear-resize a flow to a finer grid, doubling the vectors."""
    src = field.vectors
    sh, sw = src.shape[:2]
    ys = np.clip((np.arange(height, dtype=np.float64) + 0.5) * (sh / height) - 0.5, 0, sh - 1)
    xs = np.clip((np.arange(width, dtype=np.float64) + 0.5) * (sw / width) - 0.5, 0, sw - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return FlowField((top * (1 - fy) + bot * fy) * 2.0)


def estimate_pyramid(
    image_a: np.ndarray,
    image_b: np.ndarray,
    cfg: EstimatorConfig,
    level_init: LevelInit | None = None,
) -> FlowField:
    """Coarse-to-fine flow from image_a to image_b.

    At every level the upsampled coarser flow seeds the refinement; when
    `level_init` is given it may replace that seed (the fusion stage hooks in
    here).  It is called as level_init(index, a_level, b_level, seed).
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    pyr_a = build_pyramid(a, cfg.levels)
    pyr_b = build_pyramid(b, cfg.levels)

    flow: FlowField | None = None
    for level_a, level_b in zip(reversed(pyr_a), reversed(pyr_b)):
        h, w = level_a.image.shape[:2]
        if flow is None:
            seed = FlowField.zeros(w, h)
        else:
            seed = upsample_flow(flow, w, h)
        if level_init is not None:
            seed = level_init(level_a.index, level_a.image, level_b.image, seed)
        flow = refine_level(
            level_a.image, level_b.image, seed, cfg, context=f"level {level_a.index}"
        )
    assert flow is not None
    return flow
