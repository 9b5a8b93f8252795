"""Shared helpers for the test suite."""

import numpy as np
import pytest

import gyrofuse as gf
from gyrofuse.synthetic import _value_noise


def texture(seed: int, width: int, height: int, octaves: int = 4, contrast: float = 0.8):
    return _value_noise(np.random.default_rng(seed), width, height, octaves, contrast)


def dense_log(omega_fn, duration_s: float, rate_hz: float = 200.0) -> list[gf.GyroSample]:
    """Zero-order-hold samples of a rate function, timestamps from 0."""
    dt_ns = round(1e9 / rate_hz)
    count = int(np.ceil(duration_s * 1e9 / dt_ns)) + 1
    return [
        gf.GyroSample(i * dt_ns, tuple(float(w) for w in omega_fn(i * dt_ns * 1e-9)))
        for i in range(count)
    ]


def constant_log(omega, duration_s: float, rate_hz: float = 200.0) -> list[gf.GyroSample]:
    return dense_log(lambda _t: omega, duration_s, rate_hz)


def suite_scene_spec(seed: int, kind: str, level: float) -> gf.SceneSpec:
    """One scene of the moving-rectangle evaluation suite.

    The rectangle's motion is drawn at a fixed magnitude offset from the
    background's mean displacement so the gyro-only error stays visible, and
    its size keeps it alive at the coarse pyramid levels.
    """
    rng = np.random.default_rng([seed, 99])
    mag = rng.uniform(2.5, 3.3)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    mx = 0.7 + mag * np.cos(theta)
    my = 0.1 + mag * np.sin(theta)
    size = int(rng.uniform(40, 52))
    x = int(rng.uniform(16, 128 - 16 - size))
    y = int(rng.uniform(16, 128 - 16 - size))
    wz = rng.uniform(-0.1, 0.1)
    return gf.SceneSpec(
        width=128,
        height=128,
        seed=seed,
        rotation_keyframes=((0.0, (0.05, 0.45, wz)), (0.12, (0.0, 0.3, 0.05))),
        rect=gf.RectSpec(x=x, y=y, width=size, height=size, motion=(mx, my), contrast=1.0),
        degradation=gf.DegradationSpec(kind, level),
    )


SUITE_KINDS = (("none", 0.0), ("dark", 0.6), ("fog", 0.6), ("rain", 0.35))
_KIND_SEED_OFFSET = {"none": 0, "dark": 7, "fog": 17, "rain": 23}


def evaluation_suite() -> list[gf.SceneSpec]:
    """The 20 seeded scenes used by the fusion acceptance criteria."""
    specs = []
    for seed in range(5):
        for kind, level in SUITE_KINDS:
            specs.append(
                suite_scene_spec(seed * 4 + _KIND_SEED_OFFSET[kind], kind, level)
            )
    return specs


def pipeline_gyro_field(bundle: gf.SceneBundle, patch_count: int = 14) -> gf.FlowField:
    """Gyro field exactly as the CLI computes it: build, smooth, rasterize."""
    height, width = bundle.frame_a.shape[:2]
    array = gf.build_homography_array(
        bundle.gyro_log.samples,
        bundle.timing,
        bundle.intrinsics,
        width,
        height,
        patch_count=patch_count,
    )
    return gf.rasterize_gyro_field(gf.smooth_homography_array(array))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
