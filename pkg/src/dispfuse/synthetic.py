"""Synthetic exposure brackets with known ground truth, for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fuse import ExposureStack


@dataclass(frozen=True)
class SyntheticScene:
    stack: ExposureStack
    ground_truth: np.ndarray
    regions: dict  # name -> boolean mask


def textured_disparity(shape=(64, 64), period: float = 1.5) -> np.ndarray:
    """Sinusoidal relief on a plane plus one vertical depth step."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return 20.0 + 10.0 * np.sin(xx / period) * np.cos(yy / (period + 1.0)) + 15.0 * (xx > 0.625 * w)


def half_exposed_case(seed: int = 0, shape=(64, 64), noise: float = 6.0,
                      blown: float = 1.0) -> SyntheticScene:
    """Two exposures, each well exposed (I = 0.5) on one half and blown out on the other.

    The disparity map of each exposure equals ground truth where its image is
    well exposed and carries Gaussian noise where it is blown out.
    """
    rng = np.random.default_rng(seed)
    gt = textured_disparity(shape)
    h, w = shape
    left = np.zeros(shape, bool)
    left[:, : w // 2] = True
    d1 = np.where(left, gt, gt + rng.normal(0.0, noise, shape))
    d2 = np.where(left, gt + rng.normal(0.0, noise, shape), gt)
    i1 = np.where(left, 0.5, blown)
    i2 = np.where(left, blown, 0.5)
    stack = ExposureStack((i1, i2), (d1, d2), ("exp_a", "exp_b"))
    return SyntheticScene(stack, gt, {"left": left, "right": ~left})


def seam_case(shape=(64, 64), slope: float = 0.5, offset: float = 8.0):
    """Two parallel ramps and a hard step in the weights at the middle column.

    Returns ``(maps, weights, seam_column)``; a single-scale blend jumps by
    ``offset`` at the seam.
    """
    h, w = shape
    cols = np.arange(w, dtype=np.float64)
    a = np.tile(10.0 + slope * cols, (h, 1))
    b = a + offset
    seam = w // 2
    wa = np.tile((cols < seam).astype(np.float64), (h, 1))
    return [a, b], [wa, 1.0 - wa], seam


def max_seam_step(r: np.ndarray, seam: int, band: int = 8) -> float:
    """Largest absolute horizontal first difference within ``band`` columns of the seam."""
    lo = max(seam - band, 0)
    hi = min(seam + band, r.shape[1])
    return float(np.max(np.abs(np.diff(r[:, lo:hi], axis=1))))
