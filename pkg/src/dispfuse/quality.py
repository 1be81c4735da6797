"""Per-pixel quality measures and fusion weights.

Two measures drive the fusion: a contrast term computed on each disparity
map (absolute Laplacian followed by a median blur) and a well-exposedness
term computed on the grayscale left-view exposure that produced it.  They
are combined as ``W = C**w_c * E**w_e`` and normalized across maps so the
weights at each pixel sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import InvalidInputError, InvalidParameterError

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

# scipy's "mirror" is whole-sample symmetric padding (d c b | a b c d)
BORDER_MODE = "mirror"

WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class QualityConfig:
    w_c: float = 1.0
    w_e: float = 1.0
    sigma: float = 0.2
    median_window: int = 3
    laplacian_kernel: np.ndarray = field(default=LAPLACIAN_3X3, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.w_c < 0 or self.w_e < 0:
            raise InvalidParameterError(
                f"weighting exponents must be >= 0, got w_c={self.w_c}, w_e={self.w_e}"
            )
        _check_window(self.median_window)


@dataclass(frozen=True)
class WeightStack:
    """Intermediate rasters of the weighting stage, stacked along axis 0 (one slice per map)."""

    contrast: np.ndarray
    exposedness: np.ndarray
    refined: np.ndarray
    normalized: np.ndarray

    @property
    def n_maps(self) -> int:
        return self.normalized.shape[0]


def _check_window(size):
    if int(size) != size or size < 1 or size % 2 == 0:
        raise InvalidParameterError(f"median window must be an odd integer >= 1, got {size}")


def stable_sum(stack: np.ndarray) -> np.ndarray:
    """Sum over axis 0 that does not depend on the order of the slices.

    Terms are sorted per pixel before accumulation, so permuting the input
    maps gives a bit-identical result.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.shape[0] == 1:
        return stack[0].copy()
    return np.sort(stack, axis=0).sum(axis=0)


def well_exposedness(gray, sigma: float = 0.2) -> np.ndarray:
    """Gaussian closeness of each intensity to mid-gray: ``exp(-(I - 0.5)**2 / (2 sigma**2))``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    g = np.asarray(gray, dtype=np.float64)
    return np.exp(-((g - 0.5) ** 2) / (2.0 * sigma * sigma))


def laplacian_response(disp) -> np.ndarray:
    """Signed 4-neighbour Laplacian with mirror padding."""
    d = np.asarray(disp, dtype=np.float64)
    if d.ndim != 2:
        raise InvalidInputError(f"contrast needs a 2-D raster, got shape {d.shape}")
    return ndimage.correlate(d, LAPLACIAN_3X3, mode=BORDER_MODE)


def contrast_measure(disp, median_window: int = 3) -> np.ndarray:
    """Median-blurred absolute Laplacian of a (normalized) disparity raster."""
    _check_window(median_window)
    c = np.abs(laplacian_response(disp))
    if median_window > 1:
        c = ndimage.median_filter(c, size=int(median_window), mode=BORDER_MODE)
    return c


def _pow(base: np.ndarray, exponent: float) -> np.ndarray:
    # numpy already gives 0**0 == 1; kept explicit since the fusion relies on it
    if exponent == 0:
        return np.ones_like(base)
    if exponent == 1:
        return base.copy()
    return np.power(base, exponent)


def refine_weights(contrast, exposedness, w_c: float = 1.0, w_e: float = 1.0) -> np.ndarray:
    """``C**w_c * E**w_e`` elementwise; an exponent of 0 removes that measure."""
    c = np.asarray(contrast, dtype=np.float64)
    e = np.asarray(exposedness, dtype=np.float64)
    if c.shape != e.shape:
        raise InvalidInputError(f"contrast {c.shape} and exposedness {e.shape} differ in extent")
    if w_c < 0 or w_e < 0:
        raise InvalidParameterError("weighting exponents must be >= 0")
    return _pow(c, w_c) * _pow(e, w_e)


def normalize_weights(weights) -> np.ndarray:
    """Divide each weight map by the per-pixel sum over maps.

    ``weights`` is a sequence of N equally sized rasters (or an ``(N, H, W)``
    array).  Pixels whose total weight is below ``1e-12`` get ``1/N`` for
    every map.
    """
    w = _stack(weights)
    if np.any(w < 0):
        raise InvalidInputError("weights must be non-negative")
    n = w.shape[0]
    total = stable_sum(w)
    degenerate = total < WEIGHT_EPS
    safe = np.where(degenerate, 1.0, total)
    out = w / safe
    out[:, degenerate] = 1.0 / n
    return out


def _stack(rasters) -> np.ndarray:
    if isinstance(rasters, np.ndarray):
        arr = rasters.astype(np.float64, copy=False)
        if arr.ndim != 3:
            raise InvalidInputError(f"expected an (N, H, W) stack, got shape {arr.shape}")
    else:
        rasters = [np.asarray(r, dtype=np.float64) for r in rasters]
        if not rasters:
            raise InvalidInputError("need at least one raster")
        shape = rasters[0].shape
        for k, r in enumerate(rasters):
            if r.shape != shape or r.ndim != 2:
                raise InvalidInputError(f"raster {k} has shape {r.shape}, expected {shape}")
        arr = np.stack(rasters)
    if arr.shape[0] < 1:
        raise InvalidInputError("need at least one raster")
    return arr


def compute_weights(norm_disps, grays, cfg: QualityConfig | None = None, valid=None) -> WeightStack:
    """Run the full weighting stage on N normalized disparity maps and N grayscale exposures.

    ``valid``, if given, is an ``(N, H, W)`` boolean stack; invalid pixels get
    zero refined weight in their own map before normalization.
    """
    cfg = cfg or QualityConfig()
    d = _stack(norm_disps)
    g = _stack(grays)
    if d.shape != g.shape:
        raise InvalidInputError(f"disparity stack {d.shape} and image stack {g.shape} differ")
    contrast = np.stack([contrast_measure(x, cfg.median_window) for x in d])
    exposed = well_exposedness(g, cfg.sigma)
    refined = refine_weights(contrast, exposed, cfg.w_c, cfg.w_e)
    if valid is not None:
        refined = np.where(np.asarray(valid, bool), refined, 0.0)
    return WeightStack(contrast, exposed, refined, normalize_weights(refined))
