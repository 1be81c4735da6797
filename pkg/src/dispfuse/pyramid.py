"""Gaussian / Laplacian pyramids and multiscale weighted blending.

Level 0 is full resolution; each further level has ``ceil(h/2) x ceil(w/2)``
samples.  Reduction is the separable 5-tap binomial blur ``[1, 4, 6, 4, 1]/16``
followed by keeping even rows and columns.  Expansion inserts zeros at the
odd positions of the finer grid and applies the same blur with gain 4, which
handles odd extents by construction.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .exceptions import InvalidInputError, InvalidParameterError
from .quality import BORDER_MODE, stable_sum

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class Pyramid:
    """Multi-resolution decomposition.

    For ``kind == "gaussian"`` ``levels`` holds every level, finest first.
    For ``kind == "laplacian"`` ``levels`` holds the band-pass levels and
    ``base`` the coarsest Gaussian residual, so a 1-level Laplacian pyramid
    has no bands at all.
    """

    kind: str
    levels: tuple
    base: np.ndarray | None = None

    @property
    def n_levels(self) -> int:
        return len(self.levels) + (1 if self.kind == LAPLACIAN else 0)

    def all_levels(self) -> list[np.ndarray]:
        """Every stored raster, finest first (bands then base for Laplacian pyramids)."""
        if self.kind == LAPLACIAN:
            return [*self.levels, self.base]
        return list(self.levels)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [lvl.shape for lvl in self.all_levels()]


def max_levels(shape: Sequence[int]) -> int:
    m = min(shape[0], shape[1])
    if m < 1:
        raise InvalidInputError(f"empty raster of shape {tuple(shape)}")
    return int(math.floor(math.log2(m))) + 1


def default_levels(shape: Sequence[int]) -> int:
    """Two fewer than the maximum so the coarsest level keeps a few pixels on its short side."""
    return max(1, max_levels(shape) - 2)


def _check_levels(shape, levels):
    top = max_levels(shape)
    if int(levels) != levels or not 1 <= levels <= top:
        raise InvalidParameterError(
            f"levels must be in [1, {top}] for a {shape[0]}x{shape[1]} raster, got {levels}"
        )


def _as_raster(r) -> np.ndarray:
    a = np.asarray(r, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"pyramids operate on 2-D rasters, got shape {a.shape}")
    return a


def blur5(r: np.ndarray, gain: float = 1.0) -> np.ndarray:
    k = BINOMIAL_5 * gain
    out = ndimage.correlate1d(r, k, axis=0, mode=BORDER_MODE)
    return ndimage.correlate1d(out, k, axis=1, mode=BORDER_MODE)


def downsample2(r: np.ndarray) -> np.ndarray:
    return blur5(r)[::2, ::2]


def upsample2(r: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Expand ``r`` onto a grid of ``shape`` (which must reduce to ``r.shape``)."""
    h, w = shape
    if ((h + 1) // 2, (w + 1) // 2) != r.shape:
        raise InvalidInputError(f"cannot expand {r.shape} to {tuple(shape)}")
    z = np.zeros((h, w))
    z[::2, ::2] = r
    return blur5(z, gain=2.0)


def gaussian_pyramid(r, levels: int) -> Pyramid:
    r = _as_raster(r)
    _check_levels(r.shape, levels)
    out = [r]
    for _ in range(levels - 1):
        out.append(downsample2(out[-1]))
    return Pyramid(GAUSSIAN, tuple(out))


def laplacian_pyramid(r, levels: int) -> Pyramid:
    g = gaussian_pyramid(r, levels).levels
    bands = tuple(g[i] - upsample2(g[i + 1], g[i].shape) for i in range(levels - 1))
    return Pyramid(LAPLACIAN, bands, g[-1])


def collapse(p: Pyramid) -> np.ndarray:
    if p.kind != LAPLACIAN:
        raise InvalidInputError("only Laplacian pyramids can be collapsed")
    r = np.asarray(p.base, dtype=np.float64)
    for band in reversed(p.levels):
        r = band + upsample2(r, band.shape)
    return r


def _check_same_layout(pyrs: Sequence[Pyramid], kind: str, name: str):
    if not pyrs:
        raise InvalidInputError(f"need at least one {name} pyramid")
    ref = pyrs[0].shapes
    for k, p in enumerate(pyrs):
        if p.kind != kind:
            raise InvalidInputError(f"{name} pyramid {k} is {p.kind}, expected {kind}")
        if p.shapes != ref:
            raise InvalidInputError(f"{name} pyramid {k} has level extents {p.shapes}, expected {ref}")


def blend_pyramids(disp_pyrs: Sequence[Pyramid], weight_pyrs: Sequence[Pyramid]) -> Pyramid:
    """Weight every Laplacian level of each map by the matching Gaussian weight level and sum.

    The coarsest residual is blended the same way as the bands.
    """
    _check_same_layout(disp_pyrs, LAPLACIAN, "disparity")
    _check_same_layout(weight_pyrs, GAUSSIAN, "weight")
    if len(disp_pyrs) != len(weight_pyrs):
        raise InvalidInputError(
            f"{len(disp_pyrs)} disparity pyramids but {len(weight_pyrs)} weight pyramids"
        )
    if disp_pyrs[0].shapes != weight_pyrs[0].shapes:
        raise InvalidInputError(
            f"disparity levels {disp_pyrs[0].shapes} do not match weight levels {weight_pyrs[0].shapes}"
        )
    n_bands = len(disp_pyrs[0].levels)
    bands = tuple(
        stable_sum(np.stack([wp.levels[l] * dp.levels[l] for dp, wp in zip(disp_pyrs, weight_pyrs)]))
        for l in range(n_bands)
    )
    base = stable_sum(np.stack([wp.levels[n_bands] * dp.base for dp, wp in zip(disp_pyrs, weight_pyrs)]))
    return Pyramid(LAPLACIAN, bands, base)


def naive_blend(disps, weights) -> np.ndarray:
    """Single-scale per-pixel weighted sum of the maps."""
    d = [_as_raster(x) for x in disps]
    w = [_as_raster(x) for x in weights]
    if not d or len(d) != len(w):
        raise InvalidInputError(f"need equal, nonzero counts of maps ({len(d)}) and weights ({len(w)})")
    for k, (a, b) in enumerate(zip(d, w)):
        if a.shape != d[0].shape or b.shape != d[0].shape:
            raise InvalidInputError(f"map/weight {k} extent differs from {d[0].shape}")
    return stable_sum(np.stack([b * a for a, b in zip(d, w)]))


def pyramid_blend(disps, weights, levels: int) -> np.ndarray:
    """Decompose, blend and collapse in one call."""
    dp = [laplacian_pyramid(x, levels) for x in disps]
    wp = [gaussian_pyramid(x, levels) for x in weights]
    return collapse(blend_pyramids(dp, wp))


def dump_pyramid(p: Pyramid, directory, prefix: str) -> list[str]:
    """Write every level as ``<prefix>_L<l>.pfm`` (base as ``_base``); returns the paths."""
    from .imgcore import write_pfm_array

    os.makedirs(directory, exist_ok=True)
    paths = []
    for l, lvl in enumerate(p.levels):
        path = os.path.join(directory, f"{prefix}_L{l}.pfm")
        write_pfm_array(path, lvl)
        paths.append(path)
    if p.base is not None:
        path = os.path.join(directory, f"{prefix}_base.pfm")
        write_pfm_array(path, p.base)
        paths.append(path)
    return paths
