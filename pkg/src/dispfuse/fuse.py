"""Fuse the disparity maps of an exposure bracket into one refined map."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pyramid as pyr
from .exceptions import InvalidInputError
from .imgcore import DisparityMap, ensure_gray
from .quality import QualityConfig, WeightStack, compute_weights, stable_sum


@dataclass(frozen=True)
class ExposureStack:
    """N co-registered left-view exposures and the disparity map estimated from each pair."""

    left_images: tuple
    disparities: tuple
    exposure_labels: tuple = field(default=())

    def __post_init__(self):
        images = tuple(np.asarray(i, dtype=np.float64) for i in self.left_images)
        disps = tuple(d if isinstance(d, DisparityMap) else DisparityMap(d) for d in self.disparities)
        if not disps:
            raise InvalidInputError("exposure stack is empty")
        if len(images) != len(disps):
            raise InvalidInputError(
                f"expected equal counts of images ({len(images)}) and disparities ({len(disps)})"
            )
        labels = tuple(self.exposure_labels) or tuple(f"exposure{k}" for k in range(len(disps)))
        if len(labels) != len(disps):
            raise InvalidInputError(f"{len(labels)} labels for {len(disps)} exposures")
        shape = disps[0].shape
        for lab, img, d in zip(labels, images, disps):
            if d.shape != shape:
                raise InvalidInputError(f"disparity {lab!r} has extent {d.shape}, expected {shape}")
            if img.shape[:2] != shape:
                raise InvalidInputError(f"image {lab!r} has extent {img.shape[:2]}, expected {shape}")
        object.__setattr__(self, "left_images", images)
        object.__setattr__(self, "disparities", disps)
        object.__setattr__(self, "exposure_labels", labels)

    @property
    def n(self) -> int:
        return len(self.disparities)

    @property
    def shape(self) -> tuple[int, int]:
        return self.disparities[0].shape


@dataclass(frozen=True)
class FusionResult:
    disparity: DisparityMap
    weights: WeightStack
    value_range: tuple[float, float]
    levels: int
    disparity_pyramids: tuple = ()
    weight_pyramids: tuple = ()
    fused_pyramid: pyr.Pyramid | None = None


def _joint_normalize(stack: ExposureStack):
    masks = np.stack([d.valid_mask for d in stack.disparities])
    data = np.stack([d.data for d in stack.disparities])
    if not masks.any():
        raise InvalidInputError("no valid disparity in any map of the stack")
    lo = float(data[masks].min())
    hi = float(data[masks].max())
    if not hi > lo:
        raise InvalidInputError(f"degenerate disparity range across the stack (min = max = {lo})")
    norm = np.where(masks, (np.where(masks, data, lo) - lo) / (hi - lo), 0.0)
    # invalid samples take the mean of the valid maps at that pixel so they do
    # not inject edges into the Laplacian bands
    n_valid = masks.sum(axis=0)
    mean_valid = np.where(n_valid > 0, stable_sum(norm) / np.maximum(n_valid, 1), 0.0)
    norm = np.where(masks, norm, mean_valid)
    return norm, masks, lo, hi


def fuse(stack: ExposureStack, cfg: QualityConfig | None = None, levels: int | None = None,
         naive: bool = False) -> FusionResult:
    """Full fusion pipeline with intermediate products.

    Disparities are jointly normalized to [0, 1] over the stack, weighted by
    contrast and well-exposedness, blended (multiscale unless ``naive``) and
    mapped back to the original disparity range.
    """
    cfg = cfg or QualityConfig()
    norm, masks, lo, hi = _joint_normalize(stack)
    grays = np.stack([ensure_gray(i) for i in stack.left_images])
    weights = compute_weights(norm, grays, cfg, valid=masks)
    out_mask = masks.all(axis=0)

    if naive:
        fused = pyr.naive_blend(list(norm), list(weights.normalized))
        n_lv, dps, wps, fp = 1, (), (), None
    else:
        n_lv = pyr.default_levels(stack.shape) if levels is None else levels
        dps = tuple(pyr.laplacian_pyramid(d, n_lv) for d in norm)
        wps = tuple(pyr.gaussian_pyramid(w, n_lv) for w in weights.normalized)
        fp = pyr.blend_pyramids(dps, wps)
        fused = pyr.collapse(fp)

    disp = DisparityMap(lo + (hi - lo) * fused, out_mask)
    return FusionResult(disp, weights, (lo, hi), n_lv, dps, wps, fp)


def fuse_disparities(stack: ExposureStack, cfg: QualityConfig | None = None,
                     levels: int | None = None) -> DisparityMap:
    return fuse(stack, cfg, levels).disparity


def fuse_naive(stack: ExposureStack, cfg: QualityConfig | None = None) -> DisparityMap:
    """Single-scale weighted average; kept as a reference that shows seams at weight transitions."""
    return fuse(stack, cfg, naive=True).disparity
