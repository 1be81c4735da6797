"""Depth / disparity error metrics, SSIM and depth-from-disparity conversion.

All error metrics are averages over the valid set ``T``: pixels where both
the prediction and the ground truth exist.  Relative errors divide by the
ground truth.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage

from .exceptions import DomainError, EmptyMaskError, InvalidInputError, InvalidParameterError
from .imgcore import DisparityMap

DEFAULT_THRESHOLDS = (1.25, 1.25**2, 1.25**3)
MIN_DISPARITY = 1e-6

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Column order of the comparison tables
REPORT_COLUMNS = ("abs_rel", "sq_rel", "log_err", "rmse", "sigma1", "sigma2", "sigma3", "ssim")


@dataclass(frozen=True)
class CameraCalib:
    baseline: float
    focal: float

    def __post_init__(self):
        if not (self.baseline > 0 and self.focal > 0):
            raise InvalidParameterError(
                f"baseline and focal must be > 0, got {self.baseline}, {self.focal}"
            )


@dataclass(frozen=True)
class MetricInputs:
    """Prediction, ground truth and the evaluation mask, flattened to the valid pixels on demand."""

    predicted: np.ndarray
    ground_truth: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.predicted, dtype=np.float64)
        g = np.asarray(self.ground_truth, dtype=np.float64)
        if p.shape != g.shape:
            raise InvalidInputError(f"prediction {p.shape} and ground truth {g.shape} differ in extent")
        if self.valid is None:
            m = np.isfinite(p) & np.isfinite(g)
        else:
            m = np.asarray(self.valid, dtype=bool)
            if m.shape != p.shape:
                raise InvalidInputError(f"mask {m.shape} does not match rasters {p.shape}")
            m = m & np.isfinite(p) & np.isfinite(g)
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "ground_truth", g)
        object.__setattr__(self, "valid", m)

    def values(self, positive: bool = False) -> tuple[np.ndarray, np.ndarray]:
        if not self.valid.any():
            raise EmptyMaskError("no pixel has both a valid prediction and ground truth")
        p = self.predicted[self.valid]
        g = self.ground_truth[self.valid]
        if positive and (np.any(p <= 0) or np.any(g <= 0)):
            raise DomainError("ratio and log metrics need strictly positive values on the valid set")
        return p, g


def _inputs(m, gt=None, valid=None) -> MetricInputs:
    if isinstance(m, MetricInputs):
        return m
    return MetricInputs(m, gt, valid)


def abs_rel(m, gt=None, valid=None) -> float:
    """Mean of ``|pred - gt| / gt``."""
    p, g = _inputs(m, gt, valid).values(positive=True)
    return float(np.mean(np.abs(g - p) / g))


def sq_rel(m, gt=None, valid=None) -> float:
    """Mean of ``(pred - gt)**2 / gt``."""
    p, g = _inputs(m, gt, valid).values(positive=True)
    return float(np.mean((g - p) ** 2 / g))


def rmse(m, gt=None, valid=None) -> float:
    p, g = _inputs(m, gt, valid).values()
    return float(np.sqrt(np.mean((g - p) ** 2)))


def log_err(m, gt=None, valid=None, base: float = 10.0) -> float:
    """Root mean square of the log difference, base 10 unless ``base`` says otherwise.

    Pass ``base=np.e`` for natural logs.
    """
    p, g = _inputs(m, gt, valid).values(positive=True)
    d = np.log(g) - np.log(p)
    if base != np.e:
        d = d / np.log(base)
    return float(np.sqrt(np.mean(d * d)))


def threshold_acc(m, gt=None, valid=None, thres: float = 1.25) -> float:
    """Fraction of pixels with ``max(pred/gt, gt/pred) < thres``."""
    p, g = _inputs(m, gt, valid).values(positive=True)
    ratio = np.maximum(p / g, g / p)
    return float(np.mean(ratio < thres))


def _unit_range(a: np.ndarray, b: np.ndarray, mask: np.ndarray):
    lo = min(a[mask].min(), b[mask].min())
    hi = max(a[mask].max(), b[mask].max())
    span = hi - lo if hi > lo else 1.0
    a = np.where(mask, (a - lo) / span, 0.0)
    b = np.where(mask, (b - lo) / span, 0.0)
    return a, b


def _gaussian_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filt(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    x = ndimage.correlate1d(x, k, axis=0, mode="reflect")
    return ndimage.correlate1d(x, k, axis=1, mode="reflect")


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM index with an 11x11 Gaussian window (sigma 1.5) on unit dynamic range."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidInputError(f"ssim needs two 2-D rasters of equal extent, got {a.shape}, {b.shape}")
    k = _gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_a = _filt(a, k)
    mu_b = _filt(b, k)
    var_a = _filt(a * a, k) - mu_a * mu_a
    var_b = _filt(b * b, k) - mu_b * mu_b
    cov = _filt(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, valid=None) -> float:
    """Mean SSIM after jointly min-max normalizing both rasters to [0, 1].

    Pixels outside ``valid`` are zeroed before filtering and excluded from the mean.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"ssim inputs differ in extent: {a.shape} vs {b.shape}")
    mask = np.isfinite(a) & np.isfinite(b)
    if valid is not None:
        mask &= np.asarray(valid, bool)
    if not mask.any():
        raise EmptyMaskError("ssim has no valid pixels")
    a, b = _unit_range(a, b, mask)
    return float(np.mean(ssim_map(a, b)[mask]))


def depth_from_disparity(d, calib: CameraCalib) -> DisparityMap:
    """``baseline * focal / disparity``; disparities at or below 1e-6 become invalid pixels.

    Returned as a :class:`DisparityMap`-shaped raster whose samples are depths
    in the units of ``baseline``.  Invalid pixels hold 0, never inf or nan.
    """
    if isinstance(d, DisparityMap):
        data, mask = d.data, d.valid_mask
    else:
        data = np.asarray(d, dtype=np.float64)
        mask = np.isfinite(data)
    with np.errstate(invalid="ignore"):
        ok = mask & (data > MIN_DISPARITY)
    depth = np.zeros_like(data)
    depth[ok] = calib.baseline * calib.focal / data[ok]
    return DisparityMap(depth, ok)


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    log_err: float
    sigma1: float
    sigma2: float
    sigma3: float
    ssim: float
    space: str = "disparity"
    n_pixels: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*REPORT_COLUMNS, "space", "n_pixels"])
        w.writerow([f"{getattr(self, c):.6f}" for c in REPORT_COLUMNS] + [self.space, self.n_pixels])
        return buf.getvalue()

    def table(self) -> str:
        head = ["abs_rel", "sq_rel", "log10", "RMSE", "sigma1", "sigma2", "sigma3", "SSIM"]
        vals = [f"{getattr(self, c):.4f}" for c in REPORT_COLUMNS]
        widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
        line1 = " | ".join(h.rjust(n) for h, n in zip(head, widths))
        line2 = " | ".join(v.rjust(n) for v, n in zip(vals, widths))
        return f"{line1}\n{line2}\n({self.space} space, {self.n_pixels} pixels)"


def _drop_nonpositive(d: DisparityMap) -> DisparityMap:
    return DisparityMap(d.data, d.valid_mask & (d.data > MIN_DISPARITY))


def evaluate(pred, gt, calib: CameraCalib | None = None, log_base: float = 10.0) -> MetricReport:
    """All metrics on the intersection of the valid masks.

    With ``calib`` both maps are converted to depth first; otherwise the
    metrics are computed on raw disparities.  Either way, pixels with a
    disparity at or below 1e-6 are left out, since ratios and logs are
    undefined there.
    """
    pred = pred if isinstance(pred, DisparityMap) else DisparityMap(pred)
    gt = gt if isinstance(gt, DisparityMap) else DisparityMap(gt)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in extent")
    space = "disparity"
    pred = _drop_nonpositive(pred)
    gt = _drop_nonpositive(gt)
    if calib is not None:
        pred = depth_from_disparity(pred, calib)
        gt = depth_from_disparity(gt, calib)
        space = "depth"
    valid = pred.valid_mask & gt.valid_mask
    m = MetricInputs(pred.data, gt.data, valid)
    return MetricReport(
        abs_rel=abs_rel(m),
        sq_rel=sq_rel(m),
        rmse=rmse(m),
        log_err=log_err(m, base=log_base),
        sigma1=threshold_acc(m, thres=DEFAULT_THRESHOLDS[0]),
        sigma2=threshold_acc(m, thres=DEFAULT_THRESHOLDS[1]),
        sigma3=threshold_acc(m, thres=DEFAULT_THRESHOLDS[2]),
        ssim=ssim(pred.data, gt.data, valid),
        space=space,
        n_pixels=int(valid.sum()),
    )


REPORT_FIELDS = tuple(f.name for f in fields(MetricReport))
