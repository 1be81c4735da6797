"""Image buffers, grayscale conversion, normalization and raster file I/O.

Intensity images are plain float64 numpy arrays of shape ``(H, W)`` or
``(H, W, 3)``.  Disparity rasters travel as :class:`DisparityMap`, which pairs
the samples with a validity mask.

Supported formats:

* PFM (``Pf`` / ``PF``), 32-bit float, the sign of the scale field selects
  endianness (negative = little-endian), rows stored bottom-to-top.
* PGM / PPM binary (``P5`` / ``P6``), 8 or 16 bit, 16-bit samples big-endian.
* PNG, 8 or 16 bit, through OpenCV.

Integer rasters are divided by their maximum value on load so intensities
land in ``[0, 1]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .exceptions import FormatError, InvalidInputError, InvalidParameterError

LUMA_709 = np.array([0.2126, 0.7152, 0.0722])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DisparityMap:
    """Single-channel disparity raster (pixels) plus a per-pixel validity mask.

    ``valid_mask`` defaults to "finite and non-negative".  Both arrays are
    copied and made read-only on construction.
    """

    data: np.ndarray
    valid_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidInputError(f"disparity map must be 2-D, got shape {data.shape}")
        if self.valid_mask is None:
            with np.errstate(invalid="ignore"):
                mask = np.isfinite(data) & (data >= 0)
        else:
            mask = np.asarray(self.valid_mask, dtype=bool)
            if mask.shape != data.shape:
                raise InvalidInputError(
                    f"valid_mask shape {mask.shape} does not match data shape {data.shape}"
                )
            with np.errstate(invalid="ignore"):
                mask = mask & np.isfinite(data) & (data >= 0)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "valid_mask", _readonly(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def valid_range(self) -> tuple[float, float]:
        """(min, max) over valid pixels."""
        v = self.data[self.valid_mask]
        if v.size == 0:
            raise InvalidInputError("disparity map has no valid pixels")
        return float(v.min()), float(v.max())


def as_image(img) -> np.ndarray:
    """Coerce to a float64 image array with 1 (2-D) or 3 channels."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if not (a.ndim == 2 or (a.ndim == 3 and a.shape[2] == 3)):
        raise InvalidInputError(f"expected an HxW or HxWx3 image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("image contains non-finite samples")
    return a


def to_grayscale(img) -> np.ndarray:
    """Rec. 709 luma of a 3-channel image in [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise InvalidInputError(f"to_grayscale needs 3 channels, got shape {a.shape}")
    gray = a @ LUMA_709
    # coefficients sum to 1 only up to rounding
    return np.clip(gray, 0.0, 1.0)


def ensure_gray(img) -> np.ndarray:
    a = as_image(img)
    return a if a.ndim == 2 else to_grayscale(a)


def normalize(img, lo: float, hi: float) -> np.ndarray:
    """Affinely map ``[lo, hi]`` onto ``[0, 1]`` and clamp."""
    if not hi > lo:
        raise InvalidParameterError(f"normalize needs hi > lo, got lo={lo}, hi={hi}")
    a = np.asarray(img, dtype=np.float64)
    return np.clip((a - lo) / (hi - lo), 0.0, 1.0)


# --------------------------------------------------------------------- PFM


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


class _HeaderReader:
    """Whitespace-token reader over a netpbm-style header with byte tracking."""

    def __init__(self, buf: bytes, path, pos: int = 0, comments: bool = False):
        self.buf = buf
        self.pos = pos
        self.path = path
        self.comments = comments

    def _skip_space(self):
        buf = self.buf
        while self.pos < len(buf):
            c = buf[self.pos : self.pos + 1]
            if c.isspace():
                self.pos += 1
            elif self.comments and c == b"#":
                nl = buf.find(b"\n", self.pos)
                self.pos = len(buf) if nl < 0 else nl + 1
            else:
                break

    def token(self, what: str) -> tuple[bytes, int]:
        self._skip_space()
        start = self.pos
        buf = self.buf
        while self.pos < len(buf) and not buf[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if self.pos == start:
            raise FormatError(f"missing {what} in header", start, self.path)
        return buf[start : self.pos], start

    def int_token(self, what: str, minimum: int = 1) -> int:
        tok, at = self.token(what)
        try:
            value = int(tok)
        except ValueError:
            raise FormatError(f"{what} is not an integer: {tok!r}", at, self.path) from None
        if value < minimum:
            raise FormatError(f"{what} must be >= {minimum}, got {value}", at, self.path)
        return value

    def end_of_header(self) -> int:
        """Consume the single whitespace byte that terminates the header."""
        if self.pos >= len(self.buf) or not self.buf[self.pos : self.pos + 1].isspace():
            raise FormatError("header not terminated by whitespace", self.pos, self.path)
        # tolerate CRLF line endings
        if self.buf[self.pos : self.pos + 2] == b"\r\n":
            self.pos += 1
        self.pos += 1
        return self.pos


def _parse_pfm(buf: bytes, path=None) -> tuple[np.ndarray, float]:
    if len(buf) == 0:
        raise FormatError("empty file", 0, path)
    hdr = _HeaderReader(buf, path)
    magic, _ = hdr.token("magic")
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise FormatError(f"not a PFM file (magic {magic[:8]!r})", 0, path)
    width = hdr.int_token("width")
    height = hdr.int_token("height")
    tok, at = hdr.token("scale")
    try:
        scale = float(tok)
    except ValueError:
        raise FormatError(f"scale is not a number: {tok!r}", at, path) from None
    if scale == 0.0 or not np.isfinite(scale):
        raise FormatError(f"scale must be finite and nonzero, got {scale}", at, path)
    start = hdr.end_of_header()
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    need = count * 4
    if len(buf) - start < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, found {len(buf) - start}", len(buf), path
        )
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=start)
    shape = (height, width) if channels == 1 else (height, width, 3)
    data = data.reshape(shape)[::-1].astype(np.float32)
    return data, abs(scale)


def read_pfm_array(path) -> np.ndarray:
    """Raw float32 samples of a PFM file, top row first."""
    data, _ = _parse_pfm(_read_bytes(path), path)
    return data


def read_pfm(path) -> DisparityMap:
    """Load a single-channel PFM as a :class:`DisparityMap`.

    Non-finite samples (Middlebury stores unknown disparity as ``inf``) and
    negative samples are flagged invalid; the samples themselves are kept.
    """
    data = read_pfm_array(path)
    if data.ndim != 2:
        raise FormatError("expected a single-channel (Pf) PFM, found PF", 0, path)
    return DisparityMap(data.astype(np.float64))


def write_pfm_array(path, data, little_endian: bool = True) -> None:
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        magic = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"PF"
    else:
        raise InvalidInputError(f"cannot store shape {a.shape} as PFM")
    h, w = a.shape[:2]
    scale = -1.0 if little_endian else 1.0
    dtype = "<f4" if little_endian else ">f4"
    header = magic + b"\n" + f"{w} {h}\n{scale:.6f}\n".encode("ascii")
    payload = np.ascontiguousarray(a[::-1]).astype(dtype).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def write_pfm(path, disp, little_endian: bool = True) -> None:
    """Write a disparity map (or bare 2-D array) as PFM.

    Invalid pixels of a :class:`DisparityMap` are written as ``+inf`` so the
    mask survives the round trip.
    """
    if isinstance(disp, DisparityMap):
        a = np.where(disp.valid_mask, disp.data, np.inf)
    else:
        a = np.asarray(disp)
    write_pfm_array(path, a, little_endian=little_endian)


# ------------------------------------------------------------------ PGM/PPM


def _read_pnm(buf: bytes, path=None) -> np.ndarray:
    if len(buf) == 0:
        raise FormatError("empty file", 0, path)
    hdr = _HeaderReader(buf, path, comments=True)
    magic, _ = hdr.token("magic")
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FormatError(f"unsupported netpbm magic {magic[:8]!r} (need P5/P6)", 0, path)
    width = hdr.int_token("width")
    height = hdr.int_token("height")
    _, maxval_at = hdr.token("maxval")
    hdr.pos = maxval_at
    maxval = hdr.int_token("maxval")
    if maxval > 65535:
        raise FormatError(f"unsupported bit depth (maxval {maxval})", maxval_at, path)
    start = hdr.end_of_header()
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    count = width * height * channels
    need = count * dtype.itemsize
    if len(buf) - start < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, found {len(buf) - start}", len(buf), path
        )
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=start).astype(np.float64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return np.clip(data.reshape(shape) / maxval, 0.0, 1.0)


def _quantize(img: np.ndarray, bits: int) -> np.ndarray:
    if bits not in (8, 16):
        raise InvalidParameterError(f"bit depth must be 8 or 16, got {bits}")
    top = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * top)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


def _write_pnm(path, img: np.ndarray, bits: int) -> None:
    q = _quantize(img, bits)
    magic = b"P5" if img.ndim == 2 else b"P6"
    h, w = img.shape[:2]
    top = 255 if bits == 8 else 65535
    header = magic + f"\n{w} {h}\n{top}\n".encode("ascii")
    payload = q.astype(">u2").tobytes() if bits == 16 else q.tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


# --------------------------------------------------------------------- PNG


def _read_png(path) -> np.ndarray:
    buf = _read_bytes(path)
    if len(buf) == 0:
        raise FormatError("empty file", 0, path)
    if not buf.startswith(b"\x89PNG\r\n\x1a\n"):
        raise FormatError("missing PNG signature", 0, path)
    raw = cv2.imdecode(np.frombuffer(buf, np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError("PNG could not be decoded", 8, path)
    if raw.dtype == np.uint8:
        a = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        a = raw.astype(np.float64) / 65535.0
    else:
        raise FormatError(f"unsupported PNG sample type {raw.dtype}", 8, path)
    if a.ndim == 3:
        a = a[:, :, :3][:, :, ::-1]  # BGR(A) -> RGB
        if a.shape[2] == 1:
            a = a[:, :, 0]
    return np.ascontiguousarray(a)


def _write_png(path, img: np.ndarray, bits: int) -> None:
    q = _quantize(img, bits)
    if q.ndim == 3:
        q = np.ascontiguousarray(q[:, :, ::-1])
    ok, enc = cv2.imencode(".png", q)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    with open(path, "wb") as fh:
        fh.write(enc.tobytes())


# ------------------------------------------------------------ dispatching

_EXT_PNM = {".pgm", ".ppm", ".pnm"}


def read_image(path) -> np.ndarray:
    """Read PNG / PGM / PPM / PFM into a float64 array (intensities in [0, 1] for integer formats)."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".pfm":
        return read_pfm_array(path).astype(np.float64)
    if ext in _EXT_PNM:
        return _read_pnm(_read_bytes(path), path)
    if ext == ".png":
        return _read_png(path)
    raise FormatError(f"unsupported image extension {ext!r}", None, path)


def write_image(path, img, bits: int = 8) -> None:
    """Write an image; integer formats clamp to [0, 1] and quantize to ``bits``."""
    path = Path(path)
    a = as_image(img)
    ext = path.suffix.lower()
    if ext == ".pfm":
        write_pfm_array(path, a)
    elif ext in _EXT_PNM:
        if ext == ".pgm" and a.ndim == 3 or ext == ".ppm" and a.ndim == 2:
            raise InvalidInputError(f"channel count does not fit extension {ext}")
        _write_pnm(path, a, bits)
    elif ext == ".png":
        _write_png(path, a, bits)
    else:
        raise FormatError(f"unsupported image extension {ext!r}", None, path)


def read_disparity(path) -> DisparityMap:
    """Disparity from PFM (physical units) or any single-channel image format."""
    if Path(path).suffix.lower() == ".pfm":
        return read_pfm(path)
    return DisparityMap(ensure_gray(read_image(path)))


def preview(raster, mask=None) -> np.ndarray:
    """Min-max stretch of a raster into [0, 1] for 8-bit previews; masked pixels become 0."""
    a = np.asarray(raster, dtype=np.float64)
    m = np.isfinite(a) if mask is None else (np.asarray(mask, bool) & np.isfinite(a))
    out = np.zeros_like(a)
    if m.any():
        lo, hi = a[m].min(), a[m].max()
        if hi > lo:
            out[m] = (a[m] - lo) / (hi - lo)
    return out


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
