"""Raster decoding, luminance planes, resizing, and lightweight content features.

Pixel data lives in numpy arrays: 8-bit sRGB rasters as (height, width,
channels) uint8, luminance planes as (height, width) float64 in [0, 1].
Every function here is pure; nothing mutates its inputs, so concurrent use
needs no locking.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UnreadableFile, UnsupportedFormat

# Rec. 601 luma weights; fixed so metric values are reproducible.
REC601_WEIGHTS = (0.299, 0.587, 0.114)

BUILTIN_DESCRIPTOR = "builtin-thumb16-hist8"
_THUMB_SIZE = 16
_HIST_BINS = 8


@dataclass(frozen=True)
class RasterImage:
    """Decoded sRGB pixels, row-major, alpha already dropped."""

    pixels: np.ndarray  # (height, width, channels) uint8, channels in {1, 3}

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.ndim != 3:
            raise ValueError("pixels must be a (height, width, channels) array")
        if p.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {p.shape[2]}")
        if p.dtype != np.uint8:
            raise ValueError(f"samples must be uint8, got {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class LumaImage:
    """Luminance plane with every sample in [0, 1]."""

    plane: np.ndarray  # (height, width) float64

    def __post_init__(self):
        p = self.plane
        if not isinstance(p, np.ndarray) or p.ndim != 2:
            raise ValueError("plane must be a (height, width) array")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if p.dtype != np.float64:
            raise ValueError(f"luminance samples must be float64, got {p.dtype}")
        lo, hi = float(p.min()), float(p.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"luminance samples outside [0, 1]: min={lo}, max={hi}")

    @property
    def height(self) -> int:
        return self.plane.shape[0]

    @property
    def width(self) -> int:
        return self.plane.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length descriptor; only vectors with equal descriptor_id compare."""

    values: np.ndarray
    descriptor_id: str

    def __post_init__(self):
        v = self.values
        if not isinstance(v, np.ndarray) or v.ndim != 1 or v.size < 1:
            raise ValueError("values must be a non-empty 1-D array")
        if not self.descriptor_id:
            raise ValueError("descriptor_id must be non-empty")

    def __len__(self) -> int:
        return int(self.values.size)


def load_image(path: str | Path) -> RasterImage:
    """Decode a PNG or JPEG file.

    Grayscale sources yield channels=1; palette images decode to RGB; any
    alpha channel is dropped. 16-bit and float depths are rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in ("PNG", "JPEG"):
                raise UnsupportedFormat(f"{path}: format {fmt!r}, need PNG or JPEG")
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedFormat(f"{path}: {mode} depth not supported")
            if mode in ("1", "L", "LA"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)[:, :, np.newaxis]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as exc:
        raise UnreadableFile(f"{path}: no such file") from exc
    except UnidentifiedImageError as exc:
        raise UnreadableFile(f"{path}: not a decodable image") from exc
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    return RasterImage(pixels=arr)


def to_luma(img: RasterImage) -> LumaImage:
    """Convert to a Rec. 601 luminance plane scaled to [0, 1]."""
    px = img.pixels.astype(np.float64)
    if img.channels == 1:
        plane = px[:, :, 0] / 255.0
    else:
        wr, wg, wb = REC601_WEIGHTS
        plane = (wr * px[:, :, 0] + wg * px[:, :, 1] + wb * px[:, :, 2]) / 255.0
    return LumaImage(plane=np.clip(plane, 0.0, 1.0))


def _axis_coords(n_out: int, n_in: int):
    """Half-pixel-center source coordinates, edge-clamped."""
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(centers, 0.0, n_in - 1.0)
    lo = np.floor(x).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, x - lo


def resize_bilinear(img: LumaImage, width: int, height: int) -> LumaImage:
    """Bilinear resample under the half-pixel-center convention."""
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be at least 1x1")
    src = img.plane
    x0, x1, tx = _axis_coords(width, src.shape[1])
    y0, y1, ty = _axis_coords(height, src.shape[0])
    ty = ty[:, np.newaxis]
    a = src[np.ix_(y0, x0)]
    b = src[np.ix_(y0, x1)]
    c = src[np.ix_(y1, x0)]
    d = src[np.ix_(y1, x1)]
    # lerp as base + t*(delta) so constant inputs reproduce exactly
    top = a + tx * (b - a)
    bottom = c + tx * (d - c)
    out = top + ty * (bottom - top)
    np.clip(out, src.min(), src.max(), out=out)
    return LumaImage(plane=out)


def thumbnail_feature(img: RasterImage) -> FeatureVector:
    """Built-in content descriptor: 16x16 luma thumbnail + 8-bin color histograms.

    Layout is 256 thumbnail samples followed by 3 histograms of 8 bins each
    (grayscale images reuse their single channel for all three), 280 values
    total. Deterministic: identical bytes give a bit-identical vector.
    """
    thumb = resize_bilinear(to_luma(img), _THUMB_SIZE, _THUMB_SIZE).plane.reshape(-1)
    px = img.pixels
    if img.channels == 1:
        chans = [px[:, :, 0]] * 3
    else:
        chans = [px[:, :, i] for i in range(3)]
    n = px.shape[0] * px.shape[1]
    hists = []
    for ch in chans:
        counts = np.bincount(ch.reshape(-1) >> 5, minlength=_HIST_BINS)
        hists.append(counts.astype(np.float64) / n)
    values = np.concatenate([thumb] + hists)
    return FeatureVector(values=values, descriptor_id=BUILTIN_DESCRIPTOR)
