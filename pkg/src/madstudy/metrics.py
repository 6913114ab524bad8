"""Distance measures used by the selection stage.

Two roles: D1 measures how differently two enhancers treated the same input
(full-reference dissimilarity between their outputs), D2 measures how far a
candidate's content sits from the images already selected. Built-in D1 kinds
are MSE and 1-SSIM on the luminance plane; precomputed distances and deep
features enter through plain-text manifests instead of being recomputed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DescriptorMismatch,
    DimensionMismatch,
    ImageTooSmall,
    LengthMismatch,
    MissingCandidate,
    ValidationError,
)
from .imaging import FeatureVector, LumaImage, load_image, thumbnail_feature, to_luma

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

MISMATCH_POLICIES = ("error", "center-crop")
AGGREGATIONS = ("min", "mean")


def _require_same_dims(a: LumaImage, b: LumaImage) -> None:
    if a.plane.shape != b.plane.shape:
        raise DimensionMismatch(
            f"{a.width}x{a.height} vs {b.width}x{b.height}; "
            "enable center-crop to compare anyway"
        )


def center_crop_pair(a: LumaImage, b: LumaImage) -> tuple[LumaImage, LumaImage]:
    """Crop both planes to their centered common intersection."""
    h = min(a.height, b.height)
    w = min(a.width, b.width)

    def crop(img: LumaImage) -> LumaImage:
        if img.height == h and img.width == w:
            return img
        top = (img.height - h) // 2
        left = (img.width - w) // 2
        return LumaImage(plane=img.plane[top : top + h, left : left + w].copy())

    return crop(a), crop(b)


def align_pair(a: LumaImage, b: LumaImage, mismatch: str = "error"):
    """Apply the configured dimension-mismatch policy before a comparison."""
    if mismatch not in MISMATCH_POLICIES:
        raise ValueError(f"unknown mismatch policy {mismatch!r}")
    if a.plane.shape == b.plane.shape:
        return a, b
    if mismatch == "center-crop":
        return center_crop_pair(a, b)
    _require_same_dims(a, b)
    raise AssertionError("unreachable")


def mse(a: LumaImage, b: LumaImage) -> float:
    """Mean squared luminance difference, in [0, 1]."""
    _require_same_dims(a, b)
    d = a.plane - b.plane
    return float(np.mean(d * d))


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def _filter_valid(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable correlation, windows fully inside the image (no padding)
    n = kernel.size
    rows = sliding_window_view(plane, n, axis=1) @ kernel
    return sliding_window_view(rows, n, axis=0) @ kernel


def ssim(a: LumaImage, b: LumaImage) -> float:
    """Mean structural similarity over an 11x11 Gaussian window, sigma 1.5.

    Local statistics are taken only where the window fits fully inside the
    image, matching the canonical formulation; constants C1=(0.01)^2 and
    C2=(0.03)^2 on the [0, 1] range. Result lies in [-1, 1].
    """
    _require_same_dims(a, b)
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ImageTooSmall(
            f"{a.width}x{a.height}: both sides must be >= {SSIM_WINDOW}"
        )
    x, y = a.plane, b.plane
    k = _gaussian_kernel()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_x = _filter_valid(x, k)
    mu_y = _filter_valid(y, k)
    var_x = _filter_valid(x * x, k) - mu_x * mu_x
    var_y = _filter_valid(y * y, k) - mu_y * mu_y
    cov = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def one_minus_ssim(a: LumaImage, b: LumaImage) -> float:
    """SSIM turned into a dissimilarity, in [0, 2]."""
    return 1.0 - ssim(a, b)


def feature_distance(u: FeatureVector, v: FeatureVector) -> float:
    """Mean squared component difference between two descriptors."""
    if u.descriptor_id != v.descriptor_id:
        raise DescriptorMismatch(f"{u.descriptor_id!r} vs {v.descriptor_id!r}")
    if len(u) != len(v):
        raise DescriptorMismatch(f"lengths {len(u)} vs {len(v)}")
    d = u.values - v.values
    return float(np.mean(d * d))


def set_distance(
    x: FeatureVector, selected: Iterable[FeatureVector], aggregation: str = "min"
) -> float:
    """Distance from a candidate to a selected set; +inf for the empty set."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    dists = [feature_distance(x, s) for s in selected]
    if not dists:
        return math.inf
    if aggregation == "min":
        return min(dists)
    return sum(dists) / len(dists)


# ---------------------------------------------------------------------------
# external feature / distance manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExternalDistanceMatrix:
    """Precomputed per-candidate D1 values for one method pair."""

    pair_key: tuple[str, str]
    entries: Mapping[str, float]


def _read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return text.split("\n")


def load_external_features(
    path: str | Path, required_ids: Sequence[str] | None = None
) -> dict[str, FeatureVector]:
    """Load a feature manifest: header `descriptor_id,length`, then value rows."""
    lines = _read_lines(path)
    if not lines or "," not in lines[0]:
        raise ValidationError(f"{path}: missing `descriptor_id,length` header")
    head = lines[0].split(",")
    if len(head) != 2:
        raise ValidationError(f"{path}: malformed header {lines[0]!r}")
    descriptor_id = head[0].strip()
    try:
        length = int(head[1])
    except ValueError as exc:
        raise ValidationError(f"{path}: bad length in header {lines[0]!r}") from exc
    if not descriptor_id or length < 1:
        raise ValidationError(f"{path}: bad header {lines[0]!r}")

    out: dict[str, FeatureVector] = {}
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        cid = parts[0].strip()
        if not cid:
            raise ValidationError(f"{path}:{ln}: empty candidate id")
        if cid in out:
            raise ValidationError(f"{path}:{ln}: duplicate candidate {cid!r}")
        if len(parts) - 1 != length:
            raise LengthMismatch(
                f"{path}:{ln}: {cid!r} has {len(parts) - 1} values, expected {length}"
            )
        try:
            values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ValidationError(f"{path}:{ln}: non-numeric value") from exc
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"{path}:{ln}: non-finite value")
        out[cid] = FeatureVector(values=values, descriptor_id=descriptor_id)

    if required_ids is not None:
        missing = [c for c in required_ids if c not in out]
        if missing:
            raise MissingCandidate(f"{path}: no features for {', '.join(missing)}")
    return out


def write_external_features(
    path: str | Path, features: Mapping[str, FeatureVector]
) -> None:
    items = list(features.items())
    if not items:
        raise ValidationError("cannot write an empty feature manifest")
    descriptor_id = items[0][1].descriptor_id
    length = len(items[0][1])
    lines = [f"{descriptor_id},{length}"]
    for cid, vec in items:
        if vec.descriptor_id != descriptor_id or len(vec) != length:
            raise DescriptorMismatch(f"inconsistent descriptor for {cid!r}")
        lines.append(cid + "," + ",".join(repr(float(v)) for v in vec.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_external_distance_matrix(
    path: str | Path,
    pair_key: tuple[str, str],
    required_ids: Sequence[str] | None = None,
) -> ExternalDistanceMatrix:
    """Load a `method_i,method_j` header plus `candidate_id,distance` rows."""
    lines = _read_lines(path)
    if not lines or "," not in lines[0]:
        raise ValidationError(f"{path}: missing `method_i,method_j` header")
    head = tuple(p.strip() for p in lines[0].split(","))
    if len(head) != 2:
        raise ValidationError(f"{path}: malformed header {lines[0]!r}")
    if head != tuple(pair_key):
        raise ValidationError(f"{path}: header {head} does not match pair {pair_key}")

    entries: dict[str, float] = {}
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 2:
            raise ValidationError(f"{path}:{ln}: expected `candidate_id,distance`")
        cid = parts[0].strip()
        if cid in entries:
            raise ValidationError(f"{path}:{ln}: duplicate candidate {cid!r}")
        try:
            value = float(parts[1])
        except ValueError as exc:
            raise ValidationError(f"{path}:{ln}: non-numeric distance") from exc
        if not math.isfinite(value) or value < 0.0:
            raise ValidationError(f"{path}:{ln}: distance must be finite and >= 0")
        entries[cid] = value

    if required_ids is not None:
        missing = [c for c in required_ids if c not in entries]
        if missing:
            raise MissingCandidate(f"{path}: no distance for {', '.join(missing)}")
    return ExternalDistanceMatrix(pair_key=tuple(pair_key), entries=entries)


def write_external_distance_matrix(
    path: str | Path, pair_key: tuple[str, str], entries: Mapping[str, float]
) -> None:
    lines = [f"{pair_key[0]},{pair_key[1]}"]
    for cid, value in entries.items():
        lines.append(f"{cid},{repr(float(value))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# providers consumed by the selection stage
# ---------------------------------------------------------------------------


class _BuiltinD1:
    """Shared machinery for image-based D1 kinds."""

    kind = ""

    def __init__(self, mismatch: str = "error"):
        if mismatch not in MISMATCH_POLICIES:
            raise ValueError(f"unknown mismatch policy {mismatch!r}")
        self.mismatch = mismatch

    @property
    def cache_key(self) -> tuple:
        return (self.kind, self.mismatch)

    def _distance(self, a: LumaImage, b: LumaImage) -> float:
        raise NotImplementedError

    def image_distance(self, a: LumaImage, b: LumaImage) -> float:
        a, b = align_pair(a, b, self.mismatch)
        return self._distance(a, b)

    def candidate_distances(self, pool, pair: tuple[int, int]) -> dict[str, float]:
        """D1 between the two methods' outputs, for every pool candidate."""
        name_a = pool.methods[pair[0]]
        name_b = pool.methods[pair[1]]
        out = {}
        for cid in pool.candidates:
            a = to_luma(load_image(pool.output_paths[cid][name_a]))
            b = to_luma(load_image(pool.output_paths[cid][name_b]))
            out[cid] = self.image_distance(a, b)
        return out


class MseD1(_BuiltinD1):
    kind = "mse"

    def _distance(self, a, b):
        return mse(a, b)


class SsimD1(_BuiltinD1):
    kind = "one-minus-ssim"

    def _distance(self, a, b):
        return one_minus_ssim(a, b)


class ExternalMatrixD1:
    """D1 read from one precomputed distance file per method pair."""

    kind = "external-matrix"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    @property
    def cache_key(self) -> tuple:
        return (self.kind, str(self.directory))

    def matrix_path(self, name_a: str, name_b: str) -> Path:
        return self.directory / f"d1_{name_a}_{name_b}.txt"

    def candidate_distances(self, pool, pair: tuple[int, int]) -> dict[str, float]:
        name_a = pool.methods[pair[0]]
        name_b = pool.methods[pair[1]]
        matrix = load_external_distance_matrix(
            self.matrix_path(name_a, name_b),
            (name_a, name_b),
            required_ids=pool.candidates,
        )
        return {cid: matrix.entries[cid] for cid in pool.candidates}


class ThumbnailD2:
    """D2 over the built-in thumbnail+histogram descriptor."""

    extractor = "builtin-thumb16-hist8"

    def __init__(self, aggregation: str = "min"):
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        self.aggregation = aggregation

    @property
    def cache_key(self) -> tuple:
        return (self.extractor,)

    def features(self, pool) -> dict[str, FeatureVector]:
        return {
            cid: thumbnail_feature(load_image(pool.input_paths[cid]))
            for cid in pool.candidates
        }


class ExternalFeaturesD2:
    """D2 over descriptors loaded from a feature manifest."""

    extractor = "external-features"

    def __init__(self, manifest: str | Path, aggregation: str = "min"):
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        self.manifest = Path(manifest)
        self.aggregation = aggregation

    @property
    def cache_key(self) -> tuple:
        return (self.extractor, str(self.manifest))

    def features(self, pool) -> dict[str, FeatureVector]:
        return load_external_features(self.manifest, required_ids=pool.candidates)
