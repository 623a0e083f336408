"""Core image containers and pixel-level conversions.

All buffers are numpy arrays in row-major order and are frozen after
construction so instances can be shared freely across workers. The dataset
convention is 8-bit RGB slides paired with 16-bit single-channel label
images; see :func:`load_pair`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BitDepthError, DimensionMismatch, LossyFormatError, MissingFile

# Scan resolution of the released slides, microns per pixel at 20x.
DEFAULT_RESOLUTION_UM = 0.46

MAX_LABELS = 65535

_LOSSY_SUFFIXES = {".jpg", ".jpeg", ".jpe", ".jfif"}
_LOSSLESS_SUFFIXES = {".png", ".tif", ".tiff", ".bmp"}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RgbSlide:
    """8-bit RGB slide with physical resolution metadata."""

    data: np.ndarray  # (height, width, 3) uint8
    resolution: float = DEFAULT_RESOLUTION_UM  # microns per pixel

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3 or d.dtype != np.uint8:
            raise BitDepthError(f"slide must be (h, w, 3) uint8, got {d.shape} {d.dtype}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise DimensionMismatch("slide must be at least 1x1")
        if not self.resolution > 0:
            raise DimensionMismatch("resolution must be positive")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """8-bit single-channel image, 0-255."""

    data: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.dtype != np.uint8:
            raise BitDepthError(f"gray image must be (h, w) uint8, got {d.shape} {d.dtype}")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LabelMask:
    """16-bit per-pixel cell labels; 0 is background.

    Canonical masks use exactly the label set {1..n_labels}.  ``source_values``
    records the original nonzero values (in ascending order) when the mask was
    compacted from a file with gaps, so value k in this mask came from
    ``source_values[k-1]``.
    """

    labels: np.ndarray  # (height, width) uint16
    n_labels: int
    source_values: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        d = np.asarray(self.labels)
        if d.ndim != 2 or d.dtype != np.uint16:
            raise BitDepthError(f"label mask must be (h, w) uint16, got {d.shape} {d.dtype}")
        object.__setattr__(self, "labels", _freeze(d))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Foreground flags, the prediction-side mask format."""

    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        d = np.asarray(self.bits)
        if d.ndim != 2:
            raise DimensionMismatch(f"binary mask must be 2-d, got shape {d.shape}")
        object.__setattr__(self, "bits", _freeze(d.astype(bool, copy=False)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class FloatImage:
    """Float image with every value in [0, 1]; channels last (or absent)."""

    data: np.ndarray  # (height, width) or (height, width, channels) float64

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim not in (2, 3):
            raise DimensionMismatch(f"float image must be 2-d or 3-d, got shape {d.shape}")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise DimensionMismatch("float image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


# Luma weights for the optional weighted grayscale rule.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_gray(slide: RgbSlide, rule: str = "mean") -> GrayImage:
    """Convert to 8-bit grayscale.

    ``rule="mean"`` is the unweighted channel mean, gray = round((R+G+B)/3);
    ``rule="weighted"`` uses the 0.299/0.587/0.114 luma weights.
    """
    d = slide.data
    if rule == "mean":
        s = d[:, :, 0].astype(np.uint16) + d[:, :, 1] + d[:, :, 2]
        # (s + 1) // 3 rounds to nearest: the fraction of s/3 is always 0,
        # 1/3 or 2/3, never exactly one half.
        g = ((s + 1) // 3).astype(np.uint8)
    elif rule == "weighted":
        w = np.asarray(_LUMA_WEIGHTS)
        g = np.clip(np.rint(d.astype(np.float64) @ w), 0, 255).astype(np.uint8)
    else:
        raise ValueError(f"unknown grayscale rule {rule!r}")
    return GrayImage(g)


def normalize(slide: RgbSlide) -> FloatImage:
    """Scale 8-bit values into [0, 1] (v / 255 per channel)."""
    return FloatImage(slide.data.astype(np.float64) / 255.0)


def binarize(mask: LabelMask) -> BinaryMask:
    """Foreground wherever the label is nonzero."""
    return BinaryMask(mask.labels > 0)


def canonicalize_labels(raw: np.ndarray) -> LabelMask:
    """Compact arbitrary nonzero label values to the dense set {1..n}.

    Value order is preserved: the smallest original value becomes 1.
    Gap-free input passes through unchanged (source_values = None).
    """
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise DimensionMismatch(f"label image must be 2-d, got shape {raw.shape}")
    values = np.unique(raw)
    values = values[values != 0]
    n = int(values.size)
    if n > MAX_LABELS:
        raise BitDepthError(f"{n} labels exceed the 16-bit capacity of {MAX_LABELS}")
    if n == 0:
        return LabelMask(np.zeros(raw.shape, np.uint16), 0)
    if values[0] == 1 and values[-1] == n and raw.dtype == np.uint16:
        return LabelMask(raw.astype(np.uint16), n)
    lut = np.zeros(int(values[-1]) + 1, np.uint16)
    lut[values.astype(np.int64)] = np.arange(1, n + 1, dtype=np.uint16)
    return LabelMask(lut[raw.astype(np.int64)], n, tuple(int(v) for v in values))


def _check_suffix(path: Path):
    suffix = path.suffix.lower()
    if suffix in _LOSSY_SUFFIXES:
        raise LossyFormatError(f"{path}: lossy formats are rejected, use png or tiff")
    if suffix not in _LOSSLESS_SUFFIXES:
        raise LossyFormatError(f"{path}: unsupported format {suffix!r}, use png or tiff")


def _open(path: str | os.PathLike) -> Image.Image:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(str(p))
    _check_suffix(p)
    return Image.open(p)


def load_image(path: str | os.PathLike, resolution: float = DEFAULT_RESOLUTION_UM) -> RgbSlide:
    """Read an 8-bit 3-channel slide from a lossless raster file."""
    with _open(path) as im:
        if im.mode != "RGB":
            raise BitDepthError(f"{path}: expected 8-bit RGB, got mode {im.mode!r}")
        data = np.asarray(im, dtype=np.uint8)
    return RgbSlide(data, resolution=resolution)


def load_label(path: str | os.PathLike) -> LabelMask:
    """Read a 16-bit single-channel label image and canonicalize its labels."""
    with _open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I"):
            raise BitDepthError(f"{path}: expected 16-bit single channel, got mode {im.mode!r}")
        raw = np.asarray(im)
    if raw.dtype == np.int32:
        if raw.min() < 0 or raw.max() > MAX_LABELS:
            raise BitDepthError(f"{path}: label values outside the 16-bit range")
        raw = raw.astype(np.uint16)
    return canonicalize_labels(raw)


def load_binary(path: str | os.PathLike) -> BinaryMask:
    """Read a prediction mask; any nonzero pixel is foreground."""
    with _open(path) as im:
        if im.mode not in ("1", "L", "I;16", "I;16B", "I"):
            raise BitDepthError(f"{path}: expected a single-channel mask, got mode {im.mode!r}")
        raw = np.asarray(im)
    return BinaryMask(raw != 0)


def load_pair(
    image_path: str | os.PathLike,
    label_path: str | os.PathLike,
    resolution: float = DEFAULT_RESOLUTION_UM,
) -> tuple[RgbSlide, LabelMask]:
    """Load a slide/label pair and validate that the two agree.

    Raises MissingFile, BitDepthError or DimensionMismatch; the returned
    mask is canonicalized to the dense label set {1..n}.
    """
    slide = load_image(image_path, resolution=resolution)
    mask = load_label(label_path)
    if (slide.height, slide.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image is {slide.width}x{slide.height} but label is {mask.width}x{mask.height}"
        )
    return slide, mask


def save_image(slide: RgbSlide, path: str | os.PathLike):
    p = Path(path)
    _check_suffix(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(slide.data, "RGB").save(p)


def save_gray(image: GrayImage, path: str | os.PathLike):
    p = Path(path)
    _check_suffix(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.data, "L").save(p)


def save_label(mask: LabelMask, path: str | os.PathLike):
    p = Path(path)
    _check_suffix(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(mask.labels)).save(p)


def save_binary(mask: BinaryMask, path: str | os.PathLike):
    p = Path(path)
    _check_suffix(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), "L").save(p)


def find_pairs(directory: str | os.PathLike) -> list[tuple[str, Path, Path]]:
    """Discover `<stem>.image.*` / `<stem>.label.*` pairs in a directory.

    Returns (stem, image_path, label_path) tuples sorted by stem; stems with
    only one half present are skipped.
    """
    directory = Path(directory)
    images: dict[str, Path] = {}
    labels: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if not p.is_file() or p.suffix.lower() not in _LOSSLESS_SUFFIXES:
            continue
        inner = Path(p.stem)  # strips the raster suffix, keeps `.image`/`.label`
        if inner.suffix == ".image":
            images[inner.stem] = p
        elif inner.suffix == ".label":
            labels[inner.stem] = p
    return [(stem, images[stem], labels[stem]) for stem in sorted(images.keys() & labels.keys())]
