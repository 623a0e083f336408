"""Seeded augmentation transforms and their seven composition modes.

Geometric ops (flip, rotation, crop, elastic) are applied identically to the
image and its mask, with nearest-neighbour resampling on the mask;
photometric ops touch the image only. Application order is fixed so a
(sample, spec) pair is a pure function of the seed:

    flip -> rotation -> brightness/contrast -> gamma -> rgb shift -> blur
         -> gaussian noise -> random resized crop -> elastic
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, InvalidMode
from .images import BinaryMask, FloatImage

OP_ORDER = (
    "flip",
    "rotation",
    "brightness_contrast",
    "gamma",
    "rgb_shift",
    "blur",
    "gaussian_noise",
    "random_resized_crop",
    "elastic",
)

# Which ops each composition mode enables.
MODE_OPS: dict[int, frozenset[str]] = {
    1: frozenset(),
    2: frozenset({"flip", "rotation", "brightness_contrast", "gamma"}),
    3: frozenset({"flip", "rotation", "rgb_shift", "blur", "gaussian_noise"}),
    4: frozenset({"flip", "rotation", "rgb_shift", "blur", "gaussian_noise", "random_resized_crop"}),
    5: frozenset(
        {"flip", "rotation", "rgb_shift", "blur", "gaussian_noise", "random_resized_crop", "elastic"}
    ),
    6: frozenset(
        {
            "flip",
            "rotation",
            "brightness_contrast",
            "gamma",
            "rgb_shift",
            "blur",
            "gaussian_noise",
            "random_resized_crop",
        }
    ),
    7: frozenset(OP_ORDER),
}


@dataclass(frozen=True)
class SamplePair:
    """A float image in [0, 1] with an optional aligned binary mask."""

    image: FloatImage
    mask: BinaryMask | None = None

    def __post_init__(self):
        if self.mask is not None and (self.image.height, self.image.width) != (
            self.mask.height,
            self.mask.width,
        ):
            raise DimensionMismatch("image and mask dims must agree")


@dataclass(frozen=True)
class AugmentSpec:
    """One composition mode (or explicit op list) plus the seed and per-op
    parameter ranges."""

    mode: int | None = 1
    ops: tuple[str, ...] | None = None  # overrides mode when given
    seed: int = 0
    flip_p: float = 0.5  # per axis
    rotation_range: tuple[float, float] = (-180.0, 180.0)
    brightness_limit: float = 0.2
    contrast_limit: float = 0.2
    gamma_range: tuple[float, float] = (0.8, 1.25)
    rgb_shift_limit: float = 25.0 / 255.0
    blur_radius_range: tuple[int, int] = (0, 3)
    noise_sigma_range: tuple[float, float] = (0.0, 0.05)
    crop_scale: tuple[float, float] = (0.5, 1.0)
    crop_size: int = 512
    elastic_alpha: float = 34.0
    elastic_sigma: float = 4.0

    def active_ops(self) -> frozenset[str]:
        if self.ops is not None:
            unknown = set(self.ops) - set(OP_ORDER)
            if unknown:
                raise InvalidMode(f"unknown ops: {sorted(unknown)}")
            return frozenset(self.ops)
        if self.mode not in MODE_OPS:
            raise InvalidMode(f"mode must be 1..7, got {self.mode!r}")
        return MODE_OPS[self.mode]


def flip(image: np.ndarray, axis: str) -> np.ndarray:
    """Mirror left-right ("h") or top-bottom ("v")."""
    if axis == "h":
        return np.flip(image, axis=1).copy()
    if axis == "v":
        return np.flip(image, axis=0).copy()
    raise ValueError(f"axis must be 'h' or 'v', got {axis!r}")


def rotate(image: np.ndarray, degrees: float, order: int = 1) -> np.ndarray:
    """Rotate about the center keeping the original extent.

    Right-angle multiples are applied exactly (no resampling) whenever the
    result keeps the same shape; other angles interpolate with reflected
    borders for images (order 1) and zeros for masks (order 0).
    """
    k = degrees / 90.0
    if k == int(k):
        k = int(k) % 4
        if k == 0:
            return image.copy()
        if k == 2 or image.shape[0] == image.shape[1]:
            return np.rot90(image, k, axes=(0, 1)).copy()
    mode = "reflect" if order > 0 else "constant"
    out = ndimage.rotate(
        image, degrees, axes=(1, 0), reshape=False, order=order, mode=mode, prefilter=False
    )
    return out


def brightness_contrast(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    """Contrast scales around mid-gray, brightness shifts; clipped to [0, 1]."""
    return np.clip((image - 0.5) * (1.0 + contrast) + 0.5 + brightness, 0.0, 1.0)


def gamma_adjust(image: np.ndarray, g: float) -> np.ndarray:
    return np.clip(image, 0.0, 1.0) ** g


def rgb_shift(image: np.ndarray, dr: float, dg: float, db: float) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionMismatch("rgb_shift requires a 3-channel image")
    return np.clip(image + np.asarray([dr, dg, db]), 0.0, 1.0)


def blur(image: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter with a (2r+1) square kernel; radius 0 is the identity."""
    if radius <= 0:
        return image.copy()
    size = (2 * radius + 1, 2 * radius + 1) + (1,) * (image.ndim - 2)
    return ndimage.uniform_filter(image, size=size, mode="reflect")


def gaussian_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(image.shape) * sigma
    return np.clip(image + noise, 0.0, 1.0)


def _resize(arr: np.ndarray, out_h: int, out_w: int, order: int) -> np.ndarray:
    """Resample to an exact output size (bilinear or nearest)."""
    h, w = arr.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    grid = np.meshgrid(ys, xs, indexing="ij")
    if arr.ndim == 2:
        return ndimage.map_coordinates(arr, grid, order=order, mode="nearest")
    chans = [
        ndimage.map_coordinates(arr[:, :, c], grid, order=order, mode="nearest")
        for c in range(arr.shape[2])
    ]
    return np.stack(chans, axis=2)


def random_resized_crop(
    image: np.ndarray,
    mask: np.ndarray | None,
    scale: tuple[float, float],
    rng: np.random.Generator,
    out_size: int = 512,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Crop a random square covering `scale` of the shorter side (by area),
    then resize to out_size x out_size."""
    h, w = image.shape[:2]
    f = rng.uniform(scale[0], scale[1])
    side = int(round(np.sqrt(f) * min(h, w)))
    side = max(1, min(side, h, w))
    y0 = int(rng.integers(0, h - side + 1))
    x0 = int(rng.integers(0, w - side + 1))
    img_c = image[y0 : y0 + side, x0 : x0 + side]
    out_img = np.clip(_resize(img_c, out_size, out_size, order=1), 0.0, 1.0)
    out_mask = None
    if mask is not None:
        m_c = mask[y0 : y0 + side, x0 : x0 + side].astype(np.uint8)
        out_mask = _resize(m_c, out_size, out_size, order=0).astype(bool)
    return out_img, out_mask


def elastic(
    image: np.ndarray,
    mask: np.ndarray | None,
    alpha: float,
    sigma: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Smooth random displacement field (dx drawn before dy)."""
    h, w = image.shape[:2]
    dx = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), sigma, mode="reflect") * alpha
    dy = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), sigma, mode="reflect") * alpha
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    coords = (yy + dy, xx + dx)
    if image.ndim == 2:
        out_img = ndimage.map_coordinates(image, coords, order=1, mode="reflect")
    else:
        out_img = np.stack(
            [
                ndimage.map_coordinates(image[:, :, c], coords, order=1, mode="reflect")
                for c in range(image.shape[2])
            ],
            axis=2,
        )
    out_img = np.clip(out_img, 0.0, 1.0)
    out_mask = None
    if mask is not None:
        out_mask = ndimage.map_coordinates(
            mask.astype(np.uint8), coords, order=0, mode="constant", cval=0
        ).astype(bool)
    return out_img, out_mask


def sample_seed(base_seed: int, index: int) -> int:
    """Per-sample seed so parallel pipelines reproduce the serial stream."""
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def apply(pair: SamplePair, spec: AugmentSpec) -> SamplePair:
    """Apply the spec's ops in the fixed order; pure in (pair, spec)."""
    active = spec.active_ops()
    rng = np.random.default_rng(spec.seed)
    img = np.array(pair.image.data, np.float64)
    mask = np.array(pair.mask.bits) if pair.mask is not None else None

    if "flip" in active:
        if rng.random() < spec.flip_p:
            img = flip(img, "h")
            if mask is not None:
                mask = flip(mask, "h")
        if rng.random() < spec.flip_p:
            img = flip(img, "v")
            if mask is not None:
                mask = flip(mask, "v")
    if "rotation" in active:
        angle = rng.uniform(*spec.rotation_range)
        img = np.clip(rotate(img, angle, order=1), 0.0, 1.0)
        if mask is not None:
            mask = rotate(mask.astype(np.uint8), angle, order=0).astype(bool)
    if "brightness_contrast" in active:
        b = rng.uniform(-spec.brightness_limit, spec.brightness_limit)
        c = rng.uniform(-spec.contrast_limit, spec.contrast_limit)
        img = brightness_contrast(img, b, c)
    if "gamma" in active:
        img = gamma_adjust(img, rng.uniform(*spec.gamma_range))
    if "rgb_shift" in active and img.ndim == 3:
        dr, dg, db = rng.uniform(-spec.rgb_shift_limit, spec.rgb_shift_limit, 3)
        img = rgb_shift(img, dr, dg, db)
    if "blur" in active:
        img = blur(img, int(rng.integers(spec.blur_radius_range[0], spec.blur_radius_range[1] + 1)))
    if "gaussian_noise" in active:
        img = gaussian_noise(img, rng.uniform(*spec.noise_sigma_range), rng)
    if "random_resized_crop" in active:
        img, mask = random_resized_crop(img, mask, spec.crop_scale, rng, spec.crop_size)
    if "elastic" in active:
        img, mask = elastic(img, mask, spec.elastic_alpha, spec.elastic_sigma, rng)

    return SamplePair(
        image=FloatImage(np.clip(img, 0.0, 1.0)),
        mask=BinaryMask(mask) if mask is not None else None,
    )
