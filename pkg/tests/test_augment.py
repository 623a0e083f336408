import numpy as np
import pytest

from somaquant.augment import (
    MODE_OPS,
    OP_ORDER,
    AugmentSpec,
    SamplePair,
    apply,
    blur,
    brightness_contrast,
    elastic,
    flip,
    gamma_adjust,
    gaussian_noise,
    random_resized_crop,
    rgb_shift,
    rotate,
    sample_seed,
)
from somaquant.errors import InvalidMode
from somaquant.images import BinaryMask, FloatImage


def sample(seed=0, h=48, w=48, with_mask=True):
    rng = np.random.default_rng(seed)
    img = FloatImage(rng.random((h, w, 3)))
    mask = BinaryMask(rng.random((h, w)) < 0.3) if with_mask else None
    return SamplePair(image=img, mask=mask)


# Seven rows of the composition table: which ops are enabled per mode.
EXPECTED_MODES = {
    1: set(),
    2: {"flip", "rotation", "brightness_contrast", "gamma"},
    3: {"flip", "rotation", "rgb_shift", "blur", "gaussian_noise"},
    4: {"flip", "rotation", "rgb_shift", "blur", "gaussian_noise", "random_resized_crop"},
    5: {
        "flip",
        "rotation",
        "rgb_shift",
        "blur",
        "gaussian_noise",
        "random_resized_crop",
        "elastic",
    },
    6: {
        "flip",
        "rotation",
        "brightness_contrast",
        "gamma",
        "rgb_shift",
        "blur",
        "gaussian_noise",
        "random_resized_crop",
    },
    7: {
        "flip",
        "rotation",
        "brightness_contrast",
        "gamma",
        "rgb_shift",
        "blur",
        "gaussian_noise",
        "random_resized_crop",
        "elastic",
    },
}


class TestModeTable:
    def test_all_seven_rows(self):
        for mode, expected in EXPECTED_MODES.items():
            assert set(MODE_OPS[mode]) == expected, f"mode {mode}"

    def test_mode_four_exact_set(self):
        assert AugmentSpec(mode=4).active_ops() == frozenset(
            {"flip", "rotation", "rgb_shift", "blur", "gaussian_noise", "random_resized_crop"}
        )

    def test_invalid_mode(self):
        with pytest.raises(InvalidMode):
            AugmentSpec(mode=8).active_ops()
        with pytest.raises(InvalidMode):
            AugmentSpec(ops=("flip", "nonsense")).active_ops()

    def test_explicit_ops_override(self):
        assert AugmentSpec(mode=4, ops=("flip",)).active_ops() == frozenset({"flip"})


class TestApply:
    def test_mode_one_identity(self):
        pair = sample(1)
        out = apply(pair, AugmentSpec(mode=1, seed=123))
        assert np.array_equal(out.image.data, pair.image.data)
        assert np.array_equal(out.mask.bits, pair.mask.bits)

    def test_deterministic(self):
        pair = sample(2)
        spec = AugmentSpec(mode=7, seed=99, crop_size=32)
        a = apply(pair, spec)
        b = apply(pair, spec)
        assert np.array_equal(a.image.data, b.image.data)
        assert np.array_equal(a.mask.bits, b.mask.bits)

    def test_different_seeds_differ(self):
        pair = sample(3)
        a = apply(pair, AugmentSpec(mode=4, seed=1, crop_size=32))
        b = apply(pair, AugmentSpec(mode=4, seed=2, crop_size=32))
        assert not np.array_equal(a.image.data, b.image.data)

    def test_photometric_leaves_mask_untouched(self):
        pair = sample(4)
        spec = AugmentSpec(ops=("brightness_contrast", "gamma", "rgb_shift", "blur", "gaussian_noise"), seed=5)
        out = apply(pair, spec)
        assert np.array_equal(out.mask.bits, pair.mask.bits)
        assert not np.array_equal(out.image.data, pair.image.data)

    def test_output_clamped_on_extreme_parameters(self):
        pair = sample(5)
        spec = AugmentSpec(
            mode=7,
            seed=6,
            brightness_limit=3.0,
            contrast_limit=4.0,
            rgb_shift_limit=2.0,
            noise_sigma_range=(0.5, 1.5),
            crop_size=32,
        )
        out = apply(pair, spec)
        assert out.image.data.min() >= 0.0
        assert out.image.data.max() <= 1.0

    def test_crop_output_size(self):
        pair = sample(6, h=100, w=80)
        out = apply(pair, AugmentSpec(mode=4, seed=7, crop_size=512))
        assert (out.image.height, out.image.width) == (512, 512)
        assert (out.mask.height, out.mask.width) == (512, 512)

    def test_geometry_applied_jointly(self):
        # a mask tracking a bright square must keep tracking it after
        # flip + right-angle rotation
        img = np.zeros((40, 40, 3))
        img[5:15, 8:20] = 1.0
        mask = np.zeros((40, 40), bool)
        mask[5:15, 8:20] = True
        pair = SamplePair(image=FloatImage(img), mask=BinaryMask(mask))
        spec = AugmentSpec(ops=("flip", "rotation"), seed=11, rotation_range=(90.0, 90.0))
        out = apply(pair, spec)
        bright = out.image.data[:, :, 0] > 0.5
        assert np.array_equal(bright, out.mask.bits)

    def test_sample_seed_stable(self):
        assert sample_seed(42, 7) == sample_seed(42, 7)
        assert sample_seed(42, 7) != sample_seed(42, 8)


class TestOpPrimitives:
    def test_flip_involution(self):
        rng = np.random.default_rng(20)
        img = rng.random((9, 7, 3))
        assert np.array_equal(flip(flip(img, "h"), "h"), img)
        assert np.array_equal(flip(flip(img, "v"), "v"), img)

    def test_rotate_four_quarters_identity(self):
        rng = np.random.default_rng(21)
        img = rng.random((16, 16, 3))
        out = img
        for _ in range(4):
            out = rotate(out, 90.0)
        assert np.array_equal(out, img)

    def test_rotate_180_non_square(self):
        rng = np.random.default_rng(22)
        img = rng.random((6, 11))
        assert np.array_equal(rotate(rotate(img, 180.0), 180.0), img)

    def test_zero_parameter_identities(self):
        rng = np.random.default_rng(23)
        img = rng.random((8, 8, 3))
        assert np.array_equal(blur(img, 0), img)
        assert np.allclose(gamma_adjust(img, 1.0), img)
        assert np.allclose(rgb_shift(img, 0, 0, 0), img)
        assert np.allclose(brightness_contrast(img, 0.0, 0.0), img)
        noise = gaussian_noise(img, 0.0, np.random.default_rng(0))
        assert np.array_equal(noise, img)

    def test_mask_conservation_flip_rot90(self):
        rng = np.random.default_rng(24)
        mask = rng.random((30, 30)) < 0.4
        n = mask.sum()
        assert flip(mask, "h").sum() == n
        assert rotate(mask.astype(np.uint8), 90.0, order=0).sum() == n
        assert rotate(mask.astype(np.uint8), 270.0, order=0).sum() == n

    def test_rotation_keeps_extent(self):
        rng = np.random.default_rng(25)
        img = rng.random((33, 47, 3))
        out = rotate(img, 33.3)
        assert out.shape == img.shape

    def test_crop_scales_and_resizes(self):
        rng = np.random.default_rng(26)
        img = rng.random((64, 64, 3))
        mask = rng.random((64, 64)) < 0.5
        out_img, out_mask = random_resized_crop(
            img, mask, (0.5, 0.5), np.random.default_rng(1), out_size=32
        )
        assert out_img.shape == (32, 32, 3)
        assert out_mask.shape == (32, 32)
        assert out_mask.dtype == bool

    def test_elastic_preserves_shape_and_binary_mask(self):
        rng = np.random.default_rng(27)
        img = rng.random((40, 40, 3))
        mask = rng.random((40, 40)) < 0.5
        out_img, out_mask = elastic(img, mask, 34.0, 4.0, np.random.default_rng(2))
        assert out_img.shape == img.shape
        assert out_mask.dtype == bool

    def test_op_order_is_fixed_and_complete(self):
        assert set(OP_ORDER) == EXPECTED_MODES[7]
        assert set(MODE_OPS[7]) == set(OP_ORDER)
