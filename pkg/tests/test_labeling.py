import numpy as np
import pytest

from somaquant.errors import TooManyComponents
from somaquant.images import BinaryMask, LabelMask, canonicalize_labels
from somaquant.labeling import (
    component_stats,
    label_components,
    label_components_tiled,
)
from somaquant.tiles import pad_to_grid, split

from maskgen import random_test_mask
from oracles import accumulate_component_stats, flood_fill_label, partitions_equal


def random_mask(rng, h, w, density):
    return rng.random((h, w)) < density


class TestLabelComponents:
    def test_empty_mask(self):
        mask, stats = label_components(np.zeros((10, 10), bool))
        assert mask.n_labels == 0
        assert stats == []

    def test_single_pixel(self):
        m = np.zeros((10, 10), bool)
        m[5, 5] = True
        mask, stats = label_components(m)
        assert mask.n_labels == 1
        assert stats[0].area == 1
        assert stats[0].centroid == (5.0, 5.0)
        assert stats[0].bbox == (5, 5, 5, 5)

    def test_diagonal_connectivity(self):
        m = np.zeros((4, 4), bool)
        m[0, 0] = m[1, 1] = True
        mask8, _ = label_components(m, 8)
        mask4, _ = label_components(m, 4)
        assert mask8.n_labels == 1
        assert mask4.n_labels == 2

    def test_labels_in_raster_order(self):
        m = np.zeros((5, 9), bool)
        m[4, 0:2] = True  # later in raster order
        m[0, 7] = True  # first foreground pixel
        m[2, 3] = True
        mask, _ = label_components(m)
        assert mask.labels[0, 7] == 1
        assert mask.labels[2, 3] == 2
        assert mask.labels[4, 0] == 3

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_flood_fill_oracle(self, connectivity):
        rng = np.random.default_rng(101)
        for _ in range(60):
            m = random_mask(rng, 64, 64, rng.uniform(0.05, 0.6))
            got, stats = label_components(m, connectivity)
            oracle, n = flood_fill_label(m, connectivity)
            assert got.n_labels == n
            assert partitions_equal(got.labels, oracle)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        m = random_mask(rng, 100, 80, 0.4)
        a, _ = label_components(m)
        b, _ = label_components(m.copy())
        assert np.array_equal(a.labels, b.labels)

    def test_area_conservation(self):
        rng = np.random.default_rng(6)
        m = random_mask(rng, 70, 90, 0.3)
        _, stats = label_components(m)
        assert sum(s.area for s in stats) == int(m.sum())

    def test_too_many_components(self):
        # checkerboard-ish grid of isolated pixels: 66,049 components
        m = np.zeros((514, 514), bool)
        m[::2, ::2] = True
        with pytest.raises(TooManyComponents):
            label_components(m, 4)

    def test_accepts_binary_mask_type(self):
        m = np.zeros((5, 5), bool)
        m[2, 2] = True
        mask, stats = label_components(BinaryMask(m))
        assert mask.n_labels == 1


class TestTiled:
    def _tiled(self, m, tile_size, connectivity):
        padded, grid = pad_to_grid(m, tile_size)
        return label_components_tiled(split(padded, grid), grid, connectivity)

    def test_component_inside_one_tile(self):
        m = np.zeros((200, 200), bool)
        m[10:20, 10:20] = True
        mono, mono_stats = label_components(m)
        tiled, tiled_stats = self._tiled(m, 64, 8)
        assert tiled_stats == mono_stats
        assert np.array_equal(tiled.labels, mono.labels)

    def test_cross_spanning_four_tiles(self):
        # plus-shaped blob centered on the 2x2 tile corner at (64, 64)
        m = np.zeros((128, 128), bool)
        m[60:68, 63:65] = True
        m[63:65, 60:68] = True
        tiled, stats = self._tiled(m, 64, 8)
        assert tiled.n_labels == 1
        assert stats[0].area == int(m.sum())

    def test_diagonal_across_tile_corner(self):
        # two pixels diagonally adjacent across the seam corner
        m = np.zeros((128, 128), bool)
        m[63, 63] = True
        m[64, 64] = True
        tiled8, _ = self._tiled(m, 64, 8)
        tiled4, _ = self._tiled(m, 64, 4)
        assert tiled8.n_labels == 1
        assert tiled4.n_labels == 2

    def test_run_split_at_vertical_seam(self):
        m = np.zeros((10, 128), bool)
        m[3, 60:70] = True  # one run crossing the x=64 border
        tiled, stats = self._tiled(m, 64, 4)
        assert tiled.n_labels == 1
        assert stats[0].area == 10

    @pytest.mark.parametrize("connectivity", [4, 8])
    @pytest.mark.parametrize("tile_size", [64, 128, 512])
    def test_matches_monolithic(self, connectivity, tile_size):
        rng = np.random.default_rng(tile_size * connectivity)
        for _ in range(8):
            h = int(rng.integers(1, 701))
            w = int(rng.integers(1, 1301))
            m = random_test_mask(rng, h, w)
            mono, mono_stats = label_components(m, connectivity)
            tiled, tiled_stats = self._tiled(m, tile_size, connectivity)
            assert np.array_equal(mono.labels, tiled.labels)
            assert mono_stats == tiled_stats


class TestComponentStats:
    def test_block(self):
        lab = np.zeros((5, 5), np.uint16)
        lab[0:3, 0:3] = 1
        stats = component_stats(LabelMask(lab, 1))
        assert stats[0].area == 9
        assert stats[0].centroid == (1.0, 1.0)
        assert stats[0].bbox == (0, 0, 2, 2)

    def test_conservation(self):
        rng = np.random.default_rng(7)
        m = random_mask(rng, 64, 64, 0.3)
        mask, _ = label_components(m)
        stats = component_stats(mask)
        assert sum(s.area for s in stats) == int(m.sum())

    def test_matches_accumulation_oracle(self):
        rng = np.random.default_rng(8)
        m = random_mask(rng, 40, 50, 0.35)
        mask, _ = label_components(m)
        stats = component_stats(mask)
        acc = accumulate_component_stats(np.asarray(mask.labels))
        assert len(stats) == len(acc)
        for s in stats:
            a = acc[s.label]
            assert s.area == a["area"]
            assert s.centroid[0] == pytest.approx(a["sx"] / a["area"], abs=1e-12)
            assert s.centroid[1] == pytest.approx(a["sy"] / a["area"], abs=1e-12)
            assert s.bbox == (a["x0"], a["y0"], a["x1"], a["y1"])

    def test_rejects_non_canonical(self):
        lab = np.zeros((4, 4), np.uint16)
        lab[0, 0] = 2  # gap: no label 1
        with pytest.raises(ValueError):
            component_stats(LabelMask(lab, 1))

    def test_agrees_with_labeling_stats(self):
        rng = np.random.default_rng(9)
        m = random_mask(rng, 48, 48, 0.4)
        mask, stats = label_components(m)
        assert component_stats(mask) == stats

    def test_canonicalized_gt_mask(self):
        raw = np.zeros((12, 12), np.uint16)
        raw[1:4, 1:4] = 5
        raw[8:11, 8:11] = 2
        mask = canonicalize_labels(raw)
        stats = component_stats(mask)
        assert [s.label for s in stats] == [1, 2]
        assert sum(s.area for s in stats) == 18
