import json

import numpy as np
import pytest

from somaquant.cli import main
from somaquant.images import load_binary, load_image, load_label, save_binary, save_image
from somaquant.images import BinaryMask, RgbSlide
from somaquant.metrics import pearson


@pytest.fixture
def corpus(tmp_path):
    """Small synthetic corpus written through the CLI itself."""
    data = tmp_path / "data"
    rc = main(
        [
            "synth",
            "--cells", "25",
            "--overlap", "0.2",
            "--width", "500",
            "--height", "400",
            "--seed", "100",
            "--count", "4",
            "--out", str(data),
        ]
    )
    assert rc == 0
    return data


def _split_dirs(tmp_path, data):
    """Rearrange the synth output into labels/, images/, masks/ dirs."""
    labels = tmp_path / "labels"
    images = tmp_path / "images"
    masks = tmp_path / "masks"
    for d in (labels, images, masks):
        d.mkdir(exist_ok=True)
    for p in data.iterdir():
        if p.name.endswith(".label.png"):
            (labels / p.name).write_bytes(p.read_bytes())
        elif p.name.endswith(".image.png"):
            (images / p.name).write_bytes(p.read_bytes())
        elif p.name.endswith(".mask.png"):
            (masks / p.name).write_bytes(p.read_bytes())
    return labels, images, masks


class TestSynthCommand:
    def test_outputs_and_truth(self, corpus):
        stems = sorted(p.name for p in corpus.iterdir())
        assert "synth00100.image.png" in stems
        assert "synth00100.label.png" in stems
        assert "synth00100.truth.json" in stems
        doc = json.loads((corpus / "synth00100.truth.json").read_text())
        assert doc["true_count"] == 25

    def test_truth_reports_requested_count(self, tmp_path):
        out = tmp_path / "s"
        assert main(["synth", "--cells", "50", "--overlap", "0", "--seed", "7", "--out", str(out)]) == 0
        doc = json.loads((out / "synth00007.truth.json").read_text())
        assert doc["true_count"] == 50


class TestCalibrateCommand:
    def test_calibrate_writes_file(self, corpus, tmp_path, capsys):
        labels, _, _ = _split_dirs(tmp_path, corpus)
        calib_path = tmp_path / "calib.json"
        rc = main(["calibrate", str(labels), "--out", str(calib_path)])
        assert rc == 0
        doc = json.loads(calib_path.read_text())
        assert doc["n_cells"] == 100  # 4 slides x 25 cells
        assert len(doc["source_ids"]) == 4
        out = capsys.readouterr().out
        assert "100 cells" in out

    def test_single_cell_min_equals_avg(self, tmp_path):
        from somaquant.images import LabelMask, save_label

        d = tmp_path / "labels"
        lab = np.zeros((30, 30), np.uint16)
        lab[5:10, 5:10] = 1
        save_label(LabelMask(lab, 1), d / "one.label.png")
        calib_path = tmp_path / "c.json"
        assert main(["calibrate", str(d), "--out", str(calib_path)]) == 0
        doc = json.loads(calib_path.read_text())
        assert doc["min_area_px"] == doc["avg_area_px"] == 25

    def test_empty_dir_fails_validation(self, tmp_path, capsys):
        d = tmp_path / "empty"
        d.mkdir()
        rc = main(["calibrate", str(d), "--out", str(tmp_path / "c.json")])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "EMPTY_GROUND_TRUTH"


class TestQuantifyCommand:
    def test_single_pair(self, corpus, tmp_path):
        labels, images, masks = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        out = tmp_path / "q"
        rc = main(
            [
                "quantify",
                "--image", str(images / "synth00100.image.png"),
                "--mask", str(masks / "synth00100.mask.png"),
                "--calib", str(calib),
                "--out", str(out),
            ]
        )
        assert rc == 0
        summary = json.loads((out / "slide.summary.json").read_text())
        truth = json.loads((corpus / "synth00100.truth.json").read_text())
        assert abs(summary["counts"]["estimated_cell_count"] - truth["true_count"]) <= 3
        table = (out / "slide.cells.csv").read_text().strip().split("\n")
        assert table[0].startswith("cell_id,component_label,area_px")
        assert (out / "slide.overlay.png").exists()

    def test_directory_mode_and_worker_determinism(self, corpus, tmp_path):
        labels, images, masks = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        outputs = {}
        for workers in (1, 2):
            out = tmp_path / f"q{workers}"
            rc = main(
                [
                    "quantify",
                    "--images-dir", str(images),
                    "--masks-dir", str(masks),
                    "--calib", str(calib),
                    "--workers", str(workers),
                    "--out", str(out),
                ]
            )
            assert rc == 0
            outputs[workers] = {
                p.name: p.read_bytes() for p in sorted(out.iterdir())
            }
        assert outputs[1] == outputs[2]

    def test_dimension_mismatch_exit_code(self, corpus, tmp_path, capsys):
        labels, images, _ = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        bad_mask = tmp_path / "bad.mask.png"
        save_binary(BinaryMask(np.zeros((10, 10), bool)), bad_mask)
        rc = main(
            [
                "quantify",
                "--image", str(images / "synth00100.image.png"),
                "--mask", str(bad_mask),
                "--calib", str(calib),
                "--out", str(tmp_path / "qq"),
            ]
        )
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "DIMENSION_MISMATCH"

    def test_missing_calib_is_config_error(self, corpus, tmp_path, capsys):
        _, images, masks = _split_dirs(tmp_path, corpus)
        rc = main(
            [
                "quantify",
                "--images-dir", str(images),
                "--masks-dir", str(masks),
                "--out", str(tmp_path / "x"),
            ]
        )
        assert rc == 2


class TestEvalCommand:
    def test_perfect_predictions(self, corpus, tmp_path):
        labels, images, masks = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        out = tmp_path / "e"
        rc = main(
            [
                "eval",
                "--pred-dir", str(masks),
                "--gt-dir", str(labels),
                "--calib", str(calib),
                "--out", str(out),
            ]
        )
        assert rc == 0
        doc = json.loads((out / "eval.metrics.json").read_text())
        assert doc["aggregate"]["mean_dice"] == 1.0
        for slide in doc["per_slide"]:
            assert slide["dice"] == 1.0
        # scatter data recomputes to the reported r2
        lines = (out / "eval.scatter.csv").read_text().strip().split("\n")[1:]
        xs = [int(l.split(",")[1]) for l in lines]
        ys = [int(l.split(",")[2]) for l in lines]
        if doc["aggregate"]["r_squared"] is not None:
            _, r2 = pearson(xs, ys)
            assert abs(r2 - doc["aggregate"]["r_squared"]) < 1e-12

    def test_stem_mismatch(self, corpus, tmp_path, capsys):
        labels, _, masks = _split_dirs(tmp_path, corpus)
        extra = masks / "zzz.mask.png"
        save_binary(BinaryMask(np.zeros((10, 10), bool)), extra)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        rc = main(
            [
                "eval",
                "--pred-dir", str(masks),
                "--gt-dir", str(labels),
                "--calib", str(calib),
                "--out", str(tmp_path / "e2"),
            ]
        )
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "STEM_MISMATCH"


class TestSslCheckCommand:
    def test_single_config(self, capsys):
        rc = main(["ssl-check", "--n", "8", "--d", "4", "--lambda", "0.005", "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        assert "PASS" in out

    def test_suite_mode(self, capsys):
        rc = main(["ssl-check", "--configs", "10", "--seed", "3"])
        assert rc == 0


class TestTileStitchCommands:
    def test_round_trip_via_files(self, tmp_path):
        rng = np.random.default_rng(0)
        img = RgbSlide(rng.integers(0, 256, (600, 600, 3)).astype(np.uint8))
        src = tmp_path / "img.png"
        save_image(img, src)
        tiles_dir = tmp_path / "tiles"
        rc = main(["tile", "--image", str(src), "--size", "512", "--out", str(tiles_dir)])
        assert rc == 0
        tile_files = sorted(p.name for p in tiles_dir.glob("tile_*.png"))
        assert len(tile_files) == 4
        dst = tmp_path / "restitched.png"
        rc = main(["stitch", "--tiles-dir", str(tiles_dir), "--out", str(dst)])
        assert rc == 0
        assert np.array_equal(load_image(dst).data, img.data)

    def test_binary_mask_tiles(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = BinaryMask(rng.random((300, 700)) < 0.3)
        src = tmp_path / "mask.png"
        save_binary(mask, src)
        tiles_dir = tmp_path / "tiles"
        assert main(["tile", "--image", str(src), "--size", "256", "--out", str(tiles_dir)]) == 0
        dst = tmp_path / "back.png"
        assert main(["stitch", "--tiles-dir", str(tiles_dir), "--out", str(dst)]) == 0
        assert np.array_equal(load_binary(dst).bits, mask.bits)


class TestAugmentCommand:
    def test_writes_deterministic_dump(self, corpus, tmp_path):
        img = next(p for p in corpus.iterdir() if p.name.endswith(".image.png"))
        out1 = tmp_path / "a1"
        out2 = tmp_path / "a2"
        for out in (out1, out2):
            rc = main(["augment", "--image", str(img), "--mode", "4", "--seed", "5", "--out", str(out)])
            assert rc == 0
        f1 = next(out1.iterdir())
        f2 = out2 / f1.name
        assert f1.read_bytes() == f2.read_bytes()


class TestLabelCommand:
    def test_emits_raster_and_stats(self, corpus, tmp_path):
        mask = next(p for p in corpus.iterdir() if p.name.endswith(".mask.png"))
        out = tmp_path / "lab"
        rc = main(["label", "--mask", str(mask), "--out", str(out)])
        assert rc == 0
        labeled = load_label(out / "labels.png")
        stats = (out / "stats.csv").read_text().strip().split("\n")
        assert len(stats) == 1 + labeled.n_labels

    def test_connectivity_flag(self, tmp_path):
        m = np.zeros((8, 8), bool)
        m[0, 0] = m[1, 1] = True
        src = tmp_path / "m.png"
        save_binary(BinaryMask(m), src)
        out4 = tmp_path / "l4"
        assert main(["label", "--mask", str(src), "--connectivity", "4", "--out", str(out4)]) == 0
        assert load_label(out4 / "labels.png").n_labels == 2
        out8 = tmp_path / "l8"
        assert main(["label", "--mask", str(src), "--connectivity", "8", "--out", str(out8)]) == 0
        assert load_label(out8 / "labels.png").n_labels == 1


class TestConfig:
    def test_config_file_supplies_defaults(self, corpus, tmp_path):
        labels, images, masks = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"calibration": str(calib), "out": str(tmp_path / "qc"), "workers": 1}))
        rc = main(
            [
                "quantify",
                "--images-dir", str(images),
                "--masks-dir", str(masks),
                "--config", str(cfg),
            ]
        )
        assert rc == 0
        assert (tmp_path / "qc" / "quantify.report.json").exists()

    def test_flag_overrides_config(self, corpus, tmp_path):
        labels, images, masks = _split_dirs(tmp_path, corpus)
        calib = tmp_path / "calib.json"
        assert main(["calibrate", str(labels), "--out", str(calib)]) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"calibration": str(calib), "out": str(tmp_path / "ignored")}))
        rc = main(
            [
                "quantify",
                "--images-dir", str(images),
                "--masks-dir", str(masks),
                "--config", str(cfg),
                "--out", str(tmp_path / "flagged"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "flagged" / "quantify.report.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_env_var_config(self, corpus, tmp_path, monkeypatch):
        labels, _, _ = _split_dirs(tmp_path, corpus)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"out": str(tmp_path / "from_env")}))
        monkeypatch.setenv("SOMAQUANT_CONFIG", str(cfg))
        rc = main(["calibrate", str(labels)])
        assert rc == 0
        assert (tmp_path / "from_env" / "calibration.json").exists()

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        rc = main(["calibrate", str(tmp_path), "--config", str(cfg)])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "CONFIG"
