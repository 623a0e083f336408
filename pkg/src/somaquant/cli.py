"""Batch orchestration CLI: calibrate -> quantify -> evaluate over
directories of slides, plus debugging subcommands for tiling, labeling,
augmentation, synthetic data and the embedding-loss kernel.

Exit codes: 0 success, 2 input validation, 3 processing error. Errors are
reported as a single JSON line on stderr. All reports are deterministic
given config + seed; the worker count never changes any emitted number.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentSpec, SamplePair, apply
from .barlow import gradient_check
from .errors import ConfigError, EmptyGroundTruth, SomaquantError, StemMismatch
from .images import (
    BinaryMask,
    RgbSlide,
    binarize,
    load_binary,
    load_image,
    load_label,
    normalize,
    save_binary,
    save_image,
    save_label,
)
from .labeling import label_components
from .metrics import dice, match_detections, pearson, precision_recall_f1
from .quantify import (
    calibrate,
    count_cells,
    count_naive,
    load_calibration,
    quantify_slide,
    render_overlay,
    report_document,
    save_calibration,
    write_cell_table,
)
from .synth import SynthSpec, derive_binary, generate, save_truth
from .tiles import Tile, TileGrid, pad_to_grid, split, stitch

CONFIG_ENV_VAR = "SOMAQUANT_CONFIG"

_RASTER_SUFFIXES = (".png", ".tif", ".tiff", ".bmp")


@dataclass
class PipelineConfig:
    """Defaults shared by the pipeline subcommands; flags win over config."""

    tile_size: int = 512
    connectivity: int = 8
    calibration: str | None = None
    grayscale_rule: str = "mean"
    bin_rule: str = "equal_width"
    bins: int = 5
    iou_threshold: float = 0.5
    augmentation: dict | None = None
    workers: int = 1
    out: str = "."

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PipelineConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        if cfg.calibration is not None and not Path(cfg.calibration).is_file():
            raise ConfigError(f"calibration file not found: {cfg.calibration}")
        return cfg


def _load_config(args) -> PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    return PipelineConfig.load(path) if path else PipelineConfig()


def _setting(args, cfg: PipelineConfig, name: str):
    value = getattr(args, name, None)
    return value if value is not None else getattr(cfg, name)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _write_json(doc: dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _stems(directory: Path) -> dict[str, Path]:
    """Map each file's leading stem (text before the first dot) to its path."""
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in _RASTER_SUFFIXES:
            stem = p.name.split(".", 1)[0]
            out.setdefault(stem, p)
    return out


def _paired_stems(a: Path, b: Path, what_a: str, what_b: str) -> list[tuple[str, Path, Path]]:
    sa, sb = _stems(a), _stems(b)
    if sa.keys() != sb.keys():
        only_a = sorted(sa.keys() - sb.keys())[:5]
        only_b = sorted(sb.keys() - sa.keys())[:5]
        raise StemMismatch(
            f"stems differ between {what_a} and {what_b}: "
            f"only in {what_a}: {only_a}; only in {what_b}: {only_b}"
        )
    if not sa:
        raise StemMismatch(f"no raster files found in {a}")
    return [(stem, sa[stem], sb[stem]) for stem in sorted(sa)]


# ---------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    labels_dir = Path(args.labels_dir)
    if not labels_dir.is_dir():
        raise EmptyGroundTruth(f"labels directory not found: {labels_dir}")
    paths = [
        p
        for p in sorted(labels_dir.iterdir())
        if p.is_file() and p.suffix.lower() in _RASTER_SUFFIXES
    ]
    if not paths:
        raise EmptyGroundTruth(f"no label files in {labels_dir}")
    masks = [load_label(p) for p in paths]
    calib = calibrate(masks, source_ids=[p.name for p in paths], min_percentile=args.min_percentile)
    out = Path(_setting(args, cfg, "out"))
    out_path = out / "calibration.json" if out.is_dir() or not out.suffix else out
    save_calibration(calib, out_path, created_at=args.created_at)
    print(
        f"calibrated {calib.n_cells} cells from {len(paths)} masks: "
        f"min_area {_fmt(calib.min_area)} px, avg_area {_fmt(calib.avg_area)} px"
    )
    print(f"wrote {out_path}")
    return 0


# ----------------------------------------------------------------- quantify


def _quantify_one(task: tuple) -> dict:
    stem, image_path, mask_path, calib_path, out_dir, settings = task
    slide = load_image(image_path)
    mask = load_binary(mask_path)
    calib = load_calibration(calib_path)
    report = quantify_slide(
        slide,
        mask,
        calib,
        connectivity=settings["connectivity"],
        tile_size=settings["tile_size"],
        k_bins=settings["bins"],
        gray_rule=settings["grayscale_rule"],
        bin_rule=settings["bin_rule"],
    )
    out_dir = Path(out_dir)
    write_cell_table(report.cells, out_dir / f"{stem}.cells.csv")
    doc = report_document(report, calibration_ref={"path": str(calib_path), "hash": calib.dataset_hash})
    _write_json(doc, out_dir / f"{stem}.summary.json")
    if report.cells:
        overlay = render_overlay(slide, report.labels, report.cells)
        save_image(overlay, out_dir / f"{stem}.overlay.png")
    return {"stem": stem, "estimated_cell_count": report.count.estimated_cell_count}


def cmd_quantify(args) -> int:
    cfg = _load_config(args)
    calib_path = _setting(args, cfg, "calibration")
    if not calib_path:
        raise ConfigError("quantify requires --calib (or `calibration` in the config)")
    out_dir = Path(_setting(args, cfg, "out"))
    settings = {
        "connectivity": int(_setting(args, cfg, "connectivity")),
        "tile_size": int(_setting(args, cfg, "tile_size")),
        "bins": int(_setting(args, cfg, "bins")),
        "grayscale_rule": _setting(args, cfg, "grayscale_rule"),
        "bin_rule": _setting(args, cfg, "bin_rule"),
    }
    if args.image or args.mask:
        if not (args.image and args.mask):
            raise ConfigError("provide both --image and --mask (or use --images-dir/--masks-dir)")
        tasks = [("slide", Path(args.image), Path(args.mask), calib_path, out_dir, settings)]
    else:
        if not (args.images_dir and args.masks_dir):
            raise ConfigError("provide --image/--mask or --images-dir/--masks-dir")
        pairs = _paired_stems(Path(args.images_dir), Path(args.masks_dir), "images", "masks")
        tasks = [(stem, ip, mp, calib_path, out_dir, settings) for stem, ip, mp in pairs]

    workers = int(_setting(args, cfg, "workers"))
    results = _run_pool(_quantify_one, tasks, workers)
    _write_json({"slides": results}, out_dir / "quantify.report.json")
    for r in results:
        print(f"{r['stem']}: {r['estimated_cell_count']} cells")
    print(f"wrote {out_dir / 'quantify.report.json'}")
    return 0


def _run_pool(fn, tasks, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------- eval


def _eval_one(task: tuple) -> dict:
    stem, pred_path, gt_path, calib_path, settings = task
    pred = load_binary(pred_path)
    gt = load_label(gt_path)
    calib = load_calibration(calib_path)
    conn = settings["connectivity"]
    pred_labels, _ = label_components(pred, conn)
    m = match_detections(pred_labels, gt, settings["iou_threshold"])
    p, r, f1 = precision_recall_f1(m)
    report = count_cells(pred, calib, conn)
    gt_count = gt.n_labels
    err = 100.0 * abs(report.estimated_cell_count - gt_count) / gt_count if gt_count else None
    return {
        "stem": stem,
        "dice": dice(pred, binarize(gt)),
        "precision": p,
        "recall": r,
        "f1": f1,
        "pred_count": report.estimated_cell_count,
        "naive_count": count_naive(pred, conn),
        "gt_count": gt_count,
        "counting_error_pct": err,
    }


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    calib_path = _setting(args, cfg, "calibration")
    if not calib_path:
        raise ConfigError("eval requires --calib (or `calibration` in the config)")
    pairs = _paired_stems(Path(args.pred_dir), Path(args.gt_dir), "predictions", "ground truth")
    settings = {
        "connectivity": int(_setting(args, cfg, "connectivity")),
        "iou_threshold": float(_setting(args, cfg, "iou_threshold")),
    }
    tasks = [(stem, pp, gp, calib_path, settings) for stem, pp, gp in pairs]
    workers = int(_setting(args, cfg, "workers"))
    per_slide = _run_pool(_eval_one, tasks, workers)

    scored = [s for s in per_slide if s["counting_error_pct"] is not None]
    aggregate = {
        "mean_dice": float(np.mean([s["dice"] for s in per_slide])),
        "mean_precision": float(np.mean([s["precision"] for s in per_slide])),
        "mean_recall": float(np.mean([s["recall"] for s in per_slide])),
        "mean_f1": float(np.mean([s["f1"] for s in per_slide])),
        "mean_counting_error_pct": float(np.mean([s["counting_error_pct"] for s in scored]))
        if scored
        else None,
    }
    xs = [s["pred_count"] for s in per_slide]
    ys = [s["gt_count"] for s in per_slide]
    try:
        r, r2 = pearson(xs, ys)
        aggregate["pearson_r"] = r
        aggregate["r_squared"] = r2
    except SomaquantError:
        aggregate["pearson_r"] = None
        aggregate["r_squared"] = None

    out_dir = Path(_setting(args, cfg, "out"))
    _write_json({"per_slide": per_slide, "aggregate": aggregate}, out_dir / "eval.metrics.json")
    scatter = ["stem,pred_count,gt_count"]
    scatter += [f"{s['stem']},{s['pred_count']},{s['gt_count']}" for s in per_slide]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.scatter.csv").write_text("\n".join(scatter) + "\n")

    print(
        f"{len(per_slide)} slides: mean dice {_fmt(aggregate['mean_dice'])}, "
        f"mean F1 {_fmt(aggregate['mean_f1'])}, "
        + (
            f"mean counting error {_fmt(aggregate['mean_counting_error_pct'])}%"
            if aggregate["mean_counting_error_pct"] is not None
            else "no counting error (empty ground truth)"
        )
    )
    if aggregate["r_squared"] is not None:
        print(f"count correlation r^2 {_fmt(aggregate['r_squared'])}")
    print(f"wrote {out_dir / 'eval.metrics.json'}")
    return 0


# -------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(_setting(args, cfg, "out"))
    base_seed = args.seed if args.seed is not None else 0
    for k in range(args.count):
        seed = base_seed + k
        spec = SynthSpec(
            extent=(args.width, args.height),
            n_cells=args.cells,
            radius_range=(args.radius_min, args.radius_max),
            overlap_fraction=args.overlap,
            seed=seed,
        )
        slide, labels, truth = generate(spec)
        stem = f"synth{seed:05d}"
        save_image(slide, out_dir / f"{stem}.image.png")
        save_label(labels, out_dir / f"{stem}.label.png")
        save_binary(derive_binary(labels), out_dir / f"{stem}.mask.png")
        save_truth(truth, spec, out_dir / f"{stem}.truth.json")
        print(f"{stem}: {truth.true_count} cells, {len(truth.merged_components)} components")
    return 0


# ---------------------------------------------------------------- ssl-check


def cmd_ssl_check(args) -> int:
    tol = args.tolerance
    if args.n is not None or args.d is not None:
        n = args.n or 8
        d = args.d or 4
        worst = gradient_check(n, d, lam=args.lam, seed=args.seed or 0)
        configs = 1
    else:
        rng = np.random.default_rng(args.seed or 0)
        worst = 0.0
        configs = args.configs
        lams = [0.0, args.lam, 1.0]
        for k in range(configs):
            n = int(rng.integers(2, 17))
            d = int(rng.integers(2, 9))
            lam = lams[k % len(lams)]
            worst = max(worst, gradient_check(n, d, lam=lam, seed=int(rng.integers(0, 2**31))))
    ok = worst < tol
    print(
        f"gradient check over {configs} config(s): max relative error {_fmt(worst)} "
        f"({'PASS' if ok else 'FAIL'} at {tol:g})"
    )
    return 0 if ok else 3


# ------------------------------------------------------------- tile/stitch


def _load_any_raster(path: Path):
    """RGB slide or single-channel mask, whichever the file holds."""
    try:
        return "rgb", load_image(path)
    except SomaquantError:
        return "binary", load_binary(path)


def cmd_tile(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(_setting(args, cfg, "out"))
    kind, loaded = _load_any_raster(Path(args.image))
    array = loaded.data if kind == "rgb" else loaded.bits
    padded, grid = pad_to_grid(array, args.size)
    tiles = split(padded, grid)
    out_dir.mkdir(parents=True, exist_ok=True)
    for tile in tiles:
        col, row = tile.grid_position
        name = f"tile_r{row:03d}_c{col:03d}.png"
        if kind == "rgb":
            save_image(RgbSlide(tile.pixels), out_dir / name)
        else:
            save_binary(BinaryMask(tile.pixels), out_dir / name)
    _write_json(
        {
            "tile_size": grid.tile_size,
            "cols": grid.cols,
            "rows": grid.rows,
            "original_extent": list(grid.original_extent),
            "padded_extent": list(grid.padded_extent),
            "kind": kind,
        },
        out_dir / "grid.json",
    )
    print(f"wrote {len(tiles)} tiles and grid.json to {out_dir}")
    return 0


def cmd_stitch(args) -> int:
    if not args.out:
        raise ConfigError("stitch requires --out OUTPUT_FILE")
    tiles_dir = Path(args.tiles_dir)
    grid_path = tiles_dir / "grid.json"
    if not grid_path.is_file():
        raise ConfigError(f"no grid.json in {tiles_dir}; run `tile` first")
    doc = json.loads(grid_path.read_text())
    grid = TileGrid(
        tile_size=doc["tile_size"],
        cols=doc["cols"],
        rows=doc["rows"],
        original_extent=tuple(doc["original_extent"]),
        padded_extent=tuple(doc["padded_extent"]),
    )
    tiles = []
    for row in range(grid.rows):
        for col in range(grid.cols):
            p = tiles_dir / f"tile_r{row:03d}_c{col:03d}.png"
            if doc["kind"] == "rgb":
                tiles.append(Tile((col, row), load_image(p).data))
            else:
                tiles.append(Tile((col, row), load_binary(p).bits))
    full = stitch(tiles, grid)
    out = Path(args.out)
    if doc["kind"] == "rgb":
        save_image(RgbSlide(full), out)
    else:
        save_binary(BinaryMask(full), out)
    print(f"stitched {len(tiles)} tiles to {out}")
    return 0


# ------------------------------------------------------------------ augment


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(_setting(args, cfg, "out"))
    slide = load_image(args.image)
    mask = load_binary(args.mask) if args.mask else None
    spec_kwargs = dict(cfg.augmentation or {})
    spec_kwargs["mode"] = args.mode
    spec_kwargs["seed"] = args.seed if args.seed is not None else 0
    spec = AugmentSpec(**spec_kwargs)
    pair = apply(SamplePair(image=normalize(slide), mask=mask), spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    img8 = np.clip(np.rint(pair.image.data * 255.0), 0, 255).astype(np.uint8)
    save_image(RgbSlide(img8), out_dir / f"augmented_mode{args.mode}_seed{spec.seed}.png")
    if pair.mask is not None:
        save_binary(pair.mask, out_dir / f"augmented_mode{args.mode}_seed{spec.seed}.mask.png")
    print(f"wrote augmented sample (mode {args.mode}, seed {spec.seed}) to {out_dir}")
    return 0


# -------------------------------------------------------------------- label


def cmd_label(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(_setting(args, cfg, "out"))
    conn = int(_setting(args, cfg, "connectivity"))
    mask = load_binary(args.mask)
    labeled, stats = label_components(mask, conn)
    save_label(labeled, out_dir / "labels.png")
    lines = ["label,area,centroid_x,centroid_y,x0,y0,x1,y1"]
    for s in stats:
        lines.append(
            f"{s.label},{s.area},{s.centroid[0]!r},{s.centroid[1]!r},"
            f"{s.bbox[0]},{s.bbox[1]},{s.bbox[2]},{s.bbox[3]}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.csv").write_text("\n".join(lines) + "\n")
    print(f"{labeled.n_labels} components; wrote labels.png and stats.csv to {out_dir}")
    return 0


# --------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"pipeline config JSON (or ${CONFIG_ENV_VAR})")
    common.add_argument("--workers", type=int, default=None, help="parallel workers")
    common.add_argument("--seed", type=int, default=None, help="base random seed")
    common.add_argument("--out", default=None, help="output directory or file")

    parser = argparse.ArgumentParser(prog="somaquant", description=__doc__)
    parser.add_argument("--version", action="version", version=f"somaquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="learn min/avg cell area from GT labels")
    p.add_argument("labels_dir")
    p.add_argument("--min-percentile", type=float, default=None, help="percentile guard for min area")
    p.add_argument("--created-at", default=None, help="pin the provenance timestamp")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("quantify", parents=[common], help="count and profile cells in masks")
    p.add_argument("--image", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--images-dir", default=None)
    p.add_argument("--masks-dir", default=None)
    p.add_argument("--calib", dest="calibration", default=None)
    p.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--grayscale-rule", dest="grayscale_rule", choices=("mean", "weighted"), default=None)
    p.add_argument("--bin-rule", dest="bin_rule", choices=("equal_width", "quantile"), default=None)
    p.set_defaults(fn=cmd_quantify)

    p = sub.add_parser("eval", parents=[common], help="score predictions against GT labels")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--calib", dest="calibration", default=None)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=None)
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic slides with ground truth")
    p.add_argument("--cells", type=int, default=50)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--width", type=int, default=768)
    p.add_argument("--height", type=int, default=768)
    p.add_argument("--radius-min", type=float, default=6.0)
    p.add_argument("--radius-max", type=float, default=12.0)
    p.add_argument("--count", type=int, default=1, help="number of slides (seeds increment)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ssl-check", parents=[common], help="verify the embedding-loss gradients")
    p.add_argument("--n", type=int, default=None, help="batch size for a single check")
    p.add_argument("--d", type=int, default=None, help="embedding dim for a single check")
    p.add_argument("--lambda", dest="lam", type=float, default=0.005)
    p.add_argument("--configs", type=int, default=100, help="random configs when --n/--d not given")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(fn=cmd_ssl_check)

    p = sub.add_parser("tile", parents=[common], help="split an image into tiles")
    p.add_argument("--image", required=True)
    p.add_argument("--size", type=int, default=512)
    p.set_defaults(fn=cmd_tile)

    p = sub.add_parser("stitch", parents=[common], help="reassemble tiles written by `tile`")
    p.add_argument("--tiles-dir", required=True)
    p.set_defaults(fn=cmd_stitch)

    p = sub.add_parser("augment", parents=[common], help="apply an augmentation mode for inspection")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--mode", type=int, default=1)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("label", parents=[common], help="connected components of a binary mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=None)
    p.set_defaults(fn=cmd_label)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SomaquantError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "message": str(exc)}) + "\n")
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - unexpected
        sys.stderr.write(json.dumps({"error": "INTERNAL", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
