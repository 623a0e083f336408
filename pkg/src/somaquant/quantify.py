"""Cell counting and per-cell intensity quantification.

Counting works from a calibration learned on ground-truth labels: components
smaller than the minimum labeled cell are discarded as noise, and each
surviving component contributes ``max(1, round(area / average cell area))``
cells so that merged neighbours are apportioned instead of counted once.
Intensity is the mean 8-bit grayscale value over each cell (lower = darker
stain), split into population-wide bins for reporting.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyGroundTruth
from .images import BinaryMask, GrayImage, LabelMask, RgbSlide, to_gray
from .labeling import (
    DEFAULT_CONNECTIVITY,
    ComponentStats,
    component_stats,
    label_components,
    label_components_tiled,
)
from .tiles import DEFAULT_TILE_SIZE, pad_to_grid, split

DEFAULT_BIN_COUNT = 5


@dataclass(frozen=True)
class Calibration:
    """Minimum and average cell area learned from ground-truth labels."""

    min_area: float  # pixels; the literal GT minimum unless a percentile guard was used
    avg_area: float  # pixels
    n_cells: int
    source_ids: tuple[str, ...] = ()
    dataset_hash: str = ""

    def __post_init__(self):
        if not (0 < self.min_area <= self.avg_area):
            raise ValueError(f"need 0 < min_area <= avg_area, got {self.min_area}, {self.avg_area}")
        if self.n_cells < 1:
            raise ValueError("calibration requires at least one cell")


@dataclass(frozen=True)
class CellRecord:
    """One counted cell with geometry and stain intensity."""

    cell_id: int
    component_label: int
    area_px: int
    area_um2: float
    centroid: tuple[float, float]
    mean_th_intensity: float  # 0-255, lower = darker = stronger stain
    intensity_bin: int | None = None  # 1..k, set by assign_bins


@dataclass(frozen=True)
class CountReport:
    """Outcome of the calibrated counting rule on one mask."""

    n_components_raw: int
    n_filtered_small: int
    n_components_kept: int
    estimated_cell_count: int
    per_component: tuple[tuple[int, int, int], ...]  # (label, area, cells_assigned)


@dataclass(frozen=True)
class QuantReport:
    """Counting plus per-cell measurements and population summary."""

    count: CountReport
    cells: tuple[CellRecord, ...]
    mean_intensity: float | None
    min_intensity: float | None
    max_intensity: float | None
    bin_histogram: dict[int, int]
    labels: LabelMask | None = None  # the component labeling the report is based on


def _areas_of_mask(mask: LabelMask) -> np.ndarray:
    if mask.n_labels == 0:
        return np.empty(0, np.int64)
    n = mask.n_labels
    flat = mask.labels.reshape(-1)
    counts = np.zeros(n + 1, np.int64)
    chunk = 1 << 22  # bincount promotes to int64; bound the copy
    for i in range(0, flat.size, chunk):
        counts += np.bincount(flat[i : i + chunk], minlength=n + 1)[: n + 1]
    return counts[1:]


def calibrate(
    gt_masks: Sequence[LabelMask],
    source_ids: Sequence[str] | None = None,
    min_percentile: float | None = None,
) -> Calibration:
    """Learn min/average cell area from ground-truth label masks.

    ``min_percentile`` replaces the literal minimum with that percentile of
    the area distribution, a guard for noisy ground truth.
    """
    areas = [a for m in gt_masks for a in _areas_of_mask(m)]
    if not areas:
        raise EmptyGroundTruth("no labeled cells in any ground-truth mask")
    areas = np.asarray(areas, np.float64)
    if min_percentile is None:
        min_area = float(areas.min())
    else:
        min_area = float(np.percentile(areas, min_percentile))
    digest = hashlib.sha256()
    for m in gt_masks:
        digest.update(np.ascontiguousarray(m.labels).tobytes())
    ids = tuple(source_ids) if source_ids is not None else ()
    return Calibration(
        min_area=min_area,
        avg_area=float(areas.mean()),
        n_cells=int(areas.size),
        source_ids=ids,
        dataset_hash=digest.hexdigest(),
    )


def _cells_for_area(area: float, avg_area: float) -> int:
    # round half away from zero; area and avg_area are positive
    return max(1, int(np.floor(area / avg_area + 0.5)))


def _component_areas(mask, connectivity: int) -> tuple[list[int], list[int]]:
    """(labels, areas) of the mask's components.

    A LabelMask is taken as the component decomposition it already encodes; a
    BinaryMask is labeled first.
    """
    if isinstance(mask, LabelMask):
        areas = _areas_of_mask(mask)
        return list(range(1, mask.n_labels + 1)), [int(a) for a in areas]
    _, stats = label_components(mask, connectivity)
    return [s.label for s in stats], [s.area for s in stats]


def count_cells(
    mask: BinaryMask | LabelMask,
    calib: Calibration,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> CountReport:
    """Calibrated counting: drop sub-minimum components, divide by average size."""
    labels, areas = _component_areas(mask, connectivity)
    per_component = []
    for label, area in zip(labels, areas):
        if area < calib.min_area:
            continue
        per_component.append((label, area, _cells_for_area(area, calib.avg_area)))
    kept = len(per_component)
    return CountReport(
        n_components_raw=len(labels),
        n_filtered_small=len(labels) - kept,
        n_components_kept=kept,
        estimated_cell_count=sum(c for _, _, c in per_component),
        per_component=tuple(per_component),
    )


def count_naive(mask: BinaryMask, connectivity: int = DEFAULT_CONNECTIVITY) -> int:
    """The baseline rule: one cell per connected component, no filtering."""
    labels, _ = _component_areas(mask, connectivity)
    return len(labels)


def _mean_gray_per_label(labels: np.ndarray, gray: np.ndarray, n: int) -> np.ndarray:
    """Mean gray value per label id, computed in bounded-memory chunks."""
    sums = np.zeros(n + 1, np.float64)
    counts = np.zeros(n + 1, np.int64)
    flat_l = labels.reshape(-1)
    flat_g = gray.reshape(-1)
    chunk = 1 << 22
    for i in range(0, flat_l.size, chunk):
        part = flat_l[i : i + chunk]
        sums += np.bincount(part, weights=flat_g[i : i + chunk], minlength=n + 1)[: n + 1]
        counts += np.bincount(part, minlength=n + 1)[: n + 1]
    with np.errstate(invalid="ignore"):
        return sums / counts


def _measure(
    slide: RgbSlide,
    labels: LabelMask,
    stats: Sequence[ComponentStats],
    calib: Calibration,
    gray: GrayImage | None = None,
    gray_rule: str = "mean",
) -> list[CellRecord]:
    if (slide.height, slide.width) != (labels.height, labels.width):
        raise DimensionMismatch(
            f"slide is {slide.width}x{slide.height} but labels are {labels.width}x{labels.height}"
        )
    if gray is None:
        gray = to_gray(slide, rule=gray_rule)
    means = _mean_gray_per_label(labels.labels, gray.data, labels.n_labels)
    um2_per_px = slide.resolution * slide.resolution
    records = []
    cell_id = 0
    for s in stats:
        if s.area < calib.min_area:
            continue
        cell_id += 1
        records.append(
            CellRecord(
                cell_id=cell_id,
                component_label=s.label,
                area_px=s.area,
                area_um2=s.area * um2_per_px,
                centroid=s.centroid,
                mean_th_intensity=float(means[s.label]),
            )
        )
    return records


def measure_cells(
    slide: RgbSlide,
    labels: LabelMask,
    calib: Calibration,
    gray_rule: str = "mean",
) -> list[CellRecord]:
    """Mean TH intensity, area and centroid for every kept component."""
    return _measure(slide, labels, component_stats(labels), calib, gray_rule=gray_rule)


def bin_edges(values: np.ndarray, k: int, rule: str = "equal_width") -> np.ndarray:
    """The k-1 interior bin edges for a population of intensity values."""
    values = np.asarray(values, np.float64)
    if rule == "equal_width":
        lo, hi = float(values.min()), float(values.max())
        return lo + (hi - lo) * np.arange(1, k) / k
    if rule == "quantile":
        return np.quantile(values, np.arange(1, k) / k)
    raise ValueError(f"unknown bin rule {rule!r}")


def assign_bins(
    cells: Sequence[CellRecord], k: int = DEFAULT_BIN_COUNT, rule: str = "equal_width"
) -> list[CellRecord]:
    """Split the cell population into k intensity groups (1 = darkest).

    Bins are equal-width over the observed intensity range by default;
    values landing exactly on an edge go to the lower bin.
    """
    if not cells:
        raise ValueError("assign_bins needs at least one cell")
    vals = np.asarray([c.mean_th_intensity for c in cells], np.float64)
    edges = bin_edges(vals, k, rule)
    bins = 1 + np.searchsorted(edges, vals, side="left")
    return [replace(c, intensity_bin=int(b)) for c, b in zip(cells, bins)]


def quantify_slide(
    slide: RgbSlide,
    mask: BinaryMask,
    calib: Calibration,
    connectivity: int = DEFAULT_CONNECTIVITY,
    tile_size: int | None = DEFAULT_TILE_SIZE,
    k_bins: int = DEFAULT_BIN_COUNT,
    gray_rule: str = "mean",
    bin_rule: str = "equal_width",
) -> QuantReport:
    """Label, count, measure and bin one slide against a calibration.

    Masks larger than one tile are labeled through the tiled path so
    whole-slide inputs stay within memory; results are identical either way.
    """
    if (slide.height, slide.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"slide is {slide.width}x{slide.height} but mask is {mask.width}x{mask.height}"
        )
    if tile_size is not None and (mask.width > tile_size or mask.height > tile_size):
        padded, grid = pad_to_grid(mask.bits, tile_size)
        labeled, stats = label_components_tiled(split(padded, grid), grid, connectivity)
    else:
        labeled, stats = label_components(mask, connectivity)

    per_component = []
    for s in stats:
        if s.area < calib.min_area:
            continue
        per_component.append((s.label, s.area, _cells_for_area(s.area, calib.avg_area)))
    count = CountReport(
        n_components_raw=len(stats),
        n_filtered_small=len(stats) - len(per_component),
        n_components_kept=len(per_component),
        estimated_cell_count=sum(c for _, _, c in per_component),
        per_component=tuple(per_component),
    )

    records = _measure(slide, labeled, stats, calib, gray_rule=gray_rule)
    if records:
        records = assign_bins(records, k_bins, bin_rule)
    intensities = [c.mean_th_intensity for c in records]
    histogram = {b: 0 for b in range(1, k_bins + 1)}
    for c in records:
        histogram[c.intensity_bin] += 1
    return QuantReport(
        count=count,
        cells=tuple(records),
        mean_intensity=float(np.mean(intensities)) if intensities else None,
        min_intensity=min(intensities) if intensities else None,
        max_intensity=max(intensities) if intensities else None,
        bin_histogram=histogram,
        labels=labeled,
    )


# Intensity-bin palette for overlays, darkest stain first (bin 1).
BIN_PALETTE = (
    (84, 48, 5),
    (140, 81, 10),
    (191, 129, 45),
    (223, 194, 125),
    (246, 232, 195),
)


def render_overlay(slide: RgbSlide, labels: LabelMask, cells: Sequence[CellRecord]) -> RgbSlide:
    """Slide with each counted cell outlined in its intensity-bin color."""
    lab = labels.labels
    fg = lab > 0
    boundary = np.zeros_like(fg)
    # a pixel is boundary if any 4-neighbour has a different label (image
    # border counts as different)
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        rolled = np.roll(lab, shift, axis=axis)
        edge = lab != rolled
        if axis == 0:
            idx = 0 if shift == 1 else -1
            edge[idx, :] = True
        else:
            idx = 0 if shift == 1 else -1
            edge[:, idx] = True
        boundary |= edge
    boundary &= fg

    out = np.array(slide.data)
    palette = np.asarray(BIN_PALETTE, np.uint8)
    color_of = np.zeros((labels.n_labels + 1, 3), np.uint8)
    keep = np.zeros(labels.n_labels + 1, bool)
    for c in cells:
        b = c.intensity_bin if c.intensity_bin is not None else 1
        color_of[c.component_label] = palette[min(b, len(palette)) - 1]
        keep[c.component_label] = True
    draw = boundary & keep[lab]
    out[draw] = color_of[lab[draw]]
    return RgbSlide(out, resolution=slide.resolution)


def save_calibration(calib: Calibration, path: str | os.PathLike, created_at: str | None = None):
    """Write a calibration file with provenance."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "min_area_px": calib.min_area,
        "avg_area_px": calib.avg_area,
        "n_cells": calib.n_cells,
        "source_ids": list(calib.source_ids),
        "dataset_hash": calib.dataset_hash,
        "created_at": created_at
        if created_at is not None
        else datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    p.write_text(json.dumps(doc, indent=2) + "\n")


def load_calibration(path: str | os.PathLike) -> Calibration:
    doc = json.loads(Path(path).read_text())
    return Calibration(
        min_area=float(doc["min_area_px"]),
        avg_area=float(doc["avg_area_px"]),
        n_cells=int(doc["n_cells"]),
        source_ids=tuple(doc.get("source_ids", ())),
        dataset_hash=doc.get("dataset_hash", ""),
    )


CELL_TABLE_HEADER = "cell_id,component_label,area_px,area_um2,centroid_x,centroid_y,mean_th_intensity,intensity_bin"


def write_cell_table(cells: Sequence[CellRecord], path: str | os.PathLike):
    """Per-cell CSV, one row per counted cell."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [CELL_TABLE_HEADER]
    for c in cells:
        lines.append(
            f"{c.cell_id},{c.component_label},{c.area_px},{c.area_um2!r},"
            f"{c.centroid[0]!r},{c.centroid[1]!r},{c.mean_th_intensity!r},"
            f"{c.intensity_bin if c.intensity_bin is not None else ''}"
        )
    p.write_text("\n".join(lines) + "\n")


def report_document(report: QuantReport, calibration_ref: dict | None = None) -> dict:
    """JSON-ready summary of a quantification run (full-precision floats)."""
    return {
        "counts": {
            "n_components_raw": report.count.n_components_raw,
            "n_filtered_small": report.count.n_filtered_small,
            "n_components_kept": report.count.n_components_kept,
            "estimated_cell_count": report.count.estimated_cell_count,
        },
        "intensity": {
            "mean": report.mean_intensity,
            "min": report.min_intensity,
            "max": report.max_intensity,
            "bin_histogram": {str(k): v for k, v in sorted(report.bin_histogram.items())},
        },
        "calibration": calibration_ref or {},
    }
