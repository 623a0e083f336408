"""Synthetic slide generator with exactly known geometry and intensities.

Cells are hard-edged rotated ellipses in a warm-brown palette on a light
background, so per-cell mean gray values equal the requested fill intensity
exactly. A requested fraction of cells is placed touching an earlier cell,
reproducing the merged-component failure mode that calibrated counting has
to untangle; the rest are kept provably disjoint. The generator is pure in
its seed and records full ground truth, including which cells share a
rasterized component.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PlacementFailure
from .images import (
    DEFAULT_RESOLUTION_UM,
    MAX_LABELS,
    BinaryMask,
    LabelMask,
    RgbSlide,
    binarize,
)


@dataclass(frozen=True)
class SynthSpec:
    extent: tuple[int, int] = (768, 768)  # (width, height)
    n_cells: int = 50
    radius_range: tuple[float, float] = (6.0, 12.0)
    overlap_fraction: float = 0.0  # fraction of cells placed touching another
    intensity_range: tuple[int, int] = (60, 170)
    background_intensity: int = 230
    seed: int = 0
    resolution: float = DEFAULT_RESOLUTION_UM

    def __post_init__(self):
        w, h = self.extent
        margin = 2 * self.radius_range[1] + 6
        if margin > min(w, h):
            raise ValueError(f"radii {self.radius_range} do not fit extent {self.extent}")
        if not (0.0 <= self.overlap_fraction < 1.0):
            raise ValueError("overlap_fraction must be in [0, 1)")
        if self.n_cells < 0 or self.n_cells > MAX_LABELS:
            raise ValueError(f"n_cells must be in [0, {MAX_LABELS}]")
        if self.radius_range[0] < 2.0:
            raise ValueError("minimum radius must be >= 2 px")


@dataclass(frozen=True)
class CellTruth:
    cell_id: int  # equals the label value in the mask
    center: tuple[float, float]  # (x, y)
    radii: tuple[float, float]  # (rx, ry) before rotation
    angle: float  # radians
    fill_intensity: int


@dataclass(frozen=True)
class SynthTruth:
    true_count: int
    cells: tuple[CellTruth, ...]
    merged_components: tuple[tuple[int, ...], ...]  # groups of cell ids sharing a component


def _cell_color(gray: int, tint: int = 30) -> tuple[int, int, int]:
    # warm tint with channel mean exactly `gray`
    d = min(tint, gray, 255 - gray)
    return gray + d, gray, gray - d


def _ellipse_mask(
    ys: np.ndarray, xs: np.ndarray, cx: float, cy: float, rx: float, ry: float, angle: float
) -> np.ndarray:
    dx = xs - cx
    dy = ys - cy
    ca, sa = np.cos(angle), np.sin(angle)
    u = (dx * ca + dy * sa) / rx
    v = (-dx * sa + dy * ca) / ry
    return u * u + v * v <= 1.0


def generate(spec: SynthSpec) -> tuple[RgbSlide, LabelMask, SynthTruth]:
    """Render a synthetic slide, its label mask, and exact ground truth."""
    w, h = spec.extent
    rng = np.random.default_rng(spec.seed)

    rgb = np.empty((h, w, 3), np.uint8)
    rgb[:] = _cell_color(spec.background_intensity, tint=12)
    labels = np.zeros((h, w), np.uint16)

    n = spec.n_cells
    n_touch = min(int(round(spec.overlap_fraction * n)), max(0, n - 1))
    budget = 10 * max(1, n)
    attempts = 0

    placed: list[CellTruth] = []
    pixel_counts = np.zeros(n + 1, np.int64)
    # parallel arrays over placed cells for vectorized clearance checks
    pxs = np.empty(n, np.float64)
    pys = np.empty(n, np.float64)
    prmax = np.empty(n, np.float64)

    for i in range(1, n + 1):
        want_touch = i > n - n_touch  # later cells get the touching placements
        rx, ry = rng.uniform(spec.radius_range[0], spec.radius_range[1], 2)
        angle = float(rng.uniform(0.0, np.pi))
        fill = int(rng.integers(spec.intensity_range[0], spec.intensity_range[1] + 1))
        rmax = float(max(rx, ry))
        rmin = float(min(rx, ry))

        while True:
            attempts += 1
            if attempts > budget:
                kind = "touching" if want_touch else "disjoint"
                raise PlacementFailure(
                    f"could not place cell {i} ({kind}) within {budget} attempts"
                )
            if want_touch and placed:
                anchor = placed[int(rng.integers(0, len(placed)))]
                a_rmin = min(anchor.radii)
                d = rng.uniform(0.45, 0.9) * (rmin + a_rmin)
                # keep at least 1.5 px of continuum overlap so the raster masks touch
                d = max(1.0, min(d, rmin + a_rmin - 1.5))
                theta = rng.uniform(0.0, 2.0 * np.pi)
                cx = float(anchor.center[0] + d * np.cos(theta))
                cy = float(anchor.center[1] + d * np.sin(theta))
                if not (rmax + 1 <= cx <= w - rmax - 2 and rmax + 1 <= cy <= h - rmax - 2):
                    continue
            else:
                cx = float(rng.uniform(rmax + 1, w - rmax - 2))
                cy = float(rng.uniform(rmax + 1, h - rmax - 2))
                # enforce a clear background gap to every earlier cell
                k = len(placed)
                if k and (
                    np.hypot(pxs[:k] - cx, pys[:k] - cy) < prmax[:k] + rmax + 3.0
                ).any():
                    continue

            x0 = max(0, int(np.floor(cx - rmax - 1)))
            x1 = min(w, int(np.ceil(cx + rmax + 2)))
            y0 = max(0, int(np.floor(cy - rmax - 1)))
            y1 = min(h, int(np.ceil(cy + rmax + 2)))
            ys, xs = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")
            m = _ellipse_mask(ys, xs, cx, cy, rx, ry, angle)
            if not m.any():
                continue

            lab_region = labels[y0:y1, x0:x1]
            overwritten = lab_region[m]
            overwritten = overwritten[overwritten > 0].astype(np.int64)
            if overwritten.size:
                lost = np.bincount(overwritten, minlength=n + 1)
                remaining = pixel_counts - lost
                affected = np.nonzero(lost)[0]
                if (remaining[affected] < 1).any():
                    continue  # would swallow an earlier cell whole
                pixel_counts = remaining
            lab_region[m] = i
            rgb[y0:y1, x0:x1][m] = _cell_color(fill)
            pixel_counts[i] = int(m.sum())
            pxs[len(placed)] = cx
            pys[len(placed)] = cy
            prmax[len(placed)] = rmax
            placed.append(CellTruth(i, (cx, cy), (float(rx), float(ry)), angle, fill))
            break

    merged = _merged_groups(labels, n)
    truth = SynthTruth(true_count=n, cells=tuple(placed), merged_components=merged)
    return RgbSlide(rgb, resolution=spec.resolution), LabelMask(labels, n), truth


def _merged_groups(labels: np.ndarray, n: int) -> tuple[tuple[int, ...], ...]:
    """Group cell ids whose rasterized pixels touch under 8-connectivity."""
    if n == 0:
        return ()
    h, w = labels.shape
    padded = np.pad(labels, 1)
    core = padded[1 : h + 1, 1 : w + 1]
    pairs: set[tuple[int, int]] = set()
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        shifted = padded[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
        touch = (core > 0) & (shifted > 0) & (core != shifted)
        if touch.any():
            pairs.update(zip(core[touch].tolist(), shifted[touch].tolist()))

    parent = list(range(n + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for cell in range(1, n + 1):
        groups.setdefault(find(cell), []).append(cell)
    return tuple(tuple(sorted(g)) for g in sorted(groups.values()))


def derive_binary(mask: LabelMask) -> BinaryMask:
    """Union of all cell pixels: a model that segments foreground perfectly
    but cannot separate touching cells."""
    return binarize(mask)


def truth_document(truth: SynthTruth, spec: SynthSpec) -> dict:
    return {
        "true_count": truth.true_count,
        "extent": list(spec.extent),
        "seed": spec.seed,
        "overlap_fraction": spec.overlap_fraction,
        "cells": [
            {
                "cell_id": c.cell_id,
                "center": [c.center[0], c.center[1]],
                "radii": [c.radii[0], c.radii[1]],
                "angle": c.angle,
                "fill_intensity": c.fill_intensity,
            }
            for c in truth.cells
        ],
        "merged_components": [list(g) for g in truth.merged_components],
    }


def save_truth(truth: SynthTruth, spec: SynthSpec, path: str | os.PathLike):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(truth_document(truth, spec), indent=2) + "\n")
