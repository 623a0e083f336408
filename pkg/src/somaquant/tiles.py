"""Tile-aligned padding, splitting into fixed-size patches, and stitching.

Slides are zero-padded on the right and bottom to the next multiple of the
tile size, so original pixel coordinates survive the round trip. Tiles are
independent and may be processed in parallel; stitching is order-free
because every tile carries its grid position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateTile, ExtentMismatch, MissingTile

DEFAULT_TILE_SIZE = 512


@dataclass(frozen=True)
class TileGrid:
    """Geometry of a tiling: original extent, padded extent, tile counts."""

    tile_size: int
    cols: int
    rows: int
    original_extent: tuple[int, int]  # (width, height)
    padded_extent: tuple[int, int]  # (width, height)

    @classmethod
    def for_extent(cls, width: int, height: int, tile_size: int = DEFAULT_TILE_SIZE) -> "TileGrid":
        if tile_size < 1:
            raise ValueError("tile_size must be >= 1")
        cols = -(-width // tile_size)
        rows = -(-height // tile_size)
        return cls(
            tile_size=tile_size,
            cols=cols,
            rows=rows,
            original_extent=(width, height),
            padded_extent=(cols * tile_size, rows * tile_size),
        )


@dataclass(frozen=True)
class Tile:
    """One tile_size x tile_size patch and its (col, row) grid position."""

    grid_position: tuple[int, int]
    pixels: np.ndarray


def _extent(array: np.ndarray) -> tuple[int, int]:
    return array.shape[1], array.shape[0]


def _as_array(image) -> np.ndarray:
    """Unwrap the pixel buffer of any image/mask container."""
    if isinstance(image, np.ndarray):
        return image
    for attr in ("bits", "labels", "data"):
        value = getattr(image, attr, None)
        if isinstance(value, np.ndarray):
            return value
    return np.asarray(image)


def pad_to_grid(image, tile_size: int = DEFAULT_TILE_SIZE) -> tuple[np.ndarray, TileGrid]:
    """Zero-pad on the right/bottom to the smallest tile-aligned extent.

    Accepts a slide/mask container or any 2-d/3-d pixel array; the original
    content is bit-identical at offset (0, 0).
    """
    array = _as_array(image)
    width, height = _extent(array)
    grid = TileGrid.for_extent(width, height, tile_size)
    pw, ph = grid.padded_extent
    if (pw, ph) == (width, height):
        return array, grid
    pad = [(0, ph - height), (0, pw - width)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, pad, mode="constant"), grid


def split(padded, grid: TileGrid) -> list[Tile]:
    """Cut a padded array into non-overlapping tiles in row-major order."""
    padded = _as_array(padded)
    if _extent(padded) != grid.padded_extent:
        raise ExtentMismatch(
            f"padded extent {_extent(padded)} does not match grid {grid.padded_extent}"
        )
    t = grid.tile_size
    tiles = []
    for row in range(grid.rows):
        for col in range(grid.cols):
            patch = padded[row * t : (row + 1) * t, col * t : (col + 1) * t]
            tiles.append(Tile(grid_position=(col, row), pixels=patch))
    return tiles


def stitch(tiles: Iterable[Tile] | Sequence[Tile], grid: TileGrid) -> np.ndarray:
    """Reassemble tiles and crop away the padding.

    Tile order is irrelevant; every grid position must appear exactly once.
    """
    tiles = list(tiles)
    t = grid.tile_size
    seen = set()
    out = None
    for tile in tiles:
        col, row = tile.grid_position
        if not (0 <= col < grid.cols and 0 <= row < grid.rows):
            raise ExtentMismatch(f"tile position {(col, row)} outside {grid.cols}x{grid.rows} grid")
        if (col, row) in seen:
            raise DuplicateTile(f"tile {(col, row)} supplied twice")
        seen.add((col, row))
        pixels = np.asarray(tile.pixels)
        if pixels.shape[:2] != (t, t):
            raise ExtentMismatch(f"tile {(col, row)} is {pixels.shape[:2]}, expected {(t, t)}")
        if out is None:
            pw, ph = grid.padded_extent
            out = np.zeros((ph, pw) + pixels.shape[2:], dtype=pixels.dtype)
        out[row * t : (row + 1) * t, col * t : (col + 1) * t] = pixels
    if len(seen) != grid.cols * grid.rows:
        missing = [
            (c, r) for r in range(grid.rows) for c in range(grid.cols) if (c, r) not in seen
        ]
        raise MissingTile(f"missing tiles: {missing[:8]}{'...' if len(missing) > 8 else ''}")
    width, height = grid.original_extent
    return out[:height, :width]
