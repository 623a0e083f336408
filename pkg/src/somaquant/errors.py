"""Exception types shared across the package.

Every error carries a short machine-readable code (used by the CLI for its
structured stderr line) and an exit category: 2 for input validation
failures, 3 for processing failures.
"""

from __future__ import annotations


class SomaquantError(Exception):
    """Base class for all package errors."""

    code = "ERROR"
    exit_code = 3


class DimensionMismatch(SomaquantError):
    code = "DIMENSION_MISMATCH"
    exit_code = 2


class BitDepthError(SomaquantError):
    code = "BIT_DEPTH"
    exit_code = 2


class MissingFile(SomaquantError):
    code = "MISSING_FILE"
    exit_code = 2


class LossyFormatError(SomaquantError):
    code = "LOSSY_FORMAT"
    exit_code = 2


class ExtentMismatch(SomaquantError):
    code = "EXTENT_MISMATCH"
    exit_code = 2


class MissingTile(SomaquantError):
    code = "MISSING_TILE"
    exit_code = 2


class DuplicateTile(SomaquantError):
    code = "DUPLICATE_TILE"
    exit_code = 2


class TooManyComponents(SomaquantError):
    """More distinct components than a 16-bit label image can hold."""

    code = "TOO_MANY_COMPONENTS"
    exit_code = 3


class EmptyGroundTruth(SomaquantError):
    code = "EMPTY_GROUND_TRUTH"
    exit_code = 2


class ZeroGroundTruth(SomaquantError):
    code = "ZERO_GROUND_TRUTH"
    exit_code = 2


class DegenerateSeries(SomaquantError):
    code = "DEGENERATE_SERIES"
    exit_code = 2


class NoDetectionsAndNoTruth(SomaquantError):
    code = "NO_DETECTIONS_AND_NO_TRUTH"
    exit_code = 2


class InvalidMode(SomaquantError):
    code = "INVALID_MODE"
    exit_code = 2


class PlacementFailure(SomaquantError):
    code = "PLACEMENT_FAILURE"
    exit_code = 3


class StemMismatch(SomaquantError):
    code = "STEM_MISMATCH"
    exit_code = 2


class ConfigError(SomaquantError):
    code = "CONFIG"
    exit_code = 2
