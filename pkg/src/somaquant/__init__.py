"""Whole-slide quantification of stained neuronal soma.

Segmentation masks in, cell counts and per-cell intensity profiles out:
tile-scale connected-component labeling, calibrated counting, evaluation
metrics, seeded augmentation, a synthetic-slide oracle, and a verifiable
twin-embedding loss kernel.
"""

from .augment import MODE_OPS, OP_ORDER, AugmentSpec, SamplePair, apply, sample_seed
from .barlow import (
    CrossCorrelation,
    EmbeddingBatch,
    bt_grad,
    bt_loss,
    bt_loss_from_batch,
    cross_correlation,
    gradient_check,
    normalize_batch,
)
from .errors import SomaquantError
from .images import (
    DEFAULT_RESOLUTION_UM,
    BinaryMask,
    FloatImage,
    GrayImage,
    LabelMask,
    RgbSlide,
    binarize,
    canonicalize_labels,
    find_pairs,
    load_binary,
    load_image,
    load_label,
    load_pair,
    normalize,
    save_binary,
    save_gray,
    save_image,
    save_label,
    to_gray,
)
from .labeling import (
    ComponentStats,
    component_stats,
    label_components,
    label_components_tiled,
)
from .metrics import (
    DetectionMatch,
    StatResult,
    counting_error,
    dice,
    dice_loss,
    match_detections,
    pearson,
    precision_recall_f1,
    ttest_ind,
)
from .quantify import (
    Calibration,
    CellRecord,
    CountReport,
    QuantReport,
    assign_bins,
    calibrate,
    count_cells,
    count_naive,
    load_calibration,
    measure_cells,
    quantify_slide,
    render_overlay,
    save_calibration,
    write_cell_table,
)
from .synth import SynthSpec, SynthTruth, derive_binary, generate, save_truth
from .tiles import Tile, TileGrid, pad_to_grid, split, stitch

__version__ = "0.1.0"
