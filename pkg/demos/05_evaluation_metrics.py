"""
Evaluation battery
==================

Segmentation overlap (Dice), instance detection (precision/recall/F1 from
greedy IoU matching), percent counting error, count correlation across
slides, and a two-sample t-test for comparing conditions.
"""

import numpy as np

from somaquant import (
    SynthSpec,
    binarize,
    calibrate,
    count_cells,
    derive_binary,
    dice,
    generate,
    label_components,
    match_detections,
    pearson,
    precision_recall_f1,
    ttest_ind,
)
from somaquant.images import BinaryMask

rng = np.random.default_rng(5)

gt_counts, pred_counts = [], []
dices = []
for seed in range(8):
    spec = SynthSpec(extent=(560, 480), n_cells=24 + 4 * seed, radius_range=(9, 12), seed=seed)
    slide, gt_labels, truth = generate(spec)
    perfect = derive_binary(gt_labels)

    # Imperfect prediction: miss two cells, hallucinate one blob.
    bits = np.array(perfect.bits)
    for victim in rng.choice(np.arange(1, truth.true_count + 1), size=2, replace=False):
        bits[np.asarray(gt_labels.labels) == victim] = False
    bits[4:24, 4:24] |= (np.hypot(*np.mgrid[-10:10, -10:10]) < 9.5)
    pred = BinaryMask(bits)

    d = dice(pred, binarize(gt_labels))
    pred_labeled, _ = label_components(pred)
    m = match_detections(pred_labeled, gt_labels, iou_threshold=0.5)
    p, r, f1 = precision_recall_f1(m)
    dices.append(d)
    if seed == 0:
        print(f"slide 0: dice {d:.4f}; tp {m.tp}, fp {m.fp}, fn {m.fn}; "
              f"precision {p:.3f}, recall {r:.3f}, F1 {f1:.3f}")

    calib = calibrate([gt_labels])
    est = count_cells(pred, calib).estimated_cell_count
    gt_counts.append(truth.true_count)
    pred_counts.append(est)

print(f"\nmean dice over {len(dices)} slides: {np.mean(dices):.4f}")
r_, r2 = pearson(pred_counts, gt_counts)
print(f"count correlation: r {r_:.4f}, r^2 {r2:.4f}")
print("per-slide (predicted, truth):", list(zip(pred_counts, gt_counts)))

# Comparing two conditions: intensity readouts from a "healthy" and a
# "depleted" group of slides.
healthy = rng.normal(95.0, 6.0, 12)
depleted = rng.normal(120.0, 9.0, 12)
res = ttest_ind(healthy, depleted)
print(f"\nt-test healthy vs depleted: t {res.statistic:.3f}, dof {res.dof:.0f}, p {res.p_value:.2e}")
res_w = ttest_ind(healthy, depleted, welch=True)
print(f"Welch variant:              t {res_w.statistic:.3f}, dof {res_w.dof:.1f}, p {res_w.p_value:.2e}")
