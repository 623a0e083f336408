"""
Dataset format and image I/O
============================

The dataset convention is an 8-bit RGB slide paired with a 16-bit label
image in which each cell carries one value 1..n. This script writes a tiny
pair, reads it back bit-exactly, and shows how label values with gaps get
compacted on load.
"""

from pathlib import Path

import numpy as np

from somaquant import canonicalize_labels, load_pair, save_image, save_label, to_gray, normalize
from somaquant.images import RgbSlide

out = Path(__file__).parent / "out" / "01"
out.mkdir(parents=True, exist_ok=True)

# A 64x48 slide: warm background with two brown blobs.
rgb = np.full((48, 64, 3), (242, 230, 218), np.uint8)
rgb[10:20, 8:24] = (150, 110, 70)
rgb[30:42, 40:58] = (120, 85, 50)
slide = RgbSlide(rgb)

# Label values 7 and 300 on purpose: real prediction masks are not always
# gap-free, so the loader compacts them to {1, 2} and remembers the origin.
raw = np.zeros((48, 64), np.uint16)
raw[10:20, 8:24] = 7
raw[30:42, 40:58] = 300
labels = canonicalize_labels(raw)
print("labels after canonicalization:", np.unique(labels.labels).tolist())
print("original values:", labels.source_values)

save_image(slide, out / "demo.image.png")
save_label(labels, out / "demo.label.png")

slide2, labels2 = load_pair(out / "demo.image.png", out / "demo.label.png")
print("image round trip bit-exact:", np.array_equal(slide.data, slide2.data))
print("label round trip bit-exact:", np.array_equal(labels.labels, labels2.labels))

# Intensity handling: grayscale by unweighted channel mean (the stain
# darkness readout), and [0, 1] normalization for model input.
gray = to_gray(slide2)
print("background gray:", gray.data[0, 0], "| blob gray:", gray.data[15, 16])
unit = normalize(slide2)
print("normalized range:", float(unit.data.min()), "to", float(unit.data.max()))
