# ---
# jupyter:
#   jupytext:
#     formats: py:light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Boxes, masks, and non-maximal suppression
#
# The geometry layer is the foundation everything else stands on: boxes in
# continuous pixel coordinates, run-length-encoded binary masks, and the
# handful of operations the pipelines compose (IoU, rasterization, union,
# tight boxes, NMS).

# +
import numpy as np

from cmsf import (
    BinaryMask,
    BoundingBox,
    ScoredBox,
    box_iou,
    mask_iou,
    mask_union,
    nms,
    rasterize_box,
    tight_bbox,
)

# -

# Two overlapping 2x2 boxes share one unit of area, so IoU = 1 / (4+4-1).

a = BoundingBox(0, 0, 2, 2)
b = BoundingBox(1, 1, 3, 3)
print(f"box_iou = {box_iou(a, b):.6f}  (exact 1/7 = {1 / 7:.6f})")

# Rasterization uses half-open pixel coverage: pixel (x, y) is foreground
# iff x_min <= x < x_max and y_min <= y < y_max, clamped to the frame.

mask = rasterize_box(BoundingBox(1, 1, 3, 2), 4, 4)
print(mask.to_array().astype(int))
print("RLE runs:", mask.runs)

# Masks round-trip losslessly through the run-length codec and both
# serialized forms (RLE JSON and grayscale PNG).

# +
rng = np.random.default_rng(7)
random_mask = BinaryMask.from_array(rng.random((12, 12)) < 0.4)

assert BinaryMask.from_json_dict(random_mask.to_json_dict()) == random_mask
assert BinaryMask.from_png_bytes(random_mask.to_png_bytes()) == random_mask
print("codec round-trips hold; foreground pixels:", random_mask.foreground_count)
# -

# The union of a mask and its complement covers the frame, and the tight
# box of a rasterized box re-rasterizes to the same mask.

# +
complement = BinaryMask.from_array(~random_mask.to_array())
assert mask_union([random_mask, complement]) == BinaryMask.full(12, 12)

boxed = rasterize_box(BoundingBox(2.5, 3.0, 9.25, 7.75), 12, 12)
assert rasterize_box(tight_bbox(boxed), 12, 12) == boxed
print("union and tight-box fixpoint hold")
# -

# Greedy NMS keeps the best-scoring box of each overlapping cluster. Ties
# keep the earlier input index, which makes results fully deterministic.

# +
cluster = [
    ScoredBox(BoundingBox(10, 10, 30, 30), 0.75),
    ScoredBox(BoundingBox(11, 11, 31, 31), 0.90),  # same object, better score
    ScoredBox(BoundingBox(60, 40, 90, 80), 0.60),  # different object
]
for kept in nms(cluster, iou_threshold=0.5):
    print(f"kept score={kept.score:.2f} box=({kept.box.x_min:.0f},{kept.box.y_min:.0f},"
          f"{kept.box.x_max:.0f},{kept.box.y_max:.0f})")
# -

# Mask IoU agrees with direct pixel counting, and two empty masks count as
# a perfect match so silent frames never poison sequence averages.

left = BinaryMask.from_array(np.array([[1, 1, 0, 0]], bool))
mid = BinaryMask.from_array(np.array([[0, 1, 1, 0]], bool))
print("mask_iou(1100, 0110) =", mask_iou(left, mid))
print("mask_iou(empty, empty) =", mask_iou(BinaryMask.empty(4, 1), BinaryMask.empty(4, 1)))
