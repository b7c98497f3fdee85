"""Encode pedestrian boxes into center/scale/offset maps and decode them back.

Run from the repository root:  python3 demos/01_codec_round_trip.py
"""

import numpy as np

from mscsp import (
    Annotation,
    BBox,
    ImageSize,
    Label,
    Occlusion,
    decode_detections,
    encode_targets,
)

size = ImageSize(width=480, height=384)
people = [
    Annotation(BBox(183.6, 60.0, 32.8, 80.0), Label.PERSON, Occlusion.NONE),
    Annotation(BBox(300.2, 200.5, 22.55, 55.0), Label.PERSON, Occlusion.PARTIAL),
    Annotation(BBox(60.0, 310.0, 12.3, 30.0), Label.PERSON, Occlusion.NONE),
]

print(f"input image: {size.width}x{size.height}")
print(f"annotations: {len(people)} pedestrians")
for ann in people:
    cx, cy = ann.box.center
    print(f"  center ({cx:7.2f}, {cy:7.2f})  h {ann.box.h:6.2f}")

maps = encode_targets(people, size)
rows, cols = maps.shape
print(f"\ntarget maps: {rows}x{cols} (1/4 of the input resolution)")
print(f"center cells: {maps.positive_mask.sum()}")
print(f"heatmap peak: {maps.center.max():.3f}, mean {maps.center.mean():.5f}")
for r, c in np.argwhere(maps.positive_mask):
    print(
        f"  cell ({r:3d},{c:3d})  ln(h) = {maps.scale[r, c]:.4f}"
        f"  offset = ({maps.offset[r, c, 0]:.3f}, {maps.offset[r, c, 1]:.3f})"
    )

dets = decode_detections(maps, size)
print(f"\ndecoded detections: {len(dets)}")
for det in dets:
    cx, cy = det.box.center
    print(f"  score {det.score:.2f}  center ({cx:7.2f}, {cy:7.2f})  h {det.box.h:6.2f}")

print("\nround-trip errors (decoded vs annotated):")
for ann in people:
    tx, ty = ann.box.center
    best = min(dets, key=lambda d: abs(d.box.center[0] - tx) + abs(d.box.center[1] - ty))
    bx, by = best.box.center
    print(
        f"  center err ({abs(bx - tx):.2e}, {abs(by - ty):.2e}) px"
        f"  relative height err {abs(best.box.h - ann.box.h) / ann.box.h:.2e}"
    )
