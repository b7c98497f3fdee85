"""Encode annotations into center/scale/offset maps and decode maps into boxes.

The object representation is three planes at 1/4 of the input resolution:
a center heatmap (1 at object-center cells, Gaussian-supplemented elsewhere),
a scale map carrying ln(box height) at center cells, and a sub-cell offset
map that restores the exact center position lost to downsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Annotation, BBox, Label


@dataclass(frozen=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self}")


@dataclass(frozen=True)
class CodecConfig:
    stride: int = 4
    confidence_threshold: float = 0.01
    nms_threshold: float = 0.3
    aspect_ratio: float = 0.41
    gaussian_sigma_factor: float = 0.125
    # Radius (in cells) over which scale/offset targets are replicated around
    # each center cell. 0 keeps the encode/decode round trip exact.
    target_radius: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        for name in ("confidence_threshold", "nms_threshold", "aspect_ratio"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.gaussian_sigma_factor <= 0:
            raise ValueError("gaussian_sigma_factor must be positive")
        if self.target_radius < 0:
            raise ValueError("target_radius must be >= 0")

    @property
    def min_box_height(self) -> float:
        # Boxes shorter than two cells cannot carry a well-defined center cell.
        return 2.0 * self.stride


@dataclass
class TargetMaps:
    """Center/scale/offset planes plus the boolean mask of center cells.

    center: (rows, cols) in [0, 1]; scale: (rows, cols) ln-height values;
    offset: (rows, cols, 2) with x then y sub-cell components in [0, 1);
    positive_mask: (rows, cols) bool. Predicted maps reuse this container
    with an all-False mask.
    """

    center: np.ndarray
    scale: np.ndarray
    offset: np.ndarray
    positive_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.positive_mask is None:
            self.positive_mask = np.zeros(self.center.shape, dtype=bool)
        r, c = self.center.shape
        if self.scale.shape != (r, c) or self.offset.shape != (r, c, 2):
            raise ValueError("target map planes disagree on grid shape")
        if self.positive_mask.shape != (r, c):
            raise ValueError("positive mask shape mismatch")

    @property
    def shape(self) -> tuple[int, int]:
        return self.center.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def _grid_shape(size: ImageSize, cfg: CodecConfig) -> tuple[int, int]:
    if size.height % cfg.stride or size.width % cfg.stride:
        raise ValueError(
            f"image size {size.width}x{size.height} not divisible by stride {cfg.stride}"
        )
    return size.height // cfg.stride, size.width // cfg.stride


def encode_targets(
    anns: list[Annotation], size: ImageSize, cfg: CodecConfig | None = None
) -> TargetMaps:
    """Build training target maps for the person annotations of one image.

    Each person contributes a center cell (heatmap value exactly 1) with the
    surrounding cells filled by an axis-aligned Gaussian, composed across
    objects with an element-wise maximum. Non-person labels are ignore
    regions and never produce targets.

    Raises ValueError for person boxes that cross the image boundary or are
    shorter than two strides.
    """
    cfg = cfg or CodecConfig()
    rows, cols = _grid_shape(size, cfg)
    center = np.zeros((rows, cols))
    scale = np.zeros((rows, cols))
    offset = np.zeros((rows, cols, 2))
    mask = np.zeros((rows, cols), dtype=bool)

    persons = [a for a in anns if a.label is Label.PERSON]
    cells = []
    for ann in persons:
        b = ann.box
        if b.x < 0 or b.y < 0 or b.x2 > size.width or b.y2 > size.height:
            raise ValueError(f"annotation box {b} crosses the image boundary")
        if b.h < cfg.min_box_height:
            raise ValueError(
                f"box height {b.h} below minimum {cfg.min_box_height} "
                f"(cannot carry a center cell)"
            )
        cx, cy = b.center
        col = int(cx // cfg.stride)
        row = int(cy // cfg.stride)
        cells.append((ann, row, col, cx, cy))

        sigma_x = max(1.0, cfg.gaussian_sigma_factor * b.w / cfg.stride)
        sigma_y = max(1.0, cfg.gaussian_sigma_factor * b.h / cfg.stride)
        dy = (np.arange(rows) - row)[:, None]
        dx = (np.arange(cols) - col)[None, :]
        gauss = np.exp(-(dx**2 / (2 * sigma_x**2) + dy**2 / (2 * sigma_y**2)))
        np.maximum(center, gauss, out=center)

    if cfg.target_radius > 0:
        # Replicated neighbourhood values; exact center cells are written
        # afterwards and always win.
        r = cfg.target_radius
        for ann, row, col, cx, cy in cells:
            r0, r1 = max(0, row - r), min(rows, row + r + 1)
            c0, c1 = max(0, col - r), min(cols, col + r + 1)
            scale[r0:r1, c0:c1] = math.log(ann.box.h)
            offset[r0:r1, c0:c1, 0] = cx / cfg.stride - col
            offset[r0:r1, c0:c1, 1] = cy / cfg.stride - row

    for ann, row, col, cx, cy in cells:
        center[row, col] = 1.0
        scale[row, col] = math.log(ann.box.h)
        offset[row, col, 0] = cx / cfg.stride - col
        offset[row, col, 1] = cy / cfg.stride - row
        mask[row, col] = True

    return TargetMaps(center, scale, offset, mask)


def nms(dets: list[Detection], threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited in descending score order (ties keep the earlier
    input index); each kept detection suppresses the remaining ones whose
    IoU with it exceeds ``threshold``.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if not dets:
        return []

    x1 = np.array([d.box.x for d in dets])
    y1 = np.array([d.box.y for d in dets])
    x2 = np.array([d.box.x2 for d in dets])
    y2 = np.array([d.box.y2 for d in dets])
    areas = (x2 - x1) * (y2 - y1)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    order = np.array(order)

    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        overlap = inter / (areas[i] + areas[rest] - inter)
        order = rest[overlap <= threshold]
    return [dets[i] for i in keep]


def decode_detections(
    pred: TargetMaps, size: ImageSize, cfg: CodecConfig | None = None
) -> list[Detection]:
    """Turn predicted maps into scored boxes.

    Every cell at or above the confidence threshold becomes a candidate box:
    center = stride * (cell + offset), height = exp(scale), width derived via
    the aspect ratio. Candidates outside the encoder's domain (height below
    two strides or any part outside the image) are discarded, the rest pass
    through NMS, and the survivors come back sorted by descending score.
    """
    cfg = cfg or CodecConfig()
    rows, cols = _grid_shape(size, cfg)
    if pred.shape != (rows, cols):
        raise ValueError(
            f"prediction grid {pred.shape} inconsistent with image "
            f"{size.width}x{size.height} at stride {cfg.stride}"
        )

    rr, cc = np.nonzero(pred.center >= cfg.confidence_threshold)
    if rr.size == 0:
        return []
    scores = pred.center[rr, cc]
    with np.errstate(over="ignore"):
        h = np.exp(pred.scale[rr, cc])
    w = cfg.aspect_ratio * h
    cx = cfg.stride * (cc + pred.offset[rr, cc, 0])
    cy = cfg.stride * (rr + pred.offset[rr, cc, 1])
    x = cx - w / 2.0
    y = cy - h / 2.0

    valid = (
        (h >= cfg.min_box_height)
        & (x >= 0.0)
        & (y >= 0.0)
        & (x + w <= size.width)
        & (y + h <= size.height)
    )
    candidates = [
        Detection(BBox(x[i], y[i], w[i], h[i]), float(np.clip(scores[i], 0.0, 1.0)))
        for i in np.nonzero(valid)[0]
    ]
    kept = nms(candidates, cfg.nms_threshold)
    return sorted(kept, key=lambda d: -d.score)
