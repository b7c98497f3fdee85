"""Box arithmetic, annotation semantics, and evaluation-subset classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DEFAULT_ASPECT_RATIO = 0.41


class Label(enum.Enum):
    PERSON = "person"
    PEOPLE = "people"
    PERSON_UNSURE = "person_unsure"
    CYCLIST = "cyclist"


class Occlusion(enum.IntEnum):
    NONE = 0
    PARTIAL = 1
    HEAVY = 2


class GtClass(enum.Enum):
    """How a ground-truth entry is treated by the evaluator."""

    EVALUATE = "evaluate"
    IGNORE = "ignore"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner (x, y) plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive extent, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class Annotation:
    box: BBox
    label: Label
    occlusion: Occlusion


@dataclass(frozen=True)
class SubsetSpec:
    """Height/occlusion filter deciding which pedestrians an evaluation counts."""

    name: str
    min_height: float
    max_height: float
    allowed_occlusion: frozenset[Occlusion]

    def __post_init__(self):
        if not (0 <= self.min_height <= self.max_height):
            raise ValueError(
                f"need 0 <= min_height <= max_height, got "
                f"[{self.min_height}, {self.max_height}]"
            )


#: Pedestrians at least 55 px tall with no or partial occlusion.
REASONABLE_SUBSET = SubsetSpec(
    name="Reasonable",
    min_height=55.0,
    max_height=math.inf,
    allowed_occlusion=frozenset({Occlusion.NONE, Occlusion.PARTIAL}),
)

#: Every pedestrian regardless of height or occlusion.
ALL_SUBSET = SubsetSpec(
    name="All",
    min_height=0.0,
    max_height=math.inf,
    allowed_occlusion=frozenset(Occlusion),
)


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def _span_area(b: BBox) -> float:
    # Same arithmetic as intersection_area, so identical boxes overlap
    # themselves exactly.
    return (b.x2 - b.x) * (b.y2 - b.y)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (_span_area(a) + _span_area(b) - inter)


def ioa(det: BBox, region: BBox) -> float:
    """Intersection area divided by the area of ``det`` (ignore-region overlap)."""
    return intersection_area(det, region) / _span_area(det)


def union_box(vis: BBox, ir: BBox) -> BBox:
    """Smallest axis-aligned box covering both inputs."""
    x1 = min(vis.x, ir.x)
    y1 = min(vis.y, ir.y)
    x2 = max(vis.x2, ir.x2)
    y2 = max(vis.y2, ir.y2)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def classify(ann: Annotation, spec: SubsetSpec) -> GtClass:
    """Decide whether an annotation is evaluated or treated as an ignore region.

    Only person-labelled boxes inside the subset's height range (inclusive)
    and occlusion set are evaluated; everything else becomes an ignore region
    so that detections overlapping it are neither rewarded nor penalised.
    """
    if ann.label is not Label.PERSON:
        return GtClass.IGNORE
    if not (spec.min_height <= ann.box.h <= spec.max_height):
        return GtClass.IGNORE
    if ann.occlusion not in spec.allowed_occlusion:
        return GtClass.IGNORE
    return GtClass.EVALUATE


def width_from_height(h: float, aspect_ratio: float = DEFAULT_ASPECT_RATIO) -> float:
    """Pedestrian box width derived from height via the fixed aspect ratio."""
    if h <= 0:
        raise ValueError(f"height must be positive, got {h}")
    return aspect_ratio * h
