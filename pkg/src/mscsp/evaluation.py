"""Detection-vs-ground-truth matching and the log-average miss rate protocol.

Matching is greedy by detection score with an IoU threshold of 0.5;
ground truth classified as ignore absorbs detections at intersection-over-
detection-area 0.5 without reward or penalty. The operating curve sweeps the
set of distinct detection scores, recomputing the matching from scratch at
each threshold, and the summary number is the geometric mean of miss rates
sampled at nine log-spaced FPPI reference points in [1e-2, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Detection
from .geometry import (
    Annotation,
    GtClass,
    Label,
    Occlusion,
    SubsetSpec,
    classify,
    ioa,
    iou,
)

IOU_MATCH_THRESHOLD = 0.5
IGNORE_IOA_THRESHOLD = 0.5
MR_CLAMP = 1e-4
DEFAULT_FPPI_RANGE = (1e-2, 1.0)
DEFAULT_FPPI_SAMPLES = 9

#: (low, high) height ranges in pixels, upper bound exclusive.
DEFAULT_SIZE_BINS = ((20.0, 40.0), (40.0, 55.0), (55.0, math.inf))
DEFAULT_OCC_BINS = (Occlusion.NONE, Occlusion.PARTIAL, Occlusion.HEAVY)

ClassifiedGts = list[tuple[Annotation, GtClass]]
FrameInput = tuple[list[Detection], ClassifiedGts]


class Disposition(enum.Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "ignored"


@dataclass
class FrameResult:
    frame_id: str
    #: (detection index, matched GT index or None, disposition) per detection.
    matches: list[tuple[int, int | None, Disposition]]
    misses: int

    def count(self, disp: Disposition) -> int:
        return sum(1 for _, _, d in self.matches if d is disp)


@dataclass
class MrFppiCurve:
    """Operating points (fppi, miss_rate) in threshold-sweep order: fppi
    ascending, ties ordered by decreasing miss rate."""

    points: list[tuple[float, float]]


@dataclass
class EvalReport:
    subset_mr: dict[str, float | None]
    size_bin_mr: dict[str, float | None] = field(default_factory=dict)
    occ_bin_mr: dict[str, float | None] = field(default_factory=dict)
    curves: dict[str, MrFppiCurve] = field(default_factory=dict)


def match_frame(
    dets: list[Detection],
    gts: ClassifiedGts,
    frame_id: str = "",
    iou_threshold: float = IOU_MATCH_THRESHOLD,
    ignore_threshold: float = IGNORE_IOA_THRESHOLD,
) -> FrameResult:
    """Greedily match detections of one frame against classified ground truth.

    Detections are visited in descending score order (ties keep input order).
    Each one matches the unmatched evaluate-class GT of highest IoU when that
    IoU reaches the threshold; otherwise it is absorbed by an ignore region
    when its area lies half inside one; otherwise it is a false positive.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    eval_idx = [i for i, (_, cls) in enumerate(gts) if cls is GtClass.EVALUATE]
    ignore_idx = [i for i, (_, cls) in enumerate(gts) if cls is GtClass.IGNORE]
    unmatched = set(eval_idx)

    matches: list[tuple[int, int | None, Disposition]] = []
    for di in order:
        det = dets[di]
        best_gt, best_iou = None, 0.0
        for gi in eval_idx:
            if gi not in unmatched:
                continue
            v = iou(det.box, gts[gi][0].box)
            if v > best_iou:
                best_gt, best_iou = gi, v
        if best_gt is not None and best_iou >= iou_threshold:
            unmatched.discard(best_gt)
            matches.append((di, best_gt, Disposition.TP))
        elif any(ioa(det.box, gts[gi][0].box) >= ignore_threshold for gi in ignore_idx):
            matches.append((di, None, Disposition.IGNORED))
        else:
            matches.append((di, None, Disposition.FP))
    return FrameResult(frame_id, matches, misses=len(unmatched))


def mr_fppi_curve(frames: list[FrameInput]) -> MrFppiCurve:
    """Sweep the distinct detection scores and recompute matching per threshold.

    Raises ValueError when the frames contain no evaluate-class ground truth.
    With no detections at all the curve degenerates to the single point
    (0, 1).
    """
    if not frames:
        raise ValueError("need at least one frame")
    n_frames = len(frames)
    total_eval = sum(
        1 for _, gts in frames for _, cls in gts if cls is GtClass.EVALUATE
    )
    if total_eval == 0:
        raise ValueError("empty ground truth")

    scores = sorted({d.score for dets, _ in frames for d in dets}, reverse=True)
    if not scores:
        return MrFppiCurve([(0.0, 1.0)])

    points = []
    for t in scores:
        tp = fp = 0
        for dets, gts in frames:
            res = match_frame([d for d in dets if d.score >= t], gts)
            tp += res.count(Disposition.TP)
            fp += res.count(Disposition.FP)
        points.append((fp / n_frames, 1.0 - tp / total_eval))
    return MrFppiCurve(points)


def log_average_mr(
    curve: MrFppiCurve,
    fppi_range: tuple[float, float] = DEFAULT_FPPI_RANGE,
    num_samples: int = DEFAULT_FPPI_SAMPLES,
) -> float:
    """Geometric mean of sampled miss rates, as a percentage.

    At each log-spaced FPPI reference the curve is read at the point with the
    largest fppi not exceeding it (stepwise, no interpolation); references
    below the whole curve take its highest miss rate. Samples are clamped to
    at least 1e-4 before averaging.
    """
    if not curve.points:
        raise ValueError("empty curve")
    lo, hi = fppi_range
    refs = np.logspace(math.log10(lo), math.log10(hi), num_samples)
    samples = []
    for ref in refs:
        value = None
        for fppi, mr in curve.points:
            if fppi <= ref:
                value = mr
        if value is None:
            value = max(mr for _, mr in curve.points)
        samples.append(max(value, MR_CLAMP))
    return float(np.exp(np.mean(np.log(samples))) * 100.0)


def _bin_height(ann: Annotation, lo: float, hi: float) -> GtClass:
    if ann.label is Label.PERSON and lo <= ann.box.h < hi:
        return GtClass.EVALUATE
    return GtClass.IGNORE


def _bin_occlusion(ann: Annotation, level: Occlusion) -> GtClass:
    if ann.label is Label.PERSON and ann.occlusion is level:
        return GtClass.EVALUATE
    return GtClass.IGNORE


def evaluate(
    dets_by_frame: dict[str, list[Detection]],
    gts_by_frame: dict[str, list[Annotation]],
    specs: list[SubsetSpec],
    size_bins: tuple[tuple[float, float], ...] = DEFAULT_SIZE_BINS,
    occ_bins: tuple[Occlusion, ...] = DEFAULT_OCC_BINS,
) -> EvalReport:
    """Curves and log-average miss rates per subset, size bin, and occlusion bin.

    Detection frame ids must be a subset of the ground-truth frame ids;
    ground-truth frames without detections contribute zero detections. Size
    bins use half-open height ranges [lo, hi). Bins or subsets without any
    evaluate-class GT are reported as None instead of raising.
    """
    extra = set(dets_by_frame) - set(gts_by_frame)
    if extra:
        raise ValueError(f"detections reference unknown frames: {sorted(extra)}")
    frame_ids = sorted(gts_by_frame)
    report = EvalReport(subset_mr={})

    def run(name: str, classify_fn) -> float | None:
        frames = [
            (
                dets_by_frame.get(fid, []),
                [(a, classify_fn(a)) for a in gts_by_frame[fid]],
            )
            for fid in frame_ids
        ]
        if not any(cls is GtClass.EVALUATE for _, gts in frames for _, cls in gts):
            return None
        curve = mr_fppi_curve(frames)
        report.curves[name] = curve
        return log_average_mr(curve)

    for spec in specs:
        report.subset_mr[spec.name] = run(spec.name, lambda a, s=spec: classify(a, s))
    for lo, hi in size_bins:
        hi_txt = "inf" if math.isinf(hi) else f"{hi:g}"
        name = f"height [{lo:g}, {hi_txt})"
        report.size_bin_mr[name] = run(name, lambda a, lo=lo, hi=hi: _bin_height(a, lo, hi))
    for level in occ_bins:
        name = f"occlusion {level.name.lower()}"
        report.occ_bin_mr[name] = run(name, lambda a, lv=level: _bin_occlusion(a, lv))
    return report


def render_report(report: EvalReport) -> str:
    """Plain-text table of log-average miss rates."""
    lines = [f"{'group':<28}{'log-average MR [%]':>20}"]

    def fmt(name: str, mr: float | None) -> str:
        return f"{name:<28}{'n/a' if mr is None else format(mr, '.2f'):>20}"

    for name, mr in report.subset_mr.items():
        lines.append(fmt(name, mr))
    for name, mr in report.size_bin_mr.items():
        lines.append(fmt(name, mr))
    for name, mr in report.occ_bin_mr.items():
        lines.append(fmt(name, mr))
    return "\n".join(lines)


def balanced_sample(
    index: list[tuple[str, bool]], n: int, rng: np.random.Generator
) -> list[str]:
    """Draw n frame ids, picking the with-pedestrian class with probability
    0.5 each time, with replacement within each class."""
    if n == 0:
        return []
    positives = [fid for fid, has in index if has]
    negatives = [fid for fid, has in index if not has]
    if not positives or not negatives:
        raise ValueError("balanced sampling needs both frame classes to be non-empty")
    out = []
    for _ in range(n):
        pool = positives if rng.random() < 0.5 else negatives
        out.append(pool[int(rng.integers(0, len(pool)))])
    return out
