"""Brute-force reference implementations used to cross-check the library.

Everything here is written from the protocol definition with plain loops and
its own box arithmetic; nothing is shared with the code under test.
"""

from __future__ import annotations

import math


def bf_inter(a, b) -> float:
    # Boxes are (x, y, w, h) tuples.
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    return iw * ih if (iw > 0 and ih > 0) else 0.0


def bf_iou(a, b) -> float:
    inter = bf_inter(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def bf_ioa(det, region) -> float:
    return bf_inter(det, region) / (det[2] * det[3])


def bf_match(dets, gts, iou_thr=0.5, ioa_thr=0.5):
    """Greedy matching on one frame.

    dets: list of (box, score); gts: list of (box, is_evaluate).
    Returns (tp, fp, misses).
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1], i))
    taken = [False] * len(gts)
    tp = fp = 0
    for di in order:
        box = dets[di][0]
        best, best_iou = None, 0.0
        for gi, (gbox, is_eval) in enumerate(gts):
            if not is_eval or taken[gi]:
                continue
            v = bf_iou(box, gbox)
            if v > best_iou:
                best, best_iou = gi, v
        if best is not None and best_iou >= iou_thr:
            taken[best] = True
            tp += 1
            continue
        ignored = False
        for gi, (gbox, is_eval) in enumerate(gts):
            if not is_eval and bf_ioa(box, gbox) >= ioa_thr:
                ignored = True
                break
        if not ignored:
            fp += 1
    misses = sum(1 for gi, (_, is_eval) in enumerate(gts) if is_eval and not taken[gi])
    return tp, fp, misses


def bf_curve(frames):
    """Threshold sweep over all distinct scores, highest first.

    frames: list of (dets, gts) in the bf_match representation.
    Returns the list of (fppi, miss_rate) points.
    """
    n_frames = len(frames)
    total_eval = sum(1 for _, gts in frames for _, is_eval in gts if is_eval)
    assert total_eval > 0
    scores = sorted({s for dets, _ in frames for _, s in dets}, reverse=True)
    if not scores:
        return [(0.0, 1.0)]
    points = []
    for t in scores:
        tp = fp = 0
        for dets, gts in frames:
            a, b, _ = bf_match([d for d in dets if d[1] >= t], gts)
            tp += a
            fp += b
        points.append((fp / n_frames, 1.0 - tp / total_eval))
    return points


def bf_log_average(points, lo=1e-2, hi=1.0, n=9, clamp=1e-4):
    """Geometric mean of stepwise-sampled miss rates, in percent."""
    samples = []
    for k in range(n):
        ref = 10.0 ** (math.log10(lo) + (math.log10(hi) - math.log10(lo)) * k / (n - 1))
        value = None
        for fppi, mr in points:
            if fppi <= ref:
                value = mr
        if value is None:
            value = max(mr for _, mr in points)
        samples.append(max(value, clamp))
    return math.exp(sum(math.log(s) for s in samples) / n) * 100.0
