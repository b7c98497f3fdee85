"""Detection objective: focal-weighted center BCE plus smooth-L1 regression.

All losses return analytic gradients with respect to the prediction maps so
an external trainer can consume them and so they can be verified against
central finite differences. Predictions are probabilities / raw values, not
logits; reductions run in fixed row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import TargetMaps


@dataclass(frozen=True)
class LossConfig:
    focal_gamma: float = 2.0
    negative_beta: float = 4.0
    weight_center: float = 0.01
    weight_scale: float = 1.0
    weight_offset: float = 0.1
    smooth_l1_delta: float = 1.0
    epsilon: float = 1e-12

    def __post_init__(self):
        for name in (
            "focal_gamma",
            "negative_beta",
            "weight_center",
            "weight_scale",
            "weight_offset",
            "smooth_l1_delta",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class LossResult:
    total: float
    center: float
    scale: float
    offset: float
    grad_center: np.ndarray
    grad_scale: np.ndarray
    grad_offset: np.ndarray


def center_focal_loss(
    pred: np.ndarray, target: TargetMaps, cfg: LossConfig | None = None
) -> tuple[float, np.ndarray]:
    """Focal binary cross-entropy over the center heatmap.

    Center cells contribute -(1-p)^gamma * log(p); all other cells contribute
    -(1-t)^beta * p^gamma * log(1-p) where t is the Gaussian-supplemented
    target value, so cells close to a center are penalised less for firing.
    Normalised by the number of center cells (floor 1). Returns the loss and
    its gradient with respect to ``pred``.
    """
    cfg = cfg or LossConfig()
    if pred.shape != target.center.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.center.shape}")
    eps = cfg.epsilon
    clamped = (pred < eps) | (pred > 1.0 - eps)
    p = np.clip(pred, eps, 1.0 - eps)
    pos = target.positive_mask
    neg = ~pos
    k = max(1, int(pos.sum()))
    gamma, beta = cfg.focal_gamma, cfg.negative_beta
    t = target.center

    loss_map = np.zeros_like(p)
    grad = np.zeros_like(p)
    lp = np.log(p)
    l1p = np.log(1.0 - p)

    loss_map[pos] = -((1.0 - p[pos]) ** gamma) * lp[pos]
    grad[pos] = gamma * (1.0 - p[pos]) ** (gamma - 1.0) * lp[pos] - (
        (1.0 - p[pos]) ** gamma
    ) / p[pos]

    wneg = (1.0 - t[neg]) ** beta
    loss_map[neg] = -wneg * p[neg] ** gamma * l1p[neg]
    grad[neg] = wneg * (
        p[neg] ** gamma / (1.0 - p[neg]) - gamma * p[neg] ** (gamma - 1.0) * l1p[neg]
    )

    grad[clamped] = 0.0
    return float(loss_map.sum() / k), grad / k


def smooth_l1(
    pred: np.ndarray, target: np.ndarray, mask: np.ndarray, delta: float = 1.0
) -> tuple[float, np.ndarray]:
    """Huber-style regression loss averaged over the masked entries.

    ``mask`` selects grid cells; for maps with trailing component axes every
    component of a masked cell contributes, and the mean runs over the
    contributing scalars. An empty mask yields loss 0 and zero gradient.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    sel = mask
    while sel.ndim < pred.ndim:
        sel = sel[..., None]
    sel = np.broadcast_to(sel, pred.shape)
    n = int(sel.sum())
    if n == 0:
        return 0.0, np.zeros_like(pred)

    d = np.where(sel, pred - target, 0.0)
    quad = np.abs(d) < delta
    loss_map = np.where(quad, 0.5 * d * d / delta, np.abs(d) - 0.5 * delta)
    grad = np.where(quad, d / delta, np.sign(d))
    loss = float(loss_map[sel].sum() / n)
    return loss, np.where(sel, grad, 0.0) / n


def total_loss(
    pred: TargetMaps, target: TargetMaps, cfg: LossConfig | None = None
) -> LossResult:
    """Weighted sum of the center, scale, and offset losses.

    The scale and offset terms only see center cells of the target. Gradients
    are with respect to the total, i.e. already multiplied by the component
    weights.
    """
    cfg = cfg or LossConfig()
    c_loss, c_grad = center_focal_loss(pred.center, target, cfg)
    s_loss, s_grad = smooth_l1(
        pred.scale, target.scale, target.positive_mask, cfg.smooth_l1_delta
    )
    o_loss, o_grad = smooth_l1(
        pred.offset, target.offset, target.positive_mask, cfg.smooth_l1_delta
    )
    total = cfg.weight_center * c_loss + cfg.weight_scale * s_loss + cfg.weight_offset * o_loss
    return LossResult(
        total=total,
        center=c_loss,
        scale=s_loss,
        offset=o_loss,
        grad_center=cfg.weight_center * c_grad,
        grad_scale=cfg.weight_scale * s_grad,
        grad_offset=cfg.weight_offset * o_grad,
    )
