"""GIoU box loss, instance-level importance weights and task-balancing coefficients."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import RankingProblem, SmoothStep


class DegenerateBoxWarning(UserWarning):
    """GIoU requested for a pair with zero union area; GIoU is taken as 0."""


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box corners must be finite: {vals}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order: {vals}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


def as_box_array(boxes) -> np.ndarray:
    """Stack ``Box`` objects or ``(x1, y1, x2, y2)`` rows into an ``(m, 4)`` array."""
    if isinstance(boxes, np.ndarray):
        arr = boxes.astype(np.float64, copy=False)
    else:
        rows = [b.as_array() if isinstance(b, Box) else np.asarray(b, dtype=np.float64) for b in boxes]
        arr = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 4))
    arr = arr.reshape(-1, 4)
    return arr


def giou_with_grad(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised GIoU of ``(m, 4)`` box pairs and its subgradient w.r.t. ``pred``.

    Rows whose union has zero area get GIoU 0 and zero gradient.
    """
    pred = as_box_array(pred)
    gt = as_box_array(gt)
    ax1, ay1, ax2, ay2 = pred.T
    bx1, by1, bx2, by2 = gt.T
    aw, ah = ax2 - ax1, ay2 - ay1
    area_a = aw * ah
    area_b = (bx2 - bx1) * (by2 - by1)

    iw_raw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih_raw = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    iw, ih = np.maximum(iw_raw, 0.0), np.maximum(ih_raw, 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    cw = np.maximum(ax2, bx2) - np.minimum(ax1, bx1)
    ch = np.maximum(ay2, by2) - np.minimum(ay1, by1)
    enclose = cw * ch

    ok = (union > 0.0) & (enclose > 0.0)
    u = np.where(ok, union, 1.0)
    c = np.where(ok, enclose, 1.0)
    giou = np.where(ok, inter / u - (c - u) / c, 0.0)

    # d(iw)/d(ax1, ax2), d(ih)/d(ay1, ay2): active only while overlapping
    ix_on = iw_raw > 0.0
    iy_on = ih_raw > 0.0
    d_iw = np.stack([-1.0 * (ix_on & (ax1 > bx1)), 1.0 * (ix_on & (ax2 < bx2))], axis=1)
    d_ih = np.stack([-1.0 * (iy_on & (ay1 > by1)), 1.0 * (iy_on & (ay2 < by2))], axis=1)
    d_inter = np.stack(
        [d_iw[:, 0] * ih, d_ih[:, 0] * iw, d_iw[:, 1] * ih, d_ih[:, 1] * iw], axis=1
    )
    d_area = np.stack([-ah, -aw, ah, aw], axis=1)
    d_union = d_area - d_inter
    d_cw = np.stack([-1.0 * (ax1 < bx1), 1.0 * (ax2 > bx2)], axis=1)
    d_ch = np.stack([-1.0 * (ay1 < by1), 1.0 * (ay2 > by2)], axis=1)
    d_enclose = np.stack(
        [d_cw[:, 0] * ch, d_ch[:, 0] * cw, d_cw[:, 1] * ch, d_ch[:, 1] * cw], axis=1
    )
    # giou = inter/u - 1 + u/c
    grad = (
        d_inter / u[:, None]
        - (inter / u**2)[:, None] * d_union
        + d_union / c[:, None]
        - (u / c**2)[:, None] * d_enclose
    )
    grad[~ok] = 0.0
    if not np.all(ok):
        warnings.warn(
            f"{int(np.sum(~ok))} box pair(s) with zero union area; GIoU set to 0",
            DegenerateBoxWarning,
            stacklevel=2,
        )
    return giou, grad


def giou(a: Box, b: Box) -> float:
    """Generalised IoU: ``IoU - (|C| - |A u B|) / |C|`` with ``C`` the enclosing box."""
    g, _ = giou_with_grad(a.as_array(), b.as_array())
    return float(g[0])


def iou(pred, gt) -> np.ndarray:
    pred, gt = as_box_array(pred), as_box_array(gt)
    iw = np.maximum(np.minimum(pred[:, 2], gt[:, 2]) - np.maximum(pred[:, 0], gt[:, 0]), 0.0)
    ih = np.maximum(np.minimum(pred[:, 3], gt[:, 3]) - np.maximum(pred[:, 1], gt[:, 1]), 0.0)
    inter = iw * ih
    union = (
        (pred[:, 2] - pred[:, 0]) * (pred[:, 3] - pred[:, 1])
        + (gt[:, 2] - gt[:, 0]) * (gt[:, 3] - gt[:, 1])
        - inter
    )
    return np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)


WEIGHTING_KINDS = ("none", "score", "iou", "ranking")


@dataclass(frozen=True)
class WeightingMode:
    """Instance-level importance weighting for the box loss.

    ``kind`` is one of ``none``, ``score`` (sigmoid of the logit), ``iou``
    (IoU of the prediction) or ``ranking`` (smoothed with ``delta_loc``).
    """

    kind: str = "none"
    delta_loc: float = 1.0

    def __post_init__(self):
        if self.kind not in WEIGHTING_KINDS:
            raise ValueError(f"unknown weighting {self.kind!r}; expected one of {WEIGHTING_KINDS}")
        if self.kind == "ranking" and not self.delta_loc > 0.0:
            raise ValueError("delta_loc must be positive for ranking-based weighting")


BALANCE_KINDS = ("constant", "value", "magnitude")


@dataclass(frozen=True)
class BalanceMode:
    kind: str = "value"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in BALANCE_KINDS:
            raise ValueError(f"unknown balance mode {self.kind!r}; expected one of {BALANCE_KINDS}")
        if self.kind == "constant" and not self.value > 0.0:
            raise ValueError("constant lambda must be positive")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def ranking_weights(problem: RankingProblem, delta_loc: float, step: SmoothStep | None = None) -> np.ndarray:
    """``w_i = (1/|P|) sum_k H_loc(s_i - s_k) / rank(k)`` over positives ``k``.

    ``rank(k)`` uses ``step``; the numerator uses a separate ramp of half-width
    ``delta_loc``.  Self pairs count 1 in both.
    """
    step = step or SmoothStep()
    loc_step = SmoothStep(delta_loc)
    s = problem.logits
    pos = problem.require_positives()
    ranks = np.empty(pos.size)
    for k, i in enumerate(pos):
        h = step(s - s[i])
        h[i] = 1.0
        ranks[k] = np.sum(h)
    s_pos = s[pos]
    # h_loc[k, i] = H_loc(x_ki) with x_ki = s_i - s_k
    h_loc = loc_step(s_pos[None, :] - s_pos[:, None])
    np.fill_diagonal(h_loc, 1.0)
    return np.sum(h_loc / ranks[:, None], axis=0) / pos.size


def instance_weights(
    mode: WeightingMode,
    problem: RankingProblem,
    boxes_pred=None,
    boxes_gt=None,
    step: SmoothStep | None = None,
) -> np.ndarray:
    """Non-negative importance weight for each positive (ascending index order)."""
    pos = problem.require_positives()
    if boxes_pred is not None or boxes_gt is not None:
        pred, gt = as_box_array(boxes_pred), as_box_array(boxes_gt)
        if pred.shape[0] != pos.size or gt.shape[0] != pos.size:
            raise ValueError(
                f"expected {pos.size} box pairs for the positives, got {pred.shape[0]} / {gt.shape[0]}"
            )
    if mode.kind == "none":
        return np.ones(pos.size)
    if mode.kind == "score":
        return sigmoid(problem.logits[pos])
    if mode.kind == "iou":
        if boxes_pred is None or boxes_gt is None:
            raise ValueError("IoU-based weighting needs predicted and ground-truth boxes")
        return iou(pred, gt)
    return ranking_weights(problem, mode.delta_loc, step)


def weighted_box_loss_with_grad(boxes_pred, boxes_gt, weights) -> tuple[float, np.ndarray]:
    """Weighted mean of ``1 - GIoU`` and its gradient w.r.t. the predicted corners.

    Weights are treated as constants.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    pred, gt = as_box_array(boxes_pred), as_box_array(boxes_gt)
    if not (w.size == pred.shape[0] == gt.shape[0]):
        raise ValueError("weights and box pairs must be aligned")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    total = np.sum(w)
    if not total > 0.0:
        raise ValueError("weights sum to zero; box loss undefined")
    g, dg = giou_with_grad(pred, gt)
    norm = w / total
    return float(np.sum(norm * (1.0 - g))), -norm[:, None] * dg


def weighted_box_loss(boxes_pred, boxes_gt, weights) -> float:
    return weighted_box_loss_with_grad(boxes_pred, boxes_gt, weights)[0]


def task_balance(
    mode: BalanceMode,
    cls_loss: float,
    box_loss: float,
    cls_grad_l1: float = 0.0,
    box_grad_l1: float = 0.0,
    previous: float = 1.0,
) -> tuple[float, bool]:
    """Coefficient of the box loss for this iteration.

    Returns ``(lambda_box, degenerate)``; a degenerate iteration (zero
    denominator) reuses ``previous``.
    """
    if mode.kind == "constant":
        return float(mode.value), False
    num, den = (cls_loss, box_loss) if mode.kind == "value" else (cls_grad_l1, box_grad_l1)
    if not (den > 0.0 and math.isfinite(den) and math.isfinite(num)):
        return float(previous), True
    return float(num / den), False


class TaskBalancer:
    """Tracks ``lambda_box`` across iterations (initialised to 1)."""

    def __init__(self, mode: BalanceMode):
        self.mode = mode
        self.value = 1.0
        self.degenerate_steps = 0

    def update(self, cls_loss, box_loss, cls_grad_l1=0.0, box_grad_l1=0.0) -> float:
        self.value, degenerate = task_balance(
            self.mode, cls_loss, box_loss, cls_grad_l1, box_grad_l1, previous=self.value
        )
        self.degenerate_steps += degenerate
        return self.value
