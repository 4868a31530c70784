"""Deterministic synthetic detection-like benchmark and a plain-SGD trainer.

Each example has a feature vector laid out as::

    [quality cue | 4 offset cues | class cues ...]

* Positives carry a ground-truth box and a jittered anchor; their label is
  ``IoU(anchor, gt)``.  The quality cue is a noisy affine function of that
  label and the offset cues encode the anchor-to-gt corner offsets, so a
  linear regressor can learn to correct anchors.
* Negatives draw the quality and offset cues from the same marginals as
  positives, so only the class cues separate the two classes.  Sorting
  positives by localisation quality therefore requires putting weight on a
  cue that ranking alone never rewards.

Metrics are measured every epoch on a fixed held-out set whose size and
pos:neg ratio do not depend on the training ratio, so runs at different
imbalance levels are comparable.
"""
from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .core import RankingProblem, SmoothStep
from .baselines import AP_DEFAULT_DELTA
from .localisation import (
    BalanceMode,
    TaskBalancer,
    WeightingMode,
    instance_weights,
    iou,
    sigmoid,
    weighted_box_loss_with_grad,
)
from .metrics import UndefinedCorrelationError, average_precision, spearman_rho
from .rs_loss import rs_loss

QUALITY_DIM = 0
OFFSET_DIMS = slice(1, 5)
CLASS_START = 5
MAX_JITTER = 0.4
DELTA_SCALE = 0.1  # predicted deltas are in units of 0.1 anchor width/height
LOSSES = ("rs", "ap", "cross_entropy", "focal")
LOSS_ALIASES = {"ce": "cross_entropy"}


class DivergenceError(RuntimeError):
    """Training produced a non-finite value; ``report`` holds the records so far."""

    def __init__(self, message: str, report: "TrainReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SynthConfig:
    n_features: int = 8
    n_positives: int = 8
    n_negatives: int = 80
    batches_per_epoch: int = 10
    epochs: int = 30
    label_noise: float = 0.1
    seed: int = 0
    class_separation: float = 2.0
    jitter: float = 0.15
    eval_positives: int = 200
    eval_negatives: int = 2000

    def __post_init__(self):
        if self.n_features < CLASS_START + 1:
            raise ValueError(f"n_features must be at least {CLASS_START + 1}")
        for name in ("n_positives", "n_negatives", "batches_per_epoch", "eval_positives", "eval_negatives"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.label_noise < 0.0 or self.jitter < 0.0:
            raise ValueError("label_noise and jitter must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def ratio(self) -> float:
        return self.n_negatives / self.n_positives


@dataclass(frozen=True, eq=False)
class Batch:
    """Features and labels of one batch; boxes are aligned with ``positives``."""

    features: np.ndarray
    labels: np.ndarray
    anchors: np.ndarray
    gt_boxes: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels > 0.0)

    def problem(self, logits) -> RankingProblem:
        return RankingProblem(logits, self.labels)


def _box_pairs(rng: np.random.Generator, m: int, jitter: float):
    centre = rng.uniform(0.0, 10.0, (m, 2))
    size = rng.uniform(1.0, 3.0, (m, 2))
    gt = np.concatenate([centre - size / 2, centre + size / 2], axis=1)
    offsets = np.clip(rng.normal(0.0, jitter, (m, 4)), -MAX_JITTER, MAX_JITTER)
    anchors = gt + offsets * np.tile(size, 2)
    return anchors, gt, offsets


def _quality_cue(rng, labels, noise):
    return (labels - 0.7) * 5.0 + noise * rng.standard_normal(labels.size)


def _offset_cue(rng, offsets, jitter):
    scale = jitter if jitter > 0.0 else 1.0
    return -offsets / scale + 0.1 * rng.standard_normal(offsets.shape)


def _make_batch(rng: np.random.Generator, cfg: SynthConfig, n_pos: int, n_neg: int) -> Batch:
    d = cfg.n_features
    anchors, gt, offsets = _box_pairs(rng, n_pos, cfg.jitter)
    y_pos = iou(anchors, gt)
    x_pos = np.empty((n_pos, d))
    x_pos[:, QUALITY_DIM] = _quality_cue(rng, y_pos, cfg.label_noise)
    x_pos[:, OFFSET_DIMS] = _offset_cue(rng, offsets, cfg.jitter)
    x_pos[:, CLASS_START:] = rng.normal(cfg.class_separation, 1.0, (n_pos, d - CLASS_START))

    # negatives: same quality/offset marginals, no class signal
    fake_anchors, fake_gt, fake_offsets = _box_pairs(rng, n_neg, cfg.jitter)
    x_neg = np.empty((n_neg, d))
    x_neg[:, QUALITY_DIM] = _quality_cue(rng, iou(fake_anchors, fake_gt), cfg.label_noise)
    x_neg[:, OFFSET_DIMS] = _offset_cue(rng, fake_offsets, cfg.jitter)
    x_neg[:, CLASS_START:] = rng.normal(0.0, 1.0, (n_neg, d - CLASS_START))

    order = rng.permutation(n_pos + n_neg)
    features = np.concatenate([x_pos, x_neg])[order]
    labels = np.concatenate([y_pos, np.zeros(n_neg)])[order]
    # boxes follow the positives' new (ascending) positions
    pos_source = order[order < n_pos]
    return Batch(features, labels, anchors[pos_source], gt[pos_source])


def _streams(seed: int):
    root = np.random.SeedSequence(seed)
    train_seq, eval_seq = root.spawn(2)
    return np.random.default_rng(train_seq), np.random.default_rng(eval_seq)


def generate_dataset(cfg: SynthConfig) -> list[Batch]:
    """The fixed training stream (``batches_per_epoch`` batches, reused every epoch)."""
    rng, _ = _streams(cfg.seed)
    return [
        _make_batch(rng, cfg, cfg.n_positives, cfg.n_negatives)
        for _ in range(cfg.batches_per_epoch)
    ]


def generate_eval_set(cfg: SynthConfig) -> Batch:
    """Held-out batch; independent of the training batch sizes, so ratio sweeps share it."""
    _, rng = _streams(cfg.seed)
    return _make_batch(rng, cfg, cfg.eval_positives, cfg.eval_negatives)


@dataclass
class Model:
    """Linear classifier (one logit) and linear box regressor (four corner deltas)."""

    weights: np.ndarray
    bias: float
    reg_weights: np.ndarray
    reg_bias: np.ndarray

    @classmethod
    def zeros(cls, n_features: int) -> "Model":
        return cls(np.zeros(n_features), 0.0, np.zeros((n_features, 4)), np.zeros(4))

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias

    def boxes(self, features: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        """Anchors shifted by predicted deltas (in tenths of the anchor width/height)."""
        return anchors + self._deltas(features) * _anchor_scale(anchors)

    def _deltas(self, features):
        return features @ self.reg_weights + self.reg_bias

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "reg_weights": self.reg_weights.tolist(),
            "reg_bias": self.reg_bias.tolist(),
        }


def _anchor_scale(anchors):
    w = anchors[:, 2] - anchors[:, 0]
    h = anchors[:, 3] - anchors[:, 1]
    return DELTA_SCALE * np.stack([w, h, w, h], axis=1)


@dataclass(frozen=True)
class LossChoice:
    name: str = "rs"
    alpha: float = 0.25
    gamma: float = 2.0
    sorting: bool = True

    def __post_init__(self):
        name = LOSS_ALIASES.get(self.name, self.name)
        if name not in LOSSES:
            raise ValueError(f"unknown loss {self.name!r}; expected one of {LOSSES}")
        object.__setattr__(self, "name", name)

    @property
    def label(self) -> str:
        if self.name == "rs" and not self.sorting:
            return "rs_ranking_only"
        return self.name


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over all examples (labels binarised at ``y > 0``)."""
    t = (labels > 0.0).astype(np.float64)
    loss = -(t * _log_sigmoid(logits) + (1.0 - t) * _log_sigmoid(-logits))
    return float(np.mean(loss)), (sigmoid(logits) - t) / logits.size


def focal_loss(
    logits: np.ndarray, labels: np.ndarray, alpha: float = 0.25, gamma: float = 2.0
) -> tuple[float, np.ndarray]:
    """Sigmoid focal loss summed over examples and normalised by the positive count."""
    t = labels > 0.0
    p = sigmoid(logits)
    log_p, log_q = _log_sigmoid(logits), _log_sigmoid(-logits)
    q = 1.0 - p
    loss = np.where(t, -alpha * q**gamma * log_p, -(1.0 - alpha) * p**gamma * log_q)
    grad = np.where(
        t,
        alpha * (gamma * q**gamma * p * log_p - q ** (gamma + 1.0)),
        (1.0 - alpha) * (p ** (gamma + 1.0) - gamma * p**gamma * q * log_q),
    )
    z = max(int(np.sum(t)), 1)
    return float(np.sum(loss) / z), grad / z


def classification_loss(choice: LossChoice, problem: RankingProblem, step: SmoothStep):
    if choice.name == "rs":
        rep = rs_loss(problem, step, sorting=choice.sorting)
        return rep.loss, rep.gradients
    if choice.name == "ap":
        rep = rs_loss(problem, step, sorting=False)
        return rep.loss, rep.gradients
    if choice.name == "cross_entropy":
        return cross_entropy(problem.logits, problem.labels)
    return focal_loss(problem.logits, problem.labels, choice.alpha, choice.gamma)


@dataclass(frozen=True)
class IterationRecord:
    epoch: int
    batch: int
    cls_loss: float
    box_loss: float
    lambda_box: float
    cls_grad_l1: float
    box_grad_l1: float


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    cls_loss: float
    box_loss: float
    lambda_box: float
    ap: float
    spearman_rho: float
    eval_box_loss: float
    cls_grad_l1: float
    box_grad_l1: float


EPOCH_COLUMNS = tuple(EpochRecord.__dataclass_fields__)


@dataclass
class TrainReport:
    loss: str
    config: SynthConfig
    epochs: list[EpochRecord] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    model: Optional[Model] = None
    degenerate_balance_steps: int = 0

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.epochs[-1] if self.epochs else None

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "config": asdict(self.config),
            "epochs": [asdict(e) for e in self.epochs],
            "degenerate_balance_steps": self.degenerate_balance_steps,
            "model": self.model.to_dict() if self.model is not None else None,
        }


def _evaluate(model: Model, eval_set: Batch) -> tuple[float, float, float]:
    logits = model.logits(eval_set.features)
    pos = eval_set.positives
    ap = average_precision(logits, eval_set.labels > 0.0)
    try:
        rho = spearman_rho(logits[pos], eval_set.labels[pos])
    except UndefinedCorrelationError:
        rho = 0.0
    pred = model.boxes(eval_set.features[pos], eval_set.anchors)
    box_loss, _ = weighted_box_loss_with_grad(pred, eval_set.gt_boxes, np.ones(pos.size))
    return ap, rho, box_loss


def _check_finite(report, epoch, batch, **values):
    bad = [k for k, v in values.items() if not np.all(np.isfinite(v))]
    if bad:
        raise DivergenceError(
            f"non-finite {', '.join(bad)} at epoch {epoch}, batch {batch}", report
        )


def train(
    cfg: SynthConfig,
    loss: LossChoice | str = "rs",
    weighting: WeightingMode | None = None,
    balance: BalanceMode | None = None,
    *,
    learning_rate: float = 0.05,
    delta: float | None = None,
    dataset: list[Batch] | None = None,
    eval_set: Batch | None = None,
) -> TrainReport:
    """Train the linear model with plain SGD and record per-epoch metrics.

    ``delta`` is the ramp half-width of the ranking losses (default 0.5 for
    RS, 1.0 for AP); it also sets ``rank`` for ranking-based box weights.
    The box-loss coefficient is recomputed every iteration and treated as a
    constant in the backward pass, as are the instance weights.
    """
    choice = loss if isinstance(loss, LossChoice) else LossChoice(loss)
    weighting = weighting or WeightingMode("score")
    balance = balance or BalanceMode("value")
    if learning_rate < 0.0 or not math.isfinite(learning_rate):
        raise ValueError("learning_rate must be a finite non-negative number")
    if delta is None:
        delta = AP_DEFAULT_DELTA if choice.name == "ap" else 0.5
    step = SmoothStep(delta)

    batches = dataset if dataset is not None else generate_dataset(cfg)
    held_out = eval_set if eval_set is not None else generate_eval_set(cfg)
    model = Model.zeros(cfg.n_features)
    balancer = TaskBalancer(balance)
    report = TrainReport(choice.label, cfg, model=model)

    for epoch in range(cfg.epochs):
        records = []
        for b, batch in enumerate(batches):
            pos = batch.positives
            logits = model.logits(batch.features)
            _check_finite(report, epoch, b, logits=logits)
            problem = batch.problem(logits)
            cls_loss, cls_grad = classification_loss(choice, problem, step)

            x_pos = batch.features[pos]
            scale = _anchor_scale(batch.anchors)
            pred = batch.anchors + model._deltas(x_pos) * scale
            w = instance_weights(weighting, problem, pred, batch.gt_boxes, step)
            box_loss, box_grad = weighted_box_loss_with_grad(pred, batch.gt_boxes, w)

            cls_l1 = float(np.sum(np.abs(cls_grad)))
            box_l1 = float(np.sum(np.abs(box_grad)))
            lam = balancer.update(cls_loss, box_loss, cls_l1, box_l1)
            _check_finite(report, epoch, b, cls_loss=cls_loss, box_loss=box_loss,
                          cls_grad=cls_grad, box_grad=box_grad, lambda_box=lam)

            delta_grad = lam * box_grad * scale
            model.weights = model.weights - learning_rate * (batch.features.T @ cls_grad)
            model.bias = model.bias - learning_rate * float(np.sum(cls_grad))
            model.reg_weights = model.reg_weights - learning_rate * (x_pos.T @ delta_grad)
            model.reg_bias = model.reg_bias - learning_rate * np.sum(delta_grad, axis=0)

            rec = IterationRecord(epoch, b, cls_loss, box_loss, lam, cls_l1, box_l1)
            records.append(rec)
            report.iterations.append(rec)

        ap, rho, eval_box = _evaluate(model, held_out)
        report.epochs.append(
            EpochRecord(
                epoch=epoch,
                cls_loss=float(np.mean([r.cls_loss for r in records])),
                box_loss=float(np.mean([r.box_loss for r in records])),
                lambda_box=float(np.mean([r.lambda_box for r in records])),
                ap=ap,
                spearman_rho=rho,
                eval_box_loss=eval_box,
                cls_grad_l1=float(np.mean([r.cls_grad_l1 for r in records])),
                box_grad_l1=float(np.mean([r.box_grad_l1 for r in records])),
            )
        )
    report.degenerate_balance_steps = balancer.degenerate_steps
    return report


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    loss: str
    seed: int
    ap: float
    spearman_rho: float


def _sweep_cell(args) -> SweepRow:
    cfg, choice, train_kwargs = args
    rep = train(cfg, choice, **train_kwargs)
    final = rep.final
    ap = final.ap if final else float("nan")
    rho = final.spearman_rho if final else float("nan")
    return SweepRow(cfg.ratio, choice.label, cfg.seed, ap, rho)


def worker_count() -> int:
    raw = os.environ.get("RANKSORT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"RANKSORT_THREADS must be an integer, got {raw!r}") from None


def run_cells(cells: list, workers: int | None = None) -> list[SweepRow]:
    """Train independent cells, optionally in worker processes; rows keep cell order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [_sweep_cell(c) for c in cells]
    with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
        return list(pool.map(_sweep_cell, cells))


def imbalance_sweep(
    ratios,
    losses,
    seeds,
    base: SynthConfig | None = None,
    workers: int | None = None,
    **train_kwargs,
) -> list[SweepRow]:
    """Final held-out AP for every ``(ratio, loss, seed)`` cell.

    A ratio ``r`` means ``r`` negatives per positive in every training batch;
    all cells share the same budget and evaluation-set specification.
    """
    base = base or SynthConfig()
    cells = []
    for ratio in ratios:
        if ratio < 1:
            raise ValueError(f"imbalance ratio must be at least 1:1, got 1:{ratio}")
        for loss in losses:
            choice = loss if isinstance(loss, LossChoice) else LossChoice(loss)
            for seed in seeds:
                cfg = replace(base, n_negatives=int(round(base.n_positives * ratio)), seed=int(seed))
                cells.append((cfg, choice, train_kwargs))
    return run_cells(cells, workers)


def sorting_ablation(seeds, base: SynthConfig | None = None, workers: int | None = None, **train_kwargs):
    """Full RS loss vs. its ranking-only variant on identical data."""
    base = base or SynthConfig()
    cells = [
        (replace(base, seed=int(seed)), LossChoice("rs", sorting=sorting), train_kwargs)
        for sorting in (True, False)
        for seed in seeds
    ]
    return run_cells(cells, workers)
