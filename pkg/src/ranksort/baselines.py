"""AP Loss and the aLRP target error, expressed on top of the generic engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RankingProblem, SmoothStep
from .framework import LossReport, PairwiseErrors, evaluate
from .rs_loss import rs_gradients

AP_DEFAULT_DELTA = 1.0


def ap_primary_terms(problem: RankingProblem, step: SmoothStep | None = None) -> PairwiseErrors:
    """AP Loss as a pairwise error model.

    ``l(i) = N_FP(i) / rank(i)`` with target 0, spread over the negatives by
    ``p(j|i) = H(x_ij) / N_FP(i)``.
    """
    step = step or SmoothStep(AP_DEFAULT_DELTA)
    s = problem.logits
    pos, neg = problem.positives, problem.negatives
    n = len(problem)
    primary = np.zeros((n, n))
    errors = np.zeros(pos.size)
    for k, i in enumerate(pos):
        h = step(s - s[i])
        h[i] = 1.0
        n_fp = np.sum(h[neg])
        errors[k] = n_fp / np.sum(h)
        if n_fp > 0.0:
            primary[i, neg] = errors[k] * h[neg] / n_fp
    zeros = np.zeros(pos.size)
    return PairwiseErrors(primary, pos, errors, zeros, zeros, zeros)


def ap_loss(problem: RankingProblem, step: SmoothStep | None = None) -> LossReport:
    """AP Loss value and gradients through the generic engine (``delta`` defaults to 1)."""
    return evaluate(problem, ap_primary_terms, step or SmoothStep(AP_DEFAULT_DELTA))


def ap_gradients(problem: RankingProblem, step: SmoothStep | None = None) -> np.ndarray:
    """Closed-form AP Loss gradients (no dense matrix).

    AP Loss coincides with the ranking part of RS Loss, so this reuses the
    ranking-only RS scan.
    """
    return rs_gradients(problem, step or SmoothStep(AP_DEFAULT_DELTA), sorting=False)


@dataclass(frozen=True)
class AlrpTargetConfig:
    """``tau``: the positive/negative assignment threshold used to normalise localisation error."""

    tau: float

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau!r}")


def alrp_target_error(
    problem: RankingProblem,
    localisation_errors,
    cfg: AlrpTargetConfig,
    step: SmoothStep | None = None,
) -> np.ndarray:
    """aLRP target error ``(e_loc / (1 - tau)) / rank(i)`` per positive, clamped to [0, 1].

    ``localisation_errors`` is aligned with the positives in ascending index
    order.  Unlike the RS target, this value moves with the logits through
    ``rank(i)``.
    """
    if not isinstance(cfg, AlrpTargetConfig):
        cfg = AlrpTargetConfig(float(cfg))
    step = step or SmoothStep()
    pos = problem.require_positives()
    loc = np.asarray(localisation_errors, dtype=np.float64).reshape(-1)
    if loc.size != pos.size:
        raise ValueError(f"expected {pos.size} localisation errors, got {loc.size}")
    if np.any((loc < 0.0) | (loc > 1.0)):
        raise ValueError("localisation errors must lie in [0, 1]")
    s = problem.logits
    out = np.empty(pos.size)
    for k, i in enumerate(pos):
        h = step(s - s[i])
        h[i] = 1.0
        out[k] = (loc[k] / (1.0 - cfg.tau)) / np.sum(h)
    return np.clip(out, 0.0, 1.0)
