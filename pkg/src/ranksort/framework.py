"""Generic engine for ranking-based losses driven by pairwise primary terms.

A loss is described by a *pairwise error model*: a callable that, given a
problem and a smoothed step, returns the ``n x n`` matrix of primary terms
``L_ij = (l(i) - l*(i)) p(j|i)`` together with the per-example current and
target errors.  Because the target of every primary term is zero, the
error-driven update of a pair is the primary term itself, and the gradient
with respect to the logits is

    dL/ds_i = (1/Z) * (sum_j L_ji - sum_j L_ij),   Z = |P|.

Nothing here differentiates the step function.  The dense matrix is the
reference route; fast closed forms live next to each concrete loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .core import RankingProblem, SmoothStep


@dataclass(frozen=True, eq=False)
class PairwiseErrors:
    """Output of a pairwise error model.

    ``indices`` lists the examples that carry an error term (the positives for
    every loss shipped here, although negatives are allowed).  The four error
    arrays are aligned with ``indices``.
    """

    primary: np.ndarray
    indices: np.ndarray
    ranking: np.ndarray
    sorting: np.ndarray
    ranking_target: np.ndarray
    sorting_target: np.ndarray

    @property
    def current(self) -> np.ndarray:
        return self.ranking + self.sorting

    @property
    def target(self) -> np.ndarray:
        return self.ranking_target + self.sorting_target


class PairwiseErrorModel(Protocol):
    def __call__(self, problem: RankingProblem, step: SmoothStep) -> PairwiseErrors: ...


@dataclass(frozen=True)
class PositiveErrors:
    index: int
    current_ranking: float
    current_sorting: float
    target_sorting: float
    target_ranking: float = 0.0

    @property
    def loss(self) -> float:
        return (self.current_ranking + self.current_sorting) - (
            self.target_ranking + self.target_sorting
        )


@dataclass(frozen=True, eq=False)
class LossReport:
    loss: float
    per_positive: list[PositiveErrors]
    gradients: Optional[np.ndarray] = field(default=None)

    def to_dict(self) -> dict:
        out = {
            "loss": self.loss,
            "per_positive": [
                {
                    "index": p.index,
                    "current_ranking": p.current_ranking,
                    "current_sorting": p.current_sorting,
                    "target_ranking": p.target_ranking,
                    "target_sorting": p.target_sorting,
                }
                for p in self.per_positive
            ],
        }
        if self.gradients is not None:
            out["gradients"] = [float(g) for g in self.gradients]
        return out


def _decomposition(errors: PairwiseErrors) -> list[PositiveErrors]:
    return [
        PositiveErrors(
            index=int(i),
            current_ranking=float(r),
            current_sorting=float(s),
            target_sorting=float(st),
            target_ranking=float(rt),
        )
        for i, r, s, rt, st in zip(
            errors.indices,
            errors.ranking,
            errors.sorting,
            errors.ranking_target,
            errors.sorting_target,
        )
    ]


def _evaluate(problem, model, step):
    n_pos = problem.require_positives().size
    step = step or SmoothStep()
    errors = model(problem, step)
    n = len(problem)
    if errors.primary.shape != (n, n):
        raise ValueError(
            f"model returned primary terms of shape {errors.primary.shape}, expected {(n, n)}"
        )
    return errors, n_pos


def normalized_primary_sum(primary: np.ndarray, z: int) -> float:
    # row sums in index order, then rows reduced in index order
    return float(np.sum(np.sum(primary, axis=1)) / z)


def compute_loss(
    problem: RankingProblem, model: PairwiseErrorModel, step: SmoothStep | None = None
) -> LossReport:
    """Loss value and per-positive error decomposition (no gradients)."""
    errors, z = _evaluate(problem, model, step)
    return LossReport(normalized_primary_sum(errors.primary, z), _decomposition(errors))


def gradients_from_primary(primary: np.ndarray, z: int) -> np.ndarray:
    return (np.sum(primary, axis=0) - np.sum(primary, axis=1)) / z


def compute_gradients_generic(
    problem: RankingProblem, model: PairwiseErrorModel, step: SmoothStep | None = None
) -> np.ndarray:
    errors, z = _evaluate(problem, model, step)
    return gradients_from_primary(errors.primary, z)


def evaluate(
    problem: RankingProblem, model: PairwiseErrorModel, step: SmoothStep | None = None
) -> LossReport:
    """Loss, decomposition and generic gradients from a single model call."""
    errors, z = _evaluate(problem, model, step)
    return LossReport(
        normalized_primary_sum(errors.primary, z),
        _decomposition(errors),
        gradients_from_primary(errors.primary, z),
    )
