"""Rank & Sort loss: ranking/sorting errors, their pmfs, primary terms and gradients.

For a positive ``i`` (``H`` is the smoothed step of ``x_ij = s_j - s_i``):

* current ranking error ``l_R(i) = N_FP(i) / rank(i)`` (target 0);
* current sorting error ``l_S(i)``: the ``H``-weighted mean of ``1 - y_j`` over
  positives ``j``;
* target sorting error ``l*_S(i)``: the same mean restricted to positives with
  ``y_j >= y_i``, i.e. the sorting error ``i`` would see if the positives above
  it were already ordered by label.

Ranking error is spread uniformly over the negatives above ``i`` and sorting
error over the positives above ``i`` with a strictly smaller label.  The
closed-form gradients below scan one positive at a time (``O(|P| n)`` time,
``O(n)`` memory); :func:`rs_primary_terms` materialises the full matrix for
the generic engine.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .core import RankingProblem, SmoothStep
from .framework import LossReport, PairwiseErrors, PositiveErrors


class _PositiveScan(NamedTuple):
    i: int
    ranking: float
    sorting: float
    sorting_target: float
    p_rank: np.ndarray  # over negatives, ascending index
    p_sort: np.ndarray  # over positives, ascending index


@dataclass(frozen=True, eq=False)
class RsErrorBreakdown:
    """Per-positive errors, aligned with ``indices`` (the positive set)."""

    indices: np.ndarray
    ranking: np.ndarray
    sorting: np.ndarray
    sorting_target: np.ndarray

    @property
    def ranking_target(self) -> np.ndarray:
        return np.zeros_like(self.ranking)

    @property
    def current(self) -> np.ndarray:
        return self.ranking + self.sorting

    @property
    def target(self) -> np.ndarray:
        return self.sorting_target

    @property
    def per_positive_loss(self) -> np.ndarray:
        return self.ranking + (self.sorting - self.sorting_target)


def _scan(
    problem: RankingProblem, step: SmoothStep, sorting: bool = True
) -> Iterator[_PositiveScan]:
    s, y = problem.logits, problem.labels
    pos = problem.require_positives()
    neg = problem.negatives
    y_pos = y[pos]
    inverted = 1.0 - y_pos
    empty_sort = np.zeros(pos.size)
    for i in pos:
        h = step(s - s[i])
        h[i] = 1.0
        h_pos = h[pos]
        h_neg = h[neg]

        n_fp = np.sum(h_neg)
        rank_plus = np.sum(h_pos)
        ranking = n_fp / (rank_plus + n_fp)
        p_rank = h_neg / n_fp if n_fp > 0.0 else np.zeros(neg.size)

        if not sorting:
            yield _PositiveScan(int(i), float(ranking), 0.0, 0.0, p_rank, empty_sort)
            continue

        current = np.sum(h_pos * inverted) / rank_plus
        w_target = h_pos * (y_pos >= y[i])
        target = np.sum(w_target * inverted) / np.sum(w_target)
        w_sort = h_pos * (y_pos < y[i])
        z_sort = np.sum(w_sort)
        p_sort = w_sort / z_sort if z_sort > 0.0 else empty_sort
        yield _PositiveScan(int(i), float(ranking), float(current), float(target), p_rank, p_sort)


def rs_errors(
    problem: RankingProblem, step: SmoothStep | None = None, *, sorting: bool = True
) -> RsErrorBreakdown:
    """Current and target errors of every positive.

    ``sorting=False`` zeroes both sorting terms (the ranking-only ablation).
    """
    rows = list(_scan(problem, step or SmoothStep(), sorting))
    return RsErrorBreakdown(
        indices=np.array([r.i for r in rows], dtype=np.intp),
        ranking=np.array([r.ranking for r in rows]),
        sorting=np.array([r.sorting for r in rows]),
        sorting_target=np.array([r.sorting_target for r in rows]),
    )


def rs_pmfs(
    problem: RankingProblem, i: int, step: SmoothStep | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Ranking pmf over the negatives and sorting pmf over the positives of positive ``i``.

    Each vector is ordered by ascending example index and is all-zero when
    ``i`` has no error source of that kind.
    """
    if not problem.labels[i] > 0.0:
        raise ValueError(f"index {i} is not a positive")
    for row in _scan(problem, step or SmoothStep()):
        if row.i == i:
            return row.p_rank, row.p_sort
    raise AssertionError("unreachable")


def rs_primary_terms(
    problem: RankingProblem, step: SmoothStep | None = None, *, sorting: bool = True
) -> PairwiseErrors:
    """RS loss as a pairwise error model (dense ``n x n`` primary terms)."""
    step = step or SmoothStep()
    n = len(problem)
    pos, neg = problem.positives, problem.negatives
    primary = np.zeros((n, n))
    rows = []
    for row in _scan(problem, step, sorting):
        primary[row.i, neg] = row.ranking * row.p_rank
        primary[row.i, pos] = (row.sorting - row.sorting_target) * row.p_sort
        rows.append(row)
    return PairwiseErrors(
        primary=primary,
        indices=pos,
        ranking=np.array([r.ranking for r in rows]),
        sorting=np.array([r.sorting for r in rows]),
        ranking_target=np.zeros(len(rows)),
        sorting_target=np.array([r.sorting_target for r in rows]),
    )


def ranking_only_primary_terms(problem: RankingProblem, step: SmoothStep | None = None) -> PairwiseErrors:
    return rs_primary_terms(problem, step, sorting=False)


def _closed_form(problem, step, sorting):
    pos, neg = problem.positives, problem.negatives
    grad = np.zeros(len(problem))
    per_positive = []
    for row in _scan(problem, step, sorting):
        sort_err = row.sorting - row.sorting_target
        grad[neg] += row.ranking * row.p_rank
        grad[pos] += sort_err * row.p_sort
        grad[row.i] -= row.ranking + sort_err
        per_positive.append(row)
    grad /= pos.size
    return grad, per_positive


def rs_gradients(
    problem: RankingProblem, step: SmoothStep | None = None, *, sorting: bool = True
) -> np.ndarray:
    """Closed-form ``dL_RS/ds``.

    Negatives collect ``l_R(j) p_R(i|j)`` from every positive ``j``; positives
    get a promotion signal ``l*_RS(i) - l_RS(i)`` and a demotion signal
    ``(l_S(j) - l*_S(j)) p_S(i|j)`` from positives that should sit above them.
    """
    grad, _ = _closed_form(problem, step or SmoothStep(), sorting)
    return grad


def rs_loss(
    problem: RankingProblem, step: SmoothStep | None = None, *, sorting: bool = True
) -> LossReport:
    """Loss value, error decomposition and closed-form gradients in one pass."""
    grad, rows = _closed_form(problem, step or SmoothStep(), sorting)
    per_positive = [
        PositiveErrors(r.i, r.ranking, r.sorting, r.sorting_target) for r in rows
    ]
    loss = sum(r.ranking + (r.sorting - r.sorting_target) for r in rows) / len(rows)
    return LossReport(float(loss), per_positive, grad)


def rs_loss_value(
    problem: RankingProblem, step: SmoothStep | None = None, *, sorting: bool = True
) -> float:
    errs = rs_errors(problem, step, sorting=sorting)
    return float(sum(errs.per_positive_loss.tolist()) / errs.indices.size)
