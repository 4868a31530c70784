"""Shared primitives: ranking problems, the smoothed step and pairwise rank statistics.

Conventions used by every loss in the package:

* ``x_ij = s_j - s_i`` (how far example ``j`` sits above example ``i``).
* Positives are the indices with label ``> 0``; label exactly ``0`` means negative.
* The self pair ``j == i`` always counts as exactly 1 (the unit-step value at 0),
  never as the smoothed ``H(0) = 0.5``.  A lone, perfectly ranked positive
  therefore has rank 1 and zero loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_DELTA = 0.5


class EmptyPositivesError(ValueError):
    """Raised when a loss is requested for a problem without positives."""


@dataclass(frozen=True, eq=False)
class RankingProblem:
    """Logits and continuous labels in ``[0, 1]`` for one classification task."""

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64).reshape(-1)
        labels = np.array(self.labels, dtype=np.float64).reshape(-1)
        if logits.size == 0:
            raise ValueError("a ranking problem needs at least one example")
        if logits.shape != labels.shape:
            raise ValueError(
                f"logits and labels differ in length ({logits.size} vs {labels.size})"
            )
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        if not np.all((labels >= 0.0) & (labels <= 1.0)):
            raise ValueError("labels must lie in [0, 1]")
        logits.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.logits.size

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels > 0.0)

    @property
    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0.0)

    def shifted(self, c: float) -> "RankingProblem":
        return RankingProblem(self.logits + c, self.labels)

    def require_positives(self) -> np.ndarray:
        pos = self.positives
        if pos.size == 0:
            raise EmptyPositivesError("problem has no positive examples; skip this batch")
        return pos


@dataclass(frozen=True)
class SmoothStep:
    """Unit step relaxed to a linear ramp on ``[-delta, delta]``."""

    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"delta must be a positive finite number, got {self.delta!r}")

    def __call__(self, x):
        """Evaluate elementwise; accepts scalars or arrays."""
        return np.clip(np.asarray(x, dtype=np.float64) / (2.0 * self.delta) + 0.5, 0.0, 1.0)


def smooth_step(x: float, delta: float = DEFAULT_DELTA) -> float:
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    return float(SmoothStep(delta)(x))


def partition(problem: RankingProblem) -> tuple[np.ndarray, np.ndarray]:
    """Index sets ``(P, N)`` in ascending order."""
    return problem.positives, problem.negatives


class PairStats(NamedTuple):
    rank: float
    rank_plus: float
    n_fp: float


def pair_stats(problem: RankingProblem, i: int, step: SmoothStep | None = None) -> PairStats:
    """Smoothed ``rank(i)``, ``rank⁺(i)`` and false-positive count ``N_FP(i)``.

    The self pair contributes 1 to the count of the set ``i`` belongs to, so
    ``rank == rank_plus + n_fp`` holds for every index.
    """
    step = step or SmoothStep()
    n = len(problem)
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for problem of size {n}")
    h = step(problem.logits - problem.logits[i])
    h[i] = 1.0
    is_pos = problem.labels > 0.0
    rank_plus = float(np.sum(h[is_pos]))
    n_fp = float(np.sum(h[~is_pos]))
    return PairStats(float(np.sum(h)), rank_plus, n_fp)
