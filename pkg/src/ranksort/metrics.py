"""Average precision of a scored list and Spearman's rank correlation."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedCorrelationError(ValueError):
    """Spearman's rho requested for a constant variable."""


def average_precision(scores, is_positive) -> float:
    """Mean precision at the rank of each positive.

    Ties in ``scores`` are broken by ascending index so the value is
    reproducible.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    flags = np.asarray(is_positive).reshape(-1).astype(bool)
    if scores.shape != flags.shape:
        raise ValueError("scores and flags must have the same length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(np.sum(flags))
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = flags[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return float(np.mean(precision))


def spearman_rho(scores, labels) -> float:
    """Pearson correlation of fractional (tie-averaged) ranks."""
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("scores and labels must have the same length")
    if x.size < 2:
        raise ValueError("spearman_rho needs at least two observations")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    sxx, syy = np.dot(rx, rx), np.dot(ry, ry)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant variable")
    return float(np.clip(np.dot(rx, ry) / np.sqrt(sxx * syy), -1.0, 1.0))
