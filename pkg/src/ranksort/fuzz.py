"""Random ranking problems for property checks (shared by the tests and ``gradcheck``)."""
from __future__ import annotations

import numpy as np

from .core import RankingProblem

LABEL_SCHEMES = ("uniform", "unit", "discrete", "sparse")


def random_problem(
    rng: np.random.Generator,
    max_n: int = 128,
    *,
    labels: str | None = None,
    min_positives: int = 1,
) -> RankingProblem:
    """Draw one problem with at least ``min_positives`` positives.

    Logits mix a wide spread with tight clusters so that many pairs fall
    inside the smoothing band; label schemes cover continuous, all-one,
    tie-heavy and mostly-negative cases.
    """
    n = int(rng.integers(max(1, min_positives), max_n + 1))
    scheme = labels or LABEL_SCHEMES[int(rng.integers(len(LABEL_SCHEMES)))]
    if rng.random() < 0.5:
        logits = rng.normal(0.0, rng.uniform(0.1, 3.0), n)
    else:
        centres = rng.normal(0.0, 2.0, int(rng.integers(1, 5)))
        logits = centres[rng.integers(len(centres), size=n)] + rng.normal(0.0, 0.2, n)

    pos_rate = rng.uniform(0.05, 0.9) if scheme != "sparse" else rng.uniform(0.01, 0.1)
    is_pos = rng.random(n) < pos_rate
    short = min_positives - int(is_pos.sum())
    if short > 0:
        is_pos[rng.choice(np.flatnonzero(~is_pos), size=short, replace=False)] = True

    if scheme == "unit":
        y = np.ones(n)
    elif scheme == "discrete":
        y = rng.choice([0.25, 0.5, 0.75, 1.0], size=n)
    else:
        y = rng.uniform(0.05, 1.0, n)
    return RankingProblem(logits, np.where(is_pos, y, 0.0))


def problem_corpus(seed: int, count: int, max_n: int = 128) -> list[RankingProblem]:
    rng = np.random.default_rng(seed)
    return [random_problem(rng, max_n) for _ in range(count)]


def separated_problem(rng: np.random.Generator, max_n: int, delta: float) -> RankingProblem:
    """Problem whose pairwise logit gaps all exceed ``delta``."""
    n = int(rng.integers(1, max_n + 1))
    gaps = delta * (1.0 + rng.uniform(0.05, 2.0, n))
    logits = rng.permutation(np.cumsum(gaps))
    is_pos = rng.random(n) < rng.uniform(0.1, 0.9)
    is_pos[int(rng.integers(n))] = True
    y = rng.uniform(0.05, 1.0, n)
    return RankingProblem(logits, np.where(is_pos, y, 0.0))
