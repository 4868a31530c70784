"""Slow reference implementations for the test suite and ``gradcheck``.

Not part of the public API.  ``naive_rs_reference`` transcribes the RS loss
definitions with plain Python loops and no shared subexpressions;
``discrete_rank_reference`` uses the exact unit step with ranks obtained by
sorting.
"""
from __future__ import annotations

import numpy as np

from .core import EmptyPositivesError, RankingProblem, SmoothStep


class AmbiguousRankError(ValueError):
    """Two distinct examples share a logit, so the discrete rank is undefined."""


def _h(x: float, delta: float) -> float:
    if x <= -delta:
        return 0.0
    if x >= delta:
        return 1.0
    return x / (2.0 * delta) + 0.5


def naive_rs_reference(problem: RankingProblem, step: SmoothStep | None = None):
    """Return ``(loss, gradients)`` of RS loss computed by brute force."""
    delta = (step or SmoothStep()).delta
    s = [float(v) for v in problem.logits]
    y = [float(v) for v in problem.labels]
    n = len(s)
    P = [i for i in range(n) if y[i] > 0.0]
    N = [i for i in range(n) if y[i] == 0.0]
    if not P:
        raise EmptyPositivesError("problem has no positive examples")

    def H(i, j):
        if i == j:
            return 1.0
        return _h(s[j] - s[i], delta)

    l_R, l_S, l_S_star = {}, {}, {}
    for i in P:
        rank = 0.0
        for j in range(n):
            rank += H(i, j)
        rank_plus = 0.0
        for j in P:
            rank_plus += H(i, j)
        n_fp = 0.0
        for j in N:
            n_fp += H(i, j)
        l_R[i] = n_fp / rank

        num = 0.0
        for j in P:
            num += H(i, j) * (1.0 - y[j])
        l_S[i] = num / rank_plus

        t_num = 0.0
        t_den = 0.0
        for j in P:
            if y[j] >= y[i]:
                t_num += H(i, j) * (1.0 - y[j])
                t_den += H(i, j)
        l_S_star[i] = t_num / t_den

    L = [[0.0] * n for _ in range(n)]
    for i in P:
        z_r = 0.0
        for k in N:
            z_r += H(i, k)
        z_s = 0.0
        for k in P:
            if y[k] < y[i]:
                z_s += H(i, k)
        for j in N:
            p_r = H(i, j) / z_r if z_r > 0.0 else 0.0
            L[i][j] = (l_R[i] - 0.0) * p_r
        for j in P:
            if y[j] < y[i] and z_s > 0.0:
                p_s = H(i, j) / z_s
            else:
                p_s = 0.0
            L[i][j] = (l_S[i] - l_S_star[i]) * p_s

    loss = 0.0
    for i in P:
        loss += (l_R[i] + l_S[i]) - (0.0 + l_S_star[i])
    loss /= len(P)

    grads = []
    for i in range(n):
        g = 0.0
        for j in range(n):
            g += L[j][i]
        for j in range(n):
            g -= L[i][j]
        grads.append(g / len(P))
    return loss, np.array(grads)


def discrete_rank_reference(problem: RankingProblem) -> float:
    """RS loss under the exact unit step, with ranks from an explicit sort.

    Requires pairwise-distinct logits.
    """
    s, y = problem.logits, problem.labels
    pos = problem.require_positives()
    neg = problem.negatives
    order = np.argsort(-s, kind="stable")
    sorted_s = s[order]
    if np.any(sorted_s[1:] == sorted_s[:-1]):
        raise AmbiguousRankError("tied logits: perturb ties before calling the discrete reference")
    place = np.empty(s.size, dtype=np.intp)
    place[order] = np.arange(s.size)

    y_pos = y[pos]
    inverted = 1.0 - y_pos
    ranking, sorting, target = [], [], []
    for i in pos:
        above = place <= place[i]
        h_pos = above[pos].astype(np.float64)
        h_neg = above[neg].astype(np.float64)
        n_fp = np.sum(h_neg)
        rank_plus = np.sum(h_pos)
        ranking.append(n_fp / (rank_plus + n_fp))
        sorting.append(np.sum(h_pos * inverted) / rank_plus)
        w_target = h_pos * (y_pos >= y[i])
        target.append(np.sum(w_target * inverted) / np.sum(w_target))
    per_positive = np.array(ranking) + (np.array(sorting) - np.array(target))
    return float(sum(per_positive.tolist()) / pos.size)
