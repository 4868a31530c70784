"""Verification suite behind ``ranksort gradcheck``.

Compares the closed-form RS gradients with the generic pairwise engine and
with the brute-force reference, checks hand-derived fixtures, and measures the
loss invariants on a fuzzed corpus.  Each check reports a worst-case deviation
and the tolerance it is held to.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _oracle
from .baselines import AP_DEFAULT_DELTA, ap_loss
from .config import parse_problem
from .core import SmoothStep
from .framework import compute_gradients_generic
from .fuzz import problem_corpus, separated_problem
from .rs_loss import rs_loss, rs_loss_value, rs_primary_terms


@dataclass(frozen=True)
class Fixture:
    file: str
    model: str  # "rs" or "ap"
    delta: float
    loss: float
    gradients: tuple[float, ...]


FIXTURES = (
    Fixture("e1.csv", "rs", 0.5, 0.0, (0.0, 0.0, 0.0)),
    Fixture("e2.csv", "rs", 0.5, 1.0 / 3.0, (-1.0 / 3.0, 1.0 / 3.0)),
    Fixture("e3.csv", "rs", 0.5, 0.1, (-0.1, 0.1)),
    Fixture("ap_above.csv", "ap", AP_DEFAULT_DELTA, 0.0, (0.0, 0.0)),
    Fixture("ap_below.csv", "ap", AP_DEFAULT_DELTA, 0.5, (-0.5, 0.5)),
    Fixture("ap_tied.csv", "ap", 0.5, 1.0 / 3.0, (-1.0 / 3.0, 1.0 / 3.0)),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<28} {self.value!r:>24}  (tol {self.tolerance!r})"


def fixture_text(name: str) -> str:
    return resources.files("ranksort").joinpath("fixtures", name).read_text(encoding="utf-8")


def fixture_problem(name: str):
    return parse_problem(fixture_text(name), name).problem


def _max(values) -> float:
    return float(max(values, default=0.0))


def check_fixtures() -> float:
    worst = 0.0
    for fx in FIXTURES:
        problem = fixture_problem(fx.file)
        step = SmoothStep(fx.delta)
        rep = rs_loss(problem, step) if fx.model == "rs" else ap_loss(problem, step)
        worst = max(worst, abs(rep.loss - fx.loss))
        worst = max(worst, _max(np.abs(rep.gradients - np.array(fx.gradients))))
    return worst


def run_checks(problems: int = 1000, max_n: int = 128, seed: int = 0) -> list[CheckResult]:
    step = SmoothStep()
    corpus = problem_corpus(seed, problems, max_n)
    rng = np.random.default_rng([seed, 1])

    generic_dev, oracle_loss_dev, oracle_grad_dev = [], [], []
    grad_sum, min_loss, min_neg_grad, shift_dev, unit_dev = [], [], [], [], []
    for problem in corpus:
        rep = rs_loss(problem, step)
        generic = compute_gradients_generic(problem, rs_primary_terms, step)
        generic_dev.append(np.max(np.abs(rep.gradients - generic)))

        ref_loss, ref_grad = _oracle.naive_rs_reference(problem, step)
        oracle_loss_dev.append(abs(rep.loss - ref_loss))
        oracle_grad_dev.append(np.max(np.abs(rep.gradients - ref_grad)))

        grad_sum.append(abs(float(np.sum(rep.gradients))))
        min_loss.append(rep.loss)
        neg = problem.negatives
        if neg.size:
            min_neg_grad.append(float(np.min(rep.gradients[neg])))

        moved = rs_loss(problem.shifted(float(rng.uniform(-10.0, 10.0))), step)
        shift_dev.append(max(abs(moved.loss - rep.loss),
                             float(np.max(np.abs(moved.gradients - rep.gradients)))))

        unit = type(problem)(problem.logits, (problem.labels > 0.0).astype(np.float64))
        rs_u = rs_loss(unit, step)
        ap_u = ap_loss(unit, step)
        unit_dev.append(max(abs(rs_u.loss - ap_u.loss),
                            float(np.max(np.abs(rs_u.gradients - ap_u.gradients)))))

    step_dev = []
    for _ in range(max(problems // 10, 1)):
        problem = separated_problem(rng, max_n, step.delta)
        step_dev.append(abs(rs_loss_value(problem, step) - _oracle.discrete_rank_reference(problem)))

    results = [
        ("fixtures", check_fixtures(), 1e-12),
        ("closed_form_vs_generic", _max(generic_dev), 1e-9),
        ("oracle_loss", _max(oracle_loss_dev), 1e-12),
        ("oracle_gradients", _max(oracle_grad_dev), 1e-12),
        ("gradient_sum", _max(grad_sum), 1e-9),
        ("shift_invariance", _max(shift_dev), 1e-12),
        ("rs_equals_ap_unit_labels", _max(unit_dev), 1e-12),
        ("unit_step_vs_discrete", _max(step_dev), 0.0),
    ]
    out = [CheckResult(name, float(v), tol, bool(v <= tol)) for name, v, tol in results]
    # sign checks: report the most negative value, must not go below zero
    lo_loss = float(min(min_loss))
    lo_neg = float(min(min_neg_grad, default=0.0))
    out.append(CheckResult("min_loss", lo_loss, 0.0, lo_loss >= 0.0))
    out.append(CheckResult("min_negative_gradient", lo_neg, 0.0, lo_neg >= 0.0))
    return out
