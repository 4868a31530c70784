from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ranksort import (
    EmptyPositivesError,
    RankingProblem,
    SmoothStep,
    compute_gradients_generic,
    ranking_only_primary_terms,
    rs_errors,
    rs_gradients,
    rs_loss,
    rs_loss_value,
    rs_pmfs,
    rs_primary_terms,
)
from strategies import problems


def test_e1_all_zero(e1):
    errs = rs_errors(e1)
    assert np.all(errs.ranking == 0) and np.all(errs.sorting == 0) and np.all(errs.sorting_target == 0)
    assert rs_loss_value(e1) == 0.0
    assert np.all(rs_gradients(e1) == 0.0)


def test_e2(e2):
    errs = rs_errors(e2)
    assert errs.ranking[0] == pytest.approx(1 / 3, abs=1e-15)
    assert errs.sorting[0] == pytest.approx(0.2, abs=1e-15)
    assert errs.sorting_target[0] == pytest.approx(0.2, abs=1e-15)
    assert rs_loss_value(e2) == pytest.approx(1 / 3, abs=1e-12)
    assert np.allclose(rs_gradients(e2), [-1 / 3, 1 / 3], atol=1e-12)
    L = rs_primary_terms(e2).primary
    assert L[0, 1] == pytest.approx(1 / 3, abs=1e-12)


def test_e3(e3):
    errs = rs_errors(e3)
    assert np.allclose(errs.sorting, [0.3, 0.5], atol=1e-15)
    assert np.allclose(errs.sorting_target, [0.1, 0.5], atol=1e-15)
    assert rs_loss_value(e3) == pytest.approx(0.1, abs=1e-12)
    g = rs_gradients(e3)
    assert np.allclose(g, [-0.1, 0.1], atol=1e-12)
    assert abs(g.sum()) <= 1e-15


def test_e3_hand_computation_in_rationals():
    # ell_S(p1) = (1 - 0.9 + 1 - 0.5)/2 ; target over {p1} only
    l_s = (Fraction(1, 10) + Fraction(1, 2)) / 2
    target = Fraction(1, 10)
    assert float((l_s - target) / 2) == pytest.approx(0.1, abs=1e-15)


def test_e3_primary_terms_single_entry(e3):
    L = rs_primary_terms(e3).primary
    expected = np.zeros((2, 2))
    expected[0, 1] = 0.2
    assert np.allclose(L, expected, atol=1e-12)


def test_e3_sorting_pmf(e3):
    p_r, p_s = rs_pmfs(e3, 0)
    assert p_r.size == 0
    assert np.array_equal(p_s, [0.0, 1.0])


def test_pmf_zero_for_perfect_positive():
    p = RankingProblem([5.0, 0.0, -1.0], [1.0, 0.0, 0.0])
    p_r, _ = rs_pmfs(p, 0)
    assert np.all(p_r == 0.0)


def test_pmf_tied_negatives_split_evenly():
    p = RankingProblem([0.0, 3.0, 3.0], [1.0, 0.0, 0.0])
    p_r, _ = rs_pmfs(p, 0)
    assert np.allclose(p_r, [0.5, 0.5])


def test_pmf_rejects_negative_index(e2):
    with pytest.raises(ValueError):
        rs_pmfs(e2, 1)


def test_perfect_ranking_and_sorting_zero_matrix():
    p = RankingProblem([4.0, 3.0, 2.0, 0.0], [0.9, 0.6, 0.3, 0.0])
    assert np.all(rs_primary_terms(p).primary == 0.0)
    assert rs_loss_value(p) == 0.0


def test_equal_labels_do_not_demote_each_other():
    p = RankingProblem([0.0, 0.1], [0.6, 0.6])
    _, p_s = rs_pmfs(p, 0)
    assert np.all(p_s == 0.0)
    assert rs_loss_value(p) == 0.0


def test_empty_positives_error():
    with pytest.raises(EmptyPositivesError):
        rs_loss_value(RankingProblem([1.0], [0.0]))


def test_ranking_only_ignores_sorting(e3):
    assert rs_loss_value(e3, sorting=False) == 0.0
    terms = ranking_only_primary_terms(e3)
    assert np.all(terms.primary == 0.0)


def test_saturated_negative_does_not_change_loss():
    base = RankingProblem([3.0, 1.0, 0.0, -2.0], [0.8, 0.0, 0.5, 0.0])
    higher = RankingProblem([3.0, 1.0, 0.0, 9.0], [0.8, 0.0, 0.5, 0.0])
    top = RankingProblem([3.0, 1.0, 0.0, 5.0], [0.8, 0.0, 0.5, 0.0])
    assert rs_loss_value(top) == rs_loss_value(higher)
    assert rs_loss_value(top) > rs_loss_value(base)


def test_loss_report_matches_breakdown(e3):
    rep = rs_loss(e3)
    assert rep.loss == rs_loss_value(e3)
    assert [p.index for p in rep.per_positive] == [0, 1]
    assert rep.per_positive[0].current_sorting == pytest.approx(0.3)
    assert rep.per_positive[0].target_ranking == 0.0


@given(problems(max_n=16))
def test_error_bounds(problem):
    errs = rs_errors(problem)
    assert np.all((errs.ranking >= 0) & (errs.ranking <= 1))
    assert np.all(errs.sorting_target >= 0)
    assert np.all(errs.sorting_target <= errs.sorting + 1e-15)
    assert np.all(errs.sorting <= 1)


@given(problems(max_n=16), st.sampled_from([0.1, 0.5, 1.0, 2.0]))
def test_closed_form_matches_generic(problem, delta):
    step = SmoothStep(delta)
    a = rs_gradients(problem, step)
    b = compute_gradients_generic(problem, rs_primary_terms, step)
    assert np.max(np.abs(a - b)) <= 1e-12


@given(problems(max_n=16))
def test_gradient_signs(problem):
    g = rs_gradients(problem)
    assert np.all(g[problem.negatives] >= 0.0)
    errs = rs_errors(problem)
    # promotion signal l*_RS - l_RS is never positive
    assert np.all(errs.sorting_target - errs.current <= 1e-15)


@given(problems(max_n=16), st.floats(-100, 100))
def test_shift_invariance(problem, c):
    a, b = rs_loss(problem), rs_loss(problem.shifted(c))
    assert abs(a.loss - b.loss) <= 1e-12
    assert np.max(np.abs(a.gradients - b.gradients)) <= 1e-12


def test_rs_loss_raises_on_bad_delta():
    with pytest.raises(ValueError):
        SmoothStep(0.0)
