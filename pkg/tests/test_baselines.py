import numpy as np
import pytest
from hypothesis import given

from ranksort import (
    AlrpTargetConfig,
    EmptyPositivesError,
    RankingProblem,
    SmoothStep,
    alrp_target_error,
    ap_gradients,
    ap_loss,
    rs_loss,
)
from strategies import problems


def test_ap_positive_above_negative():
    rep = ap_loss(RankingProblem([3.0, 0.0], [1.0, 0.0]))
    assert rep.loss == 0.0
    assert np.all(rep.gradients == 0.0)


def test_ap_positive_below_negative():
    rep = ap_loss(RankingProblem([0.0, 3.0], [1.0, 0.0]))
    assert rep.loss == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(rep.gradients, [-0.5, 0.5], atol=1e-12)


def test_ap_tie():
    rep = ap_loss(RankingProblem([2.0, 2.0], [1.0, 0.0]), SmoothStep(0.5))
    assert rep.loss == pytest.approx(1 / 3, abs=1e-12)


def test_ap_default_delta_is_one():
    # gap 0.75 is saturated for delta 0.5 but inside the band for delta 1
    p = RankingProblem([0.0, 0.75], [1.0, 0.0])
    h = 0.75 / 2 + 0.5
    assert ap_loss(p).loss == pytest.approx(h / (1 + h), abs=1e-12)


def test_ap_empty_positives():
    with pytest.raises(EmptyPositivesError):
        ap_loss(RankingProblem([0.0], [0.0]))


@given(problems(max_n=16))
def test_ap_closed_form_matches_generic(problem):
    assert np.max(np.abs(ap_gradients(problem) - ap_loss(problem).gradients)) <= 1e-12


@given(problems(max_n=16, unit=True))
def test_rs_equals_ap_on_unit_labels(problem):
    step = SmoothStep(0.5)
    a, b = rs_loss(problem, step), ap_loss(problem, step)
    assert abs(a.loss - b.loss) <= 1e-12
    assert np.max(np.abs(a.gradients - b.gradients)) <= 1e-12


@given(problems(max_n=16))
def test_ap_shift_invariance_and_zero_sum(problem):
    a, b = ap_loss(problem), ap_loss(problem.shifted(7.25))
    assert abs(a.loss - b.loss) <= 1e-12
    assert abs(np.sum(a.gradients)) <= 1e-9


def test_alrp_zero_localisation_error():
    p = RankingProblem([0.0, 1.0, 2.0], [1.0, 0.0, 0.4])
    assert np.all(alrp_target_error(p, [0.0, 0.0], AlrpTargetConfig(0.5)) == 0.0)


def test_alrp_rank_one():
    p = RankingProblem([5.0, 0.0], [1.0, 0.0])
    assert alrp_target_error(p, [0.25], AlrpTargetConfig(0.5))[0] == pytest.approx(0.5)


def test_alrp_rank_two():
    p = RankingProblem([0.0, 5.0], [1.0, 0.0])
    assert alrp_target_error(p, [0.5], AlrpTargetConfig(0.5))[0] == pytest.approx(0.5)


def test_alrp_target_moves_with_logits():
    cfg = AlrpTargetConfig(0.5)
    below = alrp_target_error(RankingProblem([0.0, 5.0], [1.0, 0.0]), [0.25], cfg)
    above = alrp_target_error(RankingProblem([9.0, 5.0], [1.0, 0.0]), [0.25], cfg)
    assert below[0] < above[0]


@pytest.mark.parametrize("tau", [1.0, 1.5, -0.1])
def test_alrp_tau_validation(tau):
    with pytest.raises(ValueError):
        AlrpTargetConfig(tau)


def test_alrp_misaligned_errors():
    with pytest.raises(ValueError):
        alrp_target_error(RankingProblem([0.0, 1.0], [1.0, 1.0]), [0.1], AlrpTargetConfig(0.5))
