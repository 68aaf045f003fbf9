import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FixedCurve, const_params
from hesga.evaluation import (
    FAST_SENTINEL,
    FULL_SENTINEL,
    EvalBudget,
    EvaluationError,
    FidelityError,
    delta_fitness,
    fast_epochs,
    fast_evaluate,
    full_evaluate,
    safe_fast_evaluate,
    safe_full_evaluate,
)
from hesga.objectives import MlpRegressionObjective, SyntheticCurveObjective
from hesga.space import decode_genome, table1_space


def test_full_evaluate_last_epoch():
    budget = EvalBudget()
    assert full_evaluate(FixedCurve([2.0, 1.5, 1.2]), {}, 3, 0, budget).rmse == 1.2
    assert full_evaluate(FixedCurve([0.7] * 10), {}, 10, 0, budget).rmse == 0.7
    assert (budget.ev_full, budget.epoch_units) == (2, 13)


def test_full_evaluate_synthetic_closed_form():
    score = full_evaluate(const_params(1.0, 2.0, 0.5), {}, 20, 0, EvalBudget())
    assert score.rmse == pytest.approx(1 + 2 * math.exp(-10), rel=1e-14)
    assert score.rmse == pytest.approx(1.0000908, abs=1e-7)


def test_fast_evaluate_examples():
    budget = EvalBudget()
    s = fast_evaluate(FixedCurve([2.0, 1.5] + [1.0] * 18), {}, 20, 0.1, 0, budget)
    assert (s.t_used, s.delta) == (2, 0.5)
    assert fast_evaluate(FixedCurve([0.7] * 5), {}, 20, 0.1, 0, budget).delta == 0.0
    assert (budget.ev_fast, budget.epoch_units) == (2, 4)


def test_fast_epochs_fraction():
    assert fast_epochs(100, 0.1) == 10
    assert fast_epochs(20, 0.1) == 2
    assert fast_epochs(10, 0.1) == 2
    assert fast_epochs(25, 0.1) == 3
    assert fast_epochs(10, 0.15) == 2
    assert fast_epochs(50, 0.2) == 10
    with pytest.raises(FidelityError):
        fast_epochs(1, 0.1)
    with pytest.raises(FidelityError):
        fast_epochs(10, 0.6)


def test_fast_cost_fraction():
    budget = EvalBudget()
    obj = FixedCurve(np.linspace(2, 1, 100))
    fast_evaluate(obj, {}, 100, 0.1, 0, budget)
    assert budget.epoch_units == 10
    full_evaluate(obj, {}, 100, 0, budget)
    assert budget.epoch_units == 110


@pytest.mark.parametrize(
    "curve,t,expected",
    [([3.0, 2.0, 1.0], 3, 2.0), ([1.0, 1.5], 2, -0.5), ([5.0, 4.0, 3.5, 3.2], 2, 1.0)],
)
def test_delta_fitness(curve, t, expected):
    assert delta_fitness(curve, t) == expected


def test_delta_fitness_range():
    with pytest.raises(FidelityError):
        delta_fitness([1.0, 0.5], 3)
    with pytest.raises(FidelityError):
        delta_fitness([1.0, 0.5], 1)


class NanObjective:
    def curve(self, assignment, epochs, seed):
        return np.full(epochs, np.nan)


def test_non_finite_raises_with_assignment():
    with pytest.raises(EvaluationError) as info:
        full_evaluate(NanObjective(), {"lr": 1.0}, 5, 0, EvalBudget())
    assert info.value.assignment == {"lr": 1.0}


def test_sentinels():
    budget = EvalBudget()
    full = safe_full_evaluate(NanObjective(), {}, 5, 0, budget)
    fast = safe_fast_evaluate(NanObjective(), {}, 20, 0.1, 0, budget)
    assert (full.rmse, full.failed) == (FULL_SENTINEL, True)
    assert (fast.delta, fast.failed) == (FAST_SENTINEL, True)
    # divergent runs still pay for the epochs they were scheduled
    assert budget.snapshot() == {"ev_fast": 1, "ev_full": 1, "epoch_units": 7}


def test_repeats_average_and_count():
    obj = SyntheticCurveObjective(lambda a: (0.5, 1.0, 0.2), noise_sigma=0.05)
    budget = EvalBudget()
    score = full_evaluate(obj, {}, 10, 3, budget, repeats=4)
    assert (budget.ev_full, budget.epoch_units) == (4, 40)
    singles = [full_evaluate(obj, {}, 10, s, EvalBudget()).rmse for s in range(3)]
    assert score.rmse != singles[0]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.sampled_from(["full", "fast"]), max_size=20),
    st.integers(2, 60),
    st.sampled_from([0.1, 0.15, 0.2, 0.5]),
)
def test_budget_arithmetic(kinds, n_e, p_f):
    obj = const_params(0.2, 1.0, 0.3)
    budget = EvalBudget()
    for k in kinds:
        if k == "full":
            full_evaluate(obj, {}, n_e, 0, budget)
        else:
            fast_evaluate(obj, {}, n_e, p_f, 0, budget)
    f, g = kinds.count("full"), kinds.count("fast")
    assert budget.epoch_units == f * n_e + g * max(2, math.floor(p_f * n_e + 0.5 + 1e-9))
    assert (budget.ev_full, budget.ev_fast) == (f, g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8191), st.integers(0, 2**31), st.integers(2, 12))
def test_prefix_consistency_mlp(code, seed, t):
    space = table1_space()
    obj = MlpRegressionObjective()
    a = decode_genome(format(code, "013b"), space)
    full = obj.curve(a, 12, seed)
    short = obj.curve(a, t, seed)
    assert np.array_equal(short, full[:t])
    assert fast_evaluate(obj, a, 12 * 5, 0.2, seed, EvalBudget()).delta == pytest.approx(
        full[0] - full[11]
    )


def test_delta_sign_and_determinism():
    improving = FixedCurve([2.0, 1.0, 0.5])
    worsening = FixedCurve([1.0, 1.5, 2.0])
    assert fast_evaluate(improving, {}, 20, 0.1, 0, EvalBudget()).delta > 0
    assert fast_evaluate(worsening, {}, 20, 0.1, 0, EvalBudget()).delta < 0
    obj = MlpRegressionObjective()
    a = decode_genome("0101010101010", table1_space())
    assert full_evaluate(obj, a, 5, 9, EvalBudget()) == full_evaluate(obj, a, 5, 9, EvalBudget())
