import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CountingObjective, const_params
from hesga.core import (
    ConfigError,
    EliteArchive,
    HesgaConfig,
    cost_in_epoch_units,
    exact_epoch_units,
    hesga_cost,
    initialize,
    mutate,
    produce_offspring,
    rank_weights,
    roulette_select,
    run,
    screen_candidates,
    single_point_crossover,
    step_generation,
)
from hesga.evaluation import FastScore, FullScore
from hesga.objectives import MlpRegressionObjective, SyntheticCurveObjective, exhaustive_oracle
from hesga.space import Genome, HyperparamDef, SearchSpace, table1_space

bitstrings = st.integers(2, 16).flatmap(
    lambda n: st.tuples(st.text("01", min_size=n, max_size=n), st.text("01", min_size=n, max_size=n))
)


@pytest.mark.parametrize(
    "a,b,p,expected",
    [
        ("0000", "1111", 2, ("0011", "1100")),
        ("1010", "1010", 1, ("1010", "1010")),
        ("1010", "1010", 3, ("1010", "1010")),
        ("110101", "001010", 4, ("110110", "001001")),
    ],
)
def test_crossover_examples(a, b, p, expected):
    c1, c2 = single_point_crossover(Genome(a), Genome(b), p)
    assert (c1.bits, c2.bits) == expected


def test_crossover_cut_range():
    with pytest.raises(ValueError):
        single_point_crossover(Genome("0000"), Genome("1111"), 0)
    with pytest.raises(ValueError):
        single_point_crossover(Genome("0000"), Genome("1111"), 4)
    with pytest.raises(ValueError):
        single_point_crossover(Genome("000"), Genome("1111"), 1)


def test_mutate_examples():
    assert mutate(Genome("0000"), 1).bits == "1000"
    assert mutate(Genome("10110"), 3).bits == "10010"
    with pytest.raises(ValueError):
        mutate(Genome("10110"), 0)
    with pytest.raises(ValueError):
        mutate(Genome("10110"), 6)


@settings(max_examples=200)
@given(bitstrings, st.data())
def test_operator_closure(pair, data):
    a, b = Genome(pair[0]), Genome(pair[1])
    n = len(a)
    p = data.draw(st.integers(1, n - 1))
    c1, c2 = single_point_crossover(a, b, p)
    assert len(c1) == len(c2) == n
    assert set(c1.bits + c2.bits) <= {"0", "1"}
    # bit multiset is preserved per position
    for i in range(n):
        assert sorted(c1.bits[i] + c2.bits[i]) == sorted(a.bits[i] + b.bits[i])
    q = data.draw(st.integers(1, n))
    m = mutate(a, q)
    assert len(m) == n
    assert sum(x != y for x, y in zip(m.bits, a.bits)) == 1
    assert mutate(m, q) == a


def test_rank_weights():
    assert list(rank_weights([1.0, 2.0, 3.0], "min")) == [3, 2, 1]
    assert list(rank_weights([1.0, 2.0, 3.0], "max")) == [1, 2, 3]
    assert list(rank_weights([0.4, 0.4], "min")) == [1.5, 1.5]
    assert list(rank_weights([5.0, 1.0, 5.0], "min")) == [1.5, 3, 1.5]


def _frequencies(scores, better, draws=10_000, seed=11):
    rng = np.random.default_rng(seed)
    counts = np.bincount([roulette_select(scores, better, rng) for _ in range(draws)], minlength=len(scores))
    return counts / draws


def test_roulette_frequencies():
    assert np.allclose(_frequencies([1.0, 2.0, 3.0], "min"), [3 / 6, 2 / 6, 1 / 6], atol=0.02)
    assert np.allclose(_frequencies([0.5, 0.5], "min"), [0.5, 0.5], atol=0.02)
    assert np.allclose(_frequencies([0.1, 0.9, 0.3], "max"), [1 / 6, 3 / 6, 2 / 6], atol=0.02)
    assert _frequencies([7.0], "min", draws=100)[0] == 1.0


def test_roulette_empty():
    with pytest.raises(ValueError):
        roulette_select([], "min", np.random.default_rng(0))


def _full(r):
    return FullScore(r)


def test_archive_examples():
    arc = EliteArchive(2)
    assert arc.update(Genome("00"), _full(0.9))
    assert arc.update(Genome("01"), _full(0.5))
    assert arc.rmses == [0.5, 0.9]
    assert not arc.update(Genome("10"), _full(0.9))
    assert arc.update(Genome("11"), _full(0.7))
    assert arc.rmses == [0.5, 0.7]
    assert Genome("00") not in arc
    assert not arc.update(Genome("01"), _full(0.1))


def test_archive_rejects_fast_scores():
    arc = EliteArchive(3)
    with pytest.raises(TypeError):
        arc.update(Genome("0"), FastScore(0.4, 2))
    with pytest.raises(ValueError):
        EliteArchive(0)


@settings(max_examples=100)
@given(st.integers(1, 5), st.lists(st.tuples(st.integers(0, 31), st.floats(0, 10)), max_size=40))
def test_archive_monotonicity(cap, inserts):
    arc = EliteArchive(cap)
    best_seen = math.inf
    worst_prev = None
    for code, r in inserts:
        arc.update(Genome.from_int(code, 5), _full(r))
        best_seen = min(best_seen, arc.best.score.rmse)
        rm = arc.rmses
        assert rm == sorted(rm)
        assert len(rm) <= cap
        assert len({e.genome.bits for e in arc.entries}) == len(rm)
        assert arc.best.score.rmse == best_seen
        if worst_prev is not None and len(rm) == cap:
            assert rm[-1] <= worst_prev
        if len(rm) == cap:
            worst_prev = rm[-1]


def test_config_defaults_and_validation():
    cfg = HesgaConfig()
    assert (cfg.n_elite, cfg.n_candidates, cfg.t_fast) == (1, 1, 10)
    assert HesgaConfig(n_pop=8).n_elite == 1
    assert HesgaConfig(n_pop=20, r_c=0.15).n_candidates == 3
    for bad in ({"n_pop": 1}, {"maxgen": 0}, {"p_c": 1.5}, {"r_e": 0}, {"n_e": 1}, {"p_f": 0.7}):
        with pytest.raises(ConfigError):
            HesgaConfig(**bad)


def test_initialize_counts(small_space):
    obj = CountingObjective(const_params(0.2, 1.0, 0.3))
    state = initialize(HesgaConfig(n_e=20), small_space, obj)
    assert state.budget.ev_full == 10 and state.budget.ev_fast == 0
    assert len(state.archive) == 1
    assert obj.calls == 10 and obj.epochs == 200


def test_offspring_counts(small_space):
    cfg = HesgaConfig(n_pop=5, n_e=10, r_e=0.4)
    state = initialize(cfg, small_space, const_params(0.2, 1.0, 0.3))
    assert len(produce_offspring(state, cfg)) == 5


def test_offspring_are_parent_copies_without_operators(small_space, bowl):
    obj = SyntheticCurveObjective.bowl(small_space)
    cfg = HesgaConfig(n_pop=10, n_e=10, r_e=0.3, p_c=0.0, p_m=0.0)
    state = initialize(cfg, small_space, obj)
    parents = {e.genome for e in state.archive.entries} | {i.genome for i in state.population}
    assert set(produce_offspring(state, cfg)) <= parents


def test_identical_parents_full_crossover(small_space):
    cfg = HesgaConfig(n_pop=4, n_e=10, p_c=1.0, p_m=0.0)
    state = initialize(cfg, small_space, const_params(0.2, 1.0, 0.3))
    g = state.population[0].genome
    for ind in state.population:
        ind.genome = g
    state.archive = EliteArchive(1)
    state.archive.update(g, FullScore(0.2))
    assert produce_offspring(state, cfg) == [g] * 4


def test_screen_candidates():
    offspring = [Genome(b) for b in ("00", "01", "10", "11")]
    scores = [FastScore(d, 2) for d in (0.1, 0.5, 0.5, 0.2)]
    assert screen_candidates(offspring, scores, 1) == [1]
    assert screen_candidates(offspring, scores, 2) == [1, 2]
    # fully evaluated genomes are skipped while fresh ones remain
    assert screen_candidates(offspring, scores, 2, {"01"}) == [2, 3]
    assert screen_candidates(offspring, scores, 3, {"00", "01", "10", "11"}) == [1, 2, 3]
    dup = [Genome("01"), Genome("01"), Genome("10")]
    assert screen_candidates(dup, [FastScore(0.9, 2)] * 2 + [FastScore(0.1, 2)], 2) == [0, 2]


def test_step_counts(small_space, bowl):
    obj = SyntheticCurveObjective.bowl(small_space)
    cfg = HesgaConfig(n_e=100)
    state = initialize(cfg, small_space, obj)
    rec = step_generation(state, cfg, small_space, obj)
    assert (rec.ev_fast, rec.ev_full, rec.epoch_units) == (10, 11, 1200)
    assert len(rec.promoted) == 1


def test_run_counter_law(small_space):
    obj = CountingObjective(SyntheticCurveObjective.bowl(small_space))
    res = run(HesgaConfig(n_e=100), small_space, obj)
    assert res.budget.snapshot() == {"ev_fast": 100, "ev_full": 20, "epoch_units": 3000}
    assert obj.epochs == 3000
    assert [r.gen for r in res.history] == list(range(1, 11))
    best = [r.best_rmse for r in res.history]
    assert best == sorted(best, reverse=True)


def test_run_epoch_cap(small_space):
    obj = SyntheticCurveObjective.bowl(small_space)
    res = run(HesgaConfig(n_e=100), small_space, obj, epoch_cap=1500)
    assert res.budget.epoch_units == 1000 + 2 * 200
    assert len(res.history) == 2


def test_cost_examples():
    assert cost_in_epoch_units(HesgaConfig(n_e=100)) == 3000
    assert hesga_cost(10, 0, 100, 0.1, 0.1) == 1000
    assert hesga_cost(4, 5, 10, 0.2, 0.25) == 130
    assert exact_epoch_units(HesgaConfig(n_pop=4, maxgen=5, p_f=0.2, r_c=0.25, n_e=10)) == 130
    assert exact_epoch_units(HesgaConfig(n_e=100)) == 3000


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(1, 20), st.sampled_from([10, 20, 50, 100]))
def test_closed_form_matches_exact_when_rounding_free(n_pop, maxgen, n_e):
    cfg = HesgaConfig(n_pop=n_pop, maxgen=maxgen, n_e=n_e, p_f=0.1, r_c=0.1)
    exact = exact_epoch_units(cfg)
    if n_pop % 10 == 0 and n_e % 10 == 0 and n_e >= 20:
        assert exact == cost_in_epoch_units(cfg)
    else:
        assert exact >= cost_in_epoch_units(cfg) - 1e-9


def test_seed_determinism_across_workers():
    space = table1_space()
    cfg = HesgaConfig(n_pop=6, maxgen=3, n_e=6, master_seed=42)
    obj = MlpRegressionObjective()
    serial = run(cfg, space, obj, workers=1)
    threaded = run(cfg, space, obj, workers=4)
    assert serial.genome == threaded.genome
    assert serial.score == threaded.score
    assert [(r.best_rmse, r.promoted) for r in serial.history] == [
        (r.best_rmse, r.promoted) for r in threaded.history
    ]
    other = run(HesgaConfig(n_pop=6, maxgen=3, n_e=6, master_seed=43), space, obj)
    assert [r.promoted for r in other.history] != [r.promoted for r in serial.history]


def test_separable_one_bit_space_reaches_oracle():
    # without multi-bit genes there are no Hamming cliffs, so the optimum is always reachable
    space = SearchSpace(tuple(HyperparamDef(f"g{i}", 1, 1) for i in range(6)))
    obj = SyntheticCurveObjective.bowl(space)
    best = exhaustive_oracle(space, obj, 100).best.genome
    hits = sum(run(HesgaConfig(n_pop=8, maxgen=30, master_seed=s), space, obj).genome == best for s in range(100))
    assert hits >= 95
