"""Genetic search with a hierarchical (fast screen, then full) evaluation strategy.

Each generation the whole offspring population receives a cheap fast
evaluation; only the best ``ceil(n_pop * r_c)`` by early improvement are
trained to completion and offered to the elite archive. Parent A always comes
from the archive, parent B from the current population.
"""

from __future__ import annotations

import bisect
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Collection, Iterable, Literal, Sequence, TypeVar

import numpy as np

from .evaluation import (
    EvalBudget,
    FastScore,
    FullScore,
    Objective,
    fast_epochs,
    safe_fast_evaluate,
    safe_full_evaluate,
)
from .seeding import derive_seed, make_rng
from .space import Genome, SearchSpace, decode_genome, random_genome

T = TypeVar("T")
R = TypeVar("R")


class ConfigError(ValueError):
    pass


def proportion_count(n: int, r: float) -> int:
    """``ceil(n * r)`` that does not round 30 * 0.1 up to 4."""
    return max(1, math.ceil(n * r - 1e-9))


@dataclass(frozen=True)
class HesgaConfig:
    n_pop: int = 10
    maxgen: int = 10
    n_e: int = 100
    r_e: float = 0.1
    r_c: float = 0.1
    p_c: float = 0.8
    p_m: float = 0.2
    p_f: float = 0.1
    master_seed: int = 0
    k_repeats: int = 1

    def __post_init__(self) -> None:
        errors = []
        if int(self.n_pop) != self.n_pop or self.n_pop < 2:
            errors.append(f"n_pop must be an integer >= 2, got {self.n_pop}")
        if int(self.maxgen) != self.maxgen or self.maxgen < 1:
            errors.append(f"maxgen must be an integer >= 1, got {self.maxgen}")
        if int(self.n_e) != self.n_e or self.n_e < 2:
            errors.append(f"n_e must be an integer >= 2, got {self.n_e}")
        for name in ("r_e", "r_c"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                errors.append(f"{name} must lie in (0, 1], got {v}")
        for name in ("p_c", "p_m"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                errors.append(f"{name} must lie in [0, 1], got {v}")
        if not 0 < self.p_f <= 0.5:
            errors.append(f"p_f must lie in (0, 0.5], got {self.p_f}")
        if int(self.k_repeats) != self.k_repeats or self.k_repeats < 1:
            errors.append(f"k_repeats must be an integer >= 1, got {self.k_repeats}")
        if errors:
            raise ConfigError("; ".join(errors))

    @property
    def n_elite(self) -> int:
        return proportion_count(self.n_pop, self.r_e)

    @property
    def n_candidates(self) -> int:
        return proportion_count(self.n_pop, self.r_c)

    @property
    def t_fast(self) -> int:
        return fast_epochs(self.n_e, self.p_f)


@dataclass
class ArchiveEntry:
    genome: Genome
    score: FullScore
    order: int


class EliteArchive:
    """Capacity-bounded elite set kept sorted by ascending full-evaluation RMSE.

    Equal scores keep insertion order. A genome can be stored only once.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"archive capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries: list[ArchiveEntry] = []
        self._members: set[str] = set()
        self._counter = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, genome: Genome) -> bool:
        return genome.bits in self._members

    @property
    def best(self) -> ArchiveEntry:
        return self.entries[0]

    @property
    def worst(self) -> ArchiveEntry:
        return self.entries[-1]

    @property
    def rmses(self) -> list[float]:
        return [e.score.rmse for e in self.entries]

    def update(self, genome: Genome, score: FullScore) -> bool:
        if not isinstance(score, FullScore):
            raise TypeError("only full-evaluation scores may enter the elite archive")
        if genome.bits in self._members:
            return False
        if len(self.entries) >= self.capacity:
            if not score.rmse < self.worst.score.rmse:
                return False
            dropped = self.entries.pop()
            self._members.discard(dropped.genome.bits)
        pos = bisect.bisect_right(self.rmses, score.rmse)
        self.entries.insert(pos, ArchiveEntry(genome, score, self._counter))
        self._counter += 1
        self._members.add(genome.bits)
        return True


def update_elite_archive(archive: EliteArchive, genome: Genome, score: FullScore) -> bool:
    return archive.update(genome, score)


def single_point_crossover(a: Genome, b: Genome, p: int) -> tuple[Genome, Genome]:
    """Swap tails after the first ``p`` bits."""
    if len(a) != len(b):
        raise ValueError(f"parents differ in length: {len(a)} vs {len(b)}")
    if not 1 <= p <= len(a) - 1:
        raise ValueError(f"cut position must lie in [1, {len(a) - 1}], got {p}")
    x, y = a.bits, b.bits
    return Genome(x[:p] + y[p:]), Genome(y[:p] + x[p:])


def mutate(g: Genome, p: int) -> Genome:
    """Flip bit ``p`` (1-indexed)."""
    if not 1 <= p <= len(g):
        raise ValueError(f"mutation position must lie in [1, {len(g)}], got {p}")
    bits = g.bits
    flipped = "1" if bits[p - 1] == "0" else "0"
    return Genome(bits[: p - 1] + flipped + bits[p:])


def rank_weights(scores: Sequence[float], better: Literal["min", "max"]) -> np.ndarray:
    """Linear rank weights ``n - rank + 1`` with rank 1 the best; ties share the mean rank."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("cannot select from an empty list")
    if better not in ("min", "max"):
        raise ValueError(f"better must be 'min' or 'max', got {better!r}")
    key = s if better == "min" else -s
    order = np.argsort(key, kind="stable")
    ranks = np.empty(s.size)
    sorted_key = key[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_key[j + 1] == sorted_key[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return s.size - ranks + 1


def roulette_select(
    scores: Sequence[float], better: Literal["min", "max"], rng: np.random.Generator
) -> int:
    w = rank_weights(scores, better)
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(w) - 1)


@dataclass
class Individual:
    genome: Genome
    score: FullScore | FastScore


@dataclass
class GenerationRecord:
    gen: int
    best_rmse: float
    ev_fast: int
    ev_full: int
    epoch_units: int
    promoted: list[Genome] = field(default_factory=list)


@dataclass
class RunState:
    gen: int
    population: list[Individual]
    archive: EliteArchive
    budget: EvalBudget
    rng: np.random.Generator
    history: list[GenerationRecord] = field(default_factory=list)
    evaluated: set[str] = field(default_factory=set)


@dataclass
class RunResult:
    genome: Genome
    assignment: dict
    score: FullScore
    history: list[GenerationRecord]
    budget: EvalBudget
    archive: EliteArchive


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Order-preserving map; ``workers > 1`` dispatches to a thread pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def eval_seed(master_seed: int, gen: int, index: int, fidelity: str) -> int:
    return derive_seed(master_seed, gen, index, fidelity)


def selection_rng(master_seed: int) -> np.random.Generator:
    return make_rng(master_seed, "selection")


def full_evaluate_many(
    genomes: Sequence[Genome],
    seeds: Sequence[int],
    cfg: HesgaConfig,
    space: SearchSpace,
    obj: Objective,
    budget: EvalBudget,
    workers: int = 1,
) -> list[FullScore]:
    def one(args):
        g, seed = args
        return safe_full_evaluate(obj, decode_genome(g, space), cfg.n_e, seed, budget, cfg.k_repeats)

    return parallel_map(one, list(zip(genomes, seeds)), workers)


def fast_evaluate_many(
    genomes: Sequence[Genome],
    seeds: Sequence[int],
    cfg: HesgaConfig,
    space: SearchSpace,
    obj: Objective,
    budget: EvalBudget,
    workers: int = 1,
) -> list[FastScore]:
    def one(args):
        g, seed = args
        return safe_fast_evaluate(obj, decode_genome(g, space), cfg.n_e, cfg.p_f, seed, budget)

    return parallel_map(one, list(zip(genomes, seeds)), workers)


def initialize(
    cfg: HesgaConfig, space: SearchSpace, obj: Objective, workers: int = 1
) -> RunState:
    rng = selection_rng(cfg.master_seed)
    genomes = [random_genome(space, rng) for _ in range(cfg.n_pop)]
    budget = EvalBudget()
    seeds = [eval_seed(cfg.master_seed, 0, i, "full") for i in range(cfg.n_pop)]
    scores = full_evaluate_many(genomes, seeds, cfg, space, obj, budget, workers)
    population = [Individual(g, s) for g, s in zip(genomes, scores)]
    archive = EliteArchive(cfg.n_elite)
    for ind in sorted(population, key=lambda i: (i.score.rmse, int(i.genome))):
        archive.update(ind.genome, ind.score)
    return RunState(0, population, archive, budget, rng, evaluated={g.bits for g in genomes})


def _population_key(population: Sequence[Individual]) -> tuple[list[float], str]:
    if all(isinstance(i.score, FullScore) for i in population):
        return [i.score.rmse for i in population], "min"
    if all(isinstance(i.score, FastScore) for i in population):
        return [i.score.delta for i in population], "max"
    raise TypeError("population mixes full and fast scores")


def produce_offspring(
    state: RunState, cfg: HesgaConfig, rng: np.random.Generator | None = None
) -> list[Genome]:
    """Mate archive parents with population parents until ``n_pop`` children exist."""
    rng = state.rng if rng is None else rng
    if not state.archive.entries:
        raise ValueError("elite archive is empty")
    elite_scores = state.archive.rmses
    pop_scores, pop_better = _population_key(state.population)
    length = len(state.archive.best.genome)
    children: list[Genome] = []
    for _ in range(math.ceil(cfg.n_pop / 2)):
        a = state.archive.entries[roulette_select(elite_scores, "min", rng)].genome
        b = state.population[roulette_select(pop_scores, pop_better, rng)].genome
        if rng.random() < cfg.p_c and length >= 2:
            c1, c2 = single_point_crossover(a, b, int(rng.integers(1, length)))
        else:
            c1, c2 = a, b
        for child in (c1, c2):
            if rng.random() < cfg.p_m:
                child = mutate(child, int(rng.integers(1, length + 1)))
            children.append(child)
    return children[: cfg.n_pop]


def screen_candidates(
    offspring: Sequence[Genome],
    scores: Sequence[FastScore],
    n: int,
    evaluated: Collection[str] = (),
) -> list[int]:
    """Indices of the ``n`` largest early improvements, ties by genome value.

    Genomes already fully evaluated, and repeats within the offspring, are
    passed over while fresh ones remain; the group is then topped up in the
    same order so it always has ``n`` members.
    """
    order = sorted(range(len(offspring)), key=lambda i: (-scores[i].delta, int(offspring[i])))
    chosen: list[int] = []
    seen = set(evaluated)
    for i in order:
        if offspring[i].bits not in seen:
            chosen.append(i)
            seen.add(offspring[i].bits)
        if len(chosen) == n:
            return chosen
    rest = [i for i in order if i not in chosen]
    return chosen + rest[: n - len(chosen)]


def step_generation(
    state: RunState,
    cfg: HesgaConfig,
    space: SearchSpace,
    obj: Objective,
    workers: int = 1,
) -> GenerationRecord:
    if state.gen >= cfg.maxgen:
        raise ValueError(f"generation {state.gen} already reached maxgen={cfg.maxgen}")
    gen = state.gen + 1
    offspring = produce_offspring(state, cfg)
    fast_seeds = [eval_seed(cfg.master_seed, gen, i, "fast") for i in range(cfg.n_pop)]
    fast = fast_evaluate_many(offspring, fast_seeds, cfg, space, obj, state.budget, workers)

    chosen = screen_candidates(offspring, fast, cfg.n_candidates, state.evaluated)
    promoted = [offspring[i] for i in chosen]
    state.evaluated.update(g.bits for g in promoted)
    full_seeds = [eval_seed(cfg.master_seed, gen, i, "full") for i in chosen]
    full = full_evaluate_many(promoted, full_seeds, cfg, space, obj, state.budget, workers)
    for g, s in zip(promoted, full):
        state.archive.update(g, s)

    state.population = [Individual(g, s) for g, s in zip(offspring, fast)]
    state.gen = gen
    snap = state.budget.snapshot()
    record = GenerationRecord(gen, state.archive.best.score.rmse, promoted=promoted, **snap)
    state.history.append(record)
    return record


def generation_cost(cfg: HesgaConfig) -> int:
    return cfg.n_pop * cfg.t_fast + cfg.n_candidates * cfg.n_e * cfg.k_repeats


def run(
    cfg: HesgaConfig,
    space: SearchSpace,
    obj: Objective,
    workers: int = 1,
    epoch_cap: int | None = None,
) -> RunResult:
    """Initialise and evolve for ``maxgen`` generations.

    With ``epoch_cap`` the loop stops before any generation that would push
    the epoch count over the cap.
    """
    state = initialize(cfg, space, obj, workers)
    while state.gen < cfg.maxgen:
        if epoch_cap is not None and state.budget.epoch_units + generation_cost(cfg) > epoch_cap:
            break
        step_generation(state, cfg, space, obj, workers)
    best = state.archive.best
    return RunResult(
        best.genome,
        decode_genome(best.genome, space),
        best.score,
        state.history,
        state.budget,
        state.archive,
    )


def hesga_cost(
    n_pop: int, maxgen: int, n_e: int, p_f: float, r_c: float, k_repeats: int = 1
) -> float:
    """Closed-form training cost ``[(p_f + r_c) * maxgen + 1] * n_pop * n_e`` in epochs.

    Repeated full evaluations scale the ``r_c`` and initialisation terms by
    ``k_repeats``. Decimal fractions are summed exactly.
    """
    k = int(k_repeats)
    frac = (Fraction(str(p_f)) + Fraction(str(r_c)) * k) * maxgen + k
    return float(frac * n_pop * n_e)


def cost_in_epoch_units(cfg: HesgaConfig) -> float:
    return hesga_cost(cfg.n_pop, cfg.maxgen, cfg.n_e, cfg.p_f, cfg.r_c, cfg.k_repeats)


def exact_epoch_units(cfg: HesgaConfig) -> int:
    """Epochs a full run actually trains, with rounding of ``t`` and the candidate count."""
    return cfg.n_pop * cfg.n_e * cfg.k_repeats + cfg.maxgen * generation_cost(cfg)
