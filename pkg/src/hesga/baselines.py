"""Comparators sharing the evaluation contract: random search, grid search, plain GA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import (
    ConfigError,
    EliteArchive,
    GenerationRecord,
    HesgaConfig,
    Individual,
    RunResult,
    RunState,
    eval_seed,
    full_evaluate_many,
    produce_offspring,
    selection_rng,
)
from .evaluation import EvalBudget, FullScore, safe_full_evaluate
from .seeding import derive_seed, make_rng
from .space import (
    DEFAULT_ENUMERATION_LIMIT,
    EnumerationTooLarge,
    Genome,
    SearchSpace,
    decode_genome,
    random_genome,
)


@dataclass
class BaselineResult:
    genome: Genome
    assignment: dict
    score: FullScore
    history: list[GenerationRecord] = field(default_factory=list)
    budget: EvalBudget = field(default_factory=EvalBudget)


def _better(a: tuple[Genome, FullScore], b: tuple[Genome, FullScore] | None) -> bool:
    if b is None:
        return True
    return (a[1].rmse, int(a[0])) < (b[1].rmse, int(b[0]))


def _sweep(
    genomes: Sequence[Genome],
    space: SearchSpace,
    obj,
    n_e: int,
    seeds: Sequence[int],
    budget: EvalBudget,
) -> BaselineResult:
    best = None
    history = []
    for i, (g, seed) in enumerate(zip(genomes, seeds), start=1):
        score = safe_full_evaluate(obj, decode_genome(g, space), n_e, seed, budget)
        if _better((g, score), best):
            best = (g, score)
        history.append(GenerationRecord(i, best[1].rmse, promoted=[g], **budget.snapshot()))
    g, score = best
    return BaselineResult(g, decode_genome(g, space), score, history, budget)


def random_search(
    space: SearchSpace,
    obj,
    n_e: int,
    budget: int | None = None,
    seed: int = 0,
    epoch_cap: int | None = None,
) -> BaselineResult:
    """Fully evaluate i.i.d. uniform genomes; repeats are allowed.

    ``budget`` counts full evaluations. If only ``epoch_cap`` is given the
    budget is the largest number of evaluations that fits under it.
    """
    if budget is None:
        if epoch_cap is None:
            raise ConfigError("random search needs a budget or an epoch cap")
        budget = epoch_cap // n_e
    elif epoch_cap is not None:
        budget = min(budget, epoch_cap // n_e)
    if budget < 1:
        raise ConfigError(f"random search budget must be >= 1, got {budget}")
    rng = make_rng(seed, "random")
    genomes = [random_genome(space, rng) for _ in range(budget)]
    seeds = [derive_seed(seed, "random", i, "full") for i in range(budget)]
    return _sweep(genomes, space, obj, n_e, seeds, EvalBudget())


def grid_points(space: SearchSpace, stride_bits: Mapping[str, int] | Sequence[int]) -> list[Genome]:
    """Genomes whose lowest ``stride_bits[i]`` bits of gene ``i`` are all zero."""
    if isinstance(stride_bits, Mapping):
        unknown = set(stride_bits) - set(space.names)
        if unknown:
            raise ConfigError(f"stride_bits names unknown dimensions {sorted(unknown)}")
        strides = [int(stride_bits.get(d.name, 0)) for d in space.dims]
    else:
        strides = [int(s) for s in stride_bits]
        if len(strides) != len(space.dims):
            raise ConfigError(f"need {len(space.dims)} strides, got {len(strides)}")
    for d, s in zip(space.dims, strides):
        if not 0 <= s <= d.bits:
            raise ConfigError(f"{d.name}: stride must lie in [0, {d.bits}], got {s}")
    per_dim = [
        [format(k << s, f"0{d.bits}b") for k in range(1 << (d.bits - s))]
        for d, s in zip(space.dims, strides)
    ]
    points = [""]
    for genes in per_dim:
        points = [p + g for p in points for g in genes]
    return [Genome(p) for p in points]


def grid_cardinality(space: SearchSpace, stride_bits: Mapping[str, int] | Sequence[int]) -> int:
    if isinstance(stride_bits, Mapping):
        strides = [int(stride_bits.get(d.name, 0)) for d in space.dims]
    else:
        strides = list(stride_bits)
    return math.prod(1 << (d.bits - s) for d, s in zip(space.dims, strides))


def grid_search(
    space: SearchSpace,
    obj,
    n_e: int,
    stride_bits: Mapping[str, int] | Sequence[int] | None = None,
    seed: int = 0,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
) -> BaselineResult:
    stride_bits = stride_bits if stride_bits is not None else {}
    n = grid_cardinality(space, stride_bits)
    if n > limit:
        raise EnumerationTooLarge(f"grid has {n} points, above the limit of {limit}")
    genomes = grid_points(space, stride_bits)
    seeds = [derive_seed(seed, "grid", g.bits) for g in genomes]
    return _sweep(genomes, space, obj, n_e, seeds, EvalBudget())


def traditional_ga(
    space: SearchSpace,
    obj,
    cfg: HesgaConfig,
    workers: int = 1,
    epoch_cap: int | None = None,
) -> RunResult:
    """Same operators and archive as HESGA, but every offspring gets a full evaluation.

    ``cfg.p_f`` and ``cfg.r_c`` are ignored.
    """
    rng = selection_rng(cfg.master_seed)
    budget = EvalBudget()
    genomes = [random_genome(space, rng) for _ in range(cfg.n_pop)]
    seeds = [eval_seed(cfg.master_seed, 0, i, "full") for i in range(cfg.n_pop)]
    scores = full_evaluate_many(genomes, seeds, cfg, space, obj, budget, workers)
    archive = EliteArchive(cfg.n_elite)
    population = [Individual(g, s) for g, s in zip(genomes, scores)]
    for ind in sorted(population, key=lambda i: (i.score.rmse, int(i.genome))):
        archive.update(ind.genome, ind.score)
    state = RunState(0, population, archive, budget, rng)

    gen_cost = cfg.n_pop * cfg.n_e * cfg.k_repeats
    while state.gen < cfg.maxgen:
        if epoch_cap is not None and budget.epoch_units + gen_cost > epoch_cap:
            break
        gen = state.gen + 1
        offspring = produce_offspring(state, cfg)
        seeds = [eval_seed(cfg.master_seed, gen, i, "full") for i in range(cfg.n_pop)]
        scores = full_evaluate_many(offspring, seeds, cfg, space, obj, budget, workers)
        order = sorted(range(cfg.n_pop), key=lambda i: (scores[i].rmse, int(offspring[i])))
        for i in order:
            archive.update(offspring[i], scores[i])
        state.population = [Individual(g, s) for g, s in zip(offspring, scores)]
        state.gen = gen
        state.history.append(
            GenerationRecord(gen, archive.best.score.rmse, promoted=list(offspring), **budget.snapshot())
        )
    best = archive.best
    return RunResult(
        best.genome, decode_genome(best.genome, space), best.score, state.history, budget, archive
    )


def traditional_ga_cost(cfg: HesgaConfig) -> int:
    return (cfg.maxgen + 1) * cfg.n_pop * cfg.n_e * cfg.k_repeats
