"""Objective contract and the two evaluation fidelities.

A full evaluation trains for ``n_e`` epochs and scores the last validation
RMSE. A fast evaluation trains for ``t`` epochs only and scores the early
improvement ``F(1) - F(t)``; larger is better.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .seeding import derive_seed

FULL_SENTINEL = 1e12
FAST_SENTINEL = -1e12


class EvaluationError(RuntimeError):
    """Objective produced a non-finite loss; carries the offending assignment."""

    def __init__(self, message: str, assignment: Mapping[str, float] | None = None):
        super().__init__(message)
        self.assignment = dict(assignment) if assignment is not None else None


class FidelityError(ValueError):
    pass


class Objective(Protocol):
    """Anything that turns a decoded assignment into a per-epoch RMSE curve.

    Implementations must be deterministic in ``(assignment, epochs, seed)`` and
    the curve for fewer epochs must be a prefix of the curve for more.
    """

    def curve(self, assignment: Mapping[str, float], epochs: int, seed: int) -> np.ndarray: ...


@dataclass(frozen=True)
class FullScore:
    rmse: float
    failed: bool = False


@dataclass(frozen=True)
class FastScore:
    delta: float
    t_used: int
    failed: bool = False


@dataclass
class EvalBudget:
    ev_fast: int = 0
    ev_full: int = 0
    epoch_units: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def charge_full(self, epochs: int, count: int = 1) -> None:
        with self._lock:
            self.ev_full += count
            self.epoch_units += epochs * count

    def charge_fast(self, epochs: int) -> None:
        with self._lock:
            self.ev_fast += 1
            self.epoch_units += epochs

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {"ev_fast": self.ev_fast, "ev_full": self.ev_full, "epoch_units": self.epoch_units}


def check_curve(values: Sequence[float], assignment: Mapping[str, float] | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise EvaluationError("RMSE curve must be a non-empty 1-d sequence", assignment)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("non-finite RMSE in training curve", assignment)
    if np.any(arr < 0):
        raise EvaluationError("negative RMSE in training curve", assignment)
    return arr


def fast_epochs(n_e: int, p_f: float) -> int:
    """Epochs used by a fast evaluation: ``round_half_up(p_f * n_e)`` floored at 2."""
    if not 0 < p_f <= 0.5:
        raise FidelityError(f"p_f must lie in (0, 0.5], got {p_f}")
    if n_e < 2:
        raise FidelityError(f"fast evaluation needs n_e >= 2, got {n_e}")
    # 1e-9 absorbs products like 0.15 * 10 landing just under a half.
    return max(2, math.floor(p_f * n_e + 0.5 + 1e-9))


def delta_fitness(curve: Sequence[float], t: int) -> float:
    """``F(1) - F(t)`` with 1-indexed epochs."""
    if not 2 <= t <= len(curve):
        raise FidelityError(f"t must lie in [2, {len(curve)}], got {t}")
    return float(curve[0] - curve[t - 1])


def _train(obj: Objective, a: Mapping[str, float], epochs: int, seed: int) -> np.ndarray:
    try:
        values = obj.curve(a, epochs, seed)
    except EvaluationError as exc:
        if exc.assignment is None:
            exc.assignment = dict(a)
        raise
    arr = check_curve(values, a)
    if arr.size != epochs:
        raise EvaluationError(f"objective returned {arr.size} epochs, expected {epochs}", a)
    return arr


def full_evaluate(
    obj: Objective,
    a: Mapping[str, float],
    n_e: int,
    seed: int,
    budget: EvalBudget,
    repeats: int = 1,
) -> FullScore:
    """Train ``repeats`` times for ``n_e`` epochs and average the final RMSE.

    Each repeat counts as one full evaluation. The budget is charged before
    training so a divergent run still pays for its epochs.
    """
    if n_e < 1:
        raise FidelityError(f"n_e must be >= 1, got {n_e}")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    budget.charge_full(n_e, repeats)
    if repeats == 1:
        return FullScore(float(_train(obj, a, n_e, seed)[-1]))
    finals = [_train(obj, a, n_e, _repeat_seed(seed, r))[-1] for r in range(repeats)]
    return FullScore(float(np.mean(finals)))


def fast_evaluate(
    obj: Objective,
    a: Mapping[str, float],
    n_e: int,
    p_f: float,
    seed: int,
    budget: EvalBudget,
) -> FastScore:
    t = fast_epochs(n_e, p_f)
    budget.charge_fast(t)
    return FastScore(delta_fitness(_train(obj, a, t, seed), t), t)


def safe_full_evaluate(*args, **kwargs) -> FullScore:
    """:func:`full_evaluate` mapping divergence onto the worst score."""
    try:
        return full_evaluate(*args, **kwargs)
    except EvaluationError:
        return FullScore(FULL_SENTINEL, failed=True)


def safe_fast_evaluate(obj, a, n_e, p_f, seed, budget) -> FastScore:
    t = fast_epochs(n_e, p_f)
    try:
        return fast_evaluate(obj, a, n_e, p_f, seed, budget)
    except EvaluationError:
        return FastScore(FAST_SENTINEL, t, failed=True)


def _repeat_seed(seed: int, r: int) -> int:
    return derive_seed(seed, "repeat", r)
