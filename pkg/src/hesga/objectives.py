"""Desk-scale objectives that produce per-epoch validation RMSE curves.

* :class:`SyntheticCurveObjective` maps an assignment onto an exponential
  learning curve ``a + b * exp(-c * t)`` with optional per-epoch noise. It is
  cheap and has an analytic optimum.
* :class:`MlpRegressionObjective` actually trains a two-hidden-layer network
  with mini-batch gradient descent on a bundled regression problem.
* :func:`exhaustive_oracle` fully evaluates every genome of a small space.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .evaluation import EvalBudget, EvaluationError, safe_full_evaluate
from .seeding import derive_seed
from .space import (
    DEFAULT_ENUMERATION_LIMIT,
    Genome,
    SearchSpace,
    decode_genome,
    enumerate_space,
    check_enumerable,
    normalized_position,
)

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def epoch_noise(seed: int, epochs: int) -> np.ndarray:
    """Standard normal draw for each epoch ``1..epochs``, a pure function of ``(seed, t)``."""
    t = np.arange(1, epochs + 1, dtype=np.uint64)
    key = _splitmix64(np.full(epochs, np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    with np.errstate(over="ignore"):
        base = key ^ (t * np.uint64(0xD1B54A32D192ED03))
    r1 = _splitmix64(base)
    r2 = _splitmix64(r1 ^ np.uint64(0x8CB92BA72F3D8DD7))
    # 53-bit uniforms in (0, 1]
    u1 = ((r1 >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0**53
    u2 = (r2 >> np.uint64(11)).astype(np.float64) / 2.0**53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def synthetic_curve(
    a: float, b: float, c: float, epochs: int, noise_sigma: float = 0.0, seed: int = 0
) -> np.ndarray:
    """``F(t) = a + b * exp(-c * t) + noise_t`` for ``t = 1..epochs``, clipped at zero."""
    t = np.arange(1, epochs + 1, dtype=float)
    f = a + b * np.exp(-c * t)
    if noise_sigma > 0:
        f = f + noise_sigma * epoch_noise(seed, epochs)
    return np.maximum(f, 0.0)


CurveParams = tuple[float, float, float]


class SyntheticCurveObjective:
    """Exponential learning curves whose parameters are a function of the assignment.

    ``params`` maps a decoded assignment onto ``(asymptote, gap, decay)``.
    """

    def __init__(
        self,
        params: Callable[[Mapping[str, float]], CurveParams],
        noise_sigma: float = 0.0,
        description: dict | None = None,
    ):
        if noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
        self.params = params
        self.noise_sigma = noise_sigma
        self.description = description or {}

    def curve(self, assignment: Mapping[str, float], epochs: int, seed: int) -> np.ndarray:
        a, b, c = self.params(assignment)
        if a < 0 or b < 0 or c <= 0:
            raise ValueError(f"invalid curve parameters a={a}, b={b}, c={c}")
        return synthetic_curve(a, b, c, epochs, self.noise_sigma, seed)

    @classmethod
    def bowl(
        cls,
        space: SearchSpace,
        targets: Mapping[str, float] | None = None,
        weights: Mapping[str, float] | None = None,
        asymptote: float = 0.1,
        gap: float = 0.5,
        gap_gain: float = 1.0,
        decay: float = 0.3,
        noise_sigma: float = 0.0,
    ) -> SyntheticCurveObjective:
        """Quadratic bowl over normalised grid positions.

        With ``q = sum_i w_i (u_i - target_i)^2`` the asymptote is
        ``asymptote + q`` and the initial gap ``gap + gap_gain * exp(-q)``, so
        assignments near the target both end lower and improve faster early on.
        """
        names = space.names
        targets = dict(targets or {n: 0.37 for n in names})
        weights = dict(weights or {n: 1.0 + 0.37 * i for i, n in enumerate(names)})
        unknown = (set(targets) | set(weights)) - set(names)
        if unknown:
            raise ValueError(f"bowl refers to unknown dimensions {sorted(unknown)}")

        def params(assignment):
            u = normalized_position(assignment, space)
            q = sum(weights.get(n, 1.0) * (u[n] - targets.get(n, 0.5)) ** 2 for n in names)
            return asymptote + q, gap + gap_gain * math.exp(-q), decay

        description = {
            "type": "synthetic_curve",
            "targets": targets,
            "weights": weights,
            "asymptote": asymptote,
            "gap": gap,
            "gap_gain": gap_gain,
            "decay": decay,
            "noise_sigma": noise_sigma,
        }
        return cls(params, noise_sigma, description)


@dataclass(frozen=True)
class RegressionDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_valid: np.ndarray
    y_valid: np.ndarray

    @property
    def n_train(self) -> int:
        return len(self.x_train)


def generate_regression_dataset(
    n_train: int = 256,
    n_valid: int = 64,
    d: int = 3,
    noise: float = 0.3,
    dataset_seed: int = 7,
    degree: int = 1,
    scale: float = 3.0,
    quad_scale: float = 0.7,
) -> RegressionDataset:
    """Polynomial ground truth on ``U(-1, 1)^d`` inputs plus Gaussian label noise.

    ``degree=1`` (the default) gives a linear target; ``degree=2`` adds all
    pairwise products weighted by ``quad_scale``. Points are drawn once and then split, so the two splits are
    disjoint with probability one.
    """
    if n_train < 1 or n_valid < 1 or d < 1:
        raise ValueError("n_train, n_valid and d must all be >= 1")
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    rng = np.random.default_rng(dataset_seed)
    w = rng.normal(size=d)
    quad = np.triu(rng.normal(scale=quad_scale, size=(d, d))) if degree == 2 else np.zeros((d, d))
    x = rng.uniform(-1.0, 1.0, size=(n_train + n_valid, d))
    y = x @ w + np.einsum("ni,ij,nj->n", x, quad, x)
    y = scale * y + noise * rng.normal(size=len(x))
    y = y[:, None]
    return RegressionDataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:])


DEFAULT_MLP_MAPPING = {
    "batch_size": "batch_size",
    "hidden1": "n_filters",
    "learning_rate": "learning_rate",
    "hidden2": "n_dense",
}


def _rmse(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - y) ** 2)))


class MlpRegressionObjective:
    """Mini-batch SGD on a ``d -> h1 -> h2 -> 1`` tanh network, one validation RMSE per epoch.

    ``mapping`` names the assignment dimension that drives each of batch size,
    first and second hidden width, and learning rate. ``lr_scale`` and
    ``width_scale`` multiply the decoded values before use; the default width
    scale of 1/8 keeps a 50-epoch run in the tens of milliseconds. The output
    layer starts near zero (``output_init``) so that the first-epoch RMSE
    reflects training speed rather than the luck of the initial weights.
    """

    def __init__(
        self,
        dataset: RegressionDataset | None = None,
        mapping: Mapping[str, str] | None = None,
        lr_scale: float = 1.0,
        width_scale: float = 0.125,
        output_init: float = 0.1,
    ):
        self.output_init = output_init
        self.dataset = dataset if dataset is not None else generate_regression_dataset()
        self.mapping = dict(mapping or DEFAULT_MLP_MAPPING)
        missing = set(DEFAULT_MLP_MAPPING) - set(self.mapping)
        if missing:
            raise ValueError(f"mapping lacks roles {sorted(missing)}")
        self.lr_scale = lr_scale
        self.width_scale = width_scale

    def hyperparameters(self, assignment: Mapping[str, float]) -> tuple[int, int, int, float]:
        m = self.mapping
        batch = int(round(assignment[m["batch_size"]]))
        h1 = max(1, int(round(assignment[m["hidden1"]] * self.width_scale)))
        h2 = max(1, int(round(assignment[m["hidden2"]] * self.width_scale)))
        lr = float(assignment[m["learning_rate"]]) * self.lr_scale
        if batch < 1 or lr <= 0:
            raise ValueError(f"batch size and learning rate must be positive, got {batch}, {lr}")
        if batch > self.dataset.n_train:
            raise ValueError(f"batch size {batch} exceeds {self.dataset.n_train} training points")
        return batch, h1, h2, lr

    def curve(self, assignment: Mapping[str, float], epochs: int, seed: int) -> np.ndarray:
        batch, h1, h2, lr = self.hyperparameters(assignment)
        ds = self.dataset
        d = ds.x_train.shape[1]
        rng = np.random.default_rng(seed)
        w1 = rng.normal(scale=1.0 / math.sqrt(d), size=(d, h1))
        b1 = np.zeros(h1)
        w2 = rng.normal(scale=1.0 / math.sqrt(h1), size=(h1, h2))
        b2 = np.zeros(h2)
        w3 = rng.normal(scale=self.output_init / math.sqrt(h2), size=(h2, 1))
        b3 = np.zeros(1)

        out = np.empty(epochs)
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(epochs):
                perm = rng.permutation(ds.n_train)
                for start in range(0, ds.n_train, batch):
                    idx = perm[start : start + batch]
                    x, y = ds.x_train[idx], ds.y_train[idx]
                    z1 = np.tanh(x @ w1 + b1)
                    z2 = np.tanh(z1 @ w2 + b2)
                    pred = z2 @ w3 + b3
                    g = 2.0 * (pred - y) / len(idx)
                    gw3 = z2.T @ g
                    gb3 = g.sum(axis=0)
                    g2 = (g @ w3.T) * (1.0 - z2**2)
                    gw2 = z1.T @ g2
                    gb2 = g2.sum(axis=0)
                    g1 = (g2 @ w2.T) * (1.0 - z1**2)
                    gw1 = x.T @ g1
                    gb1 = g1.sum(axis=0)
                    w3 -= lr * gw3
                    b3 -= lr * gb3
                    w2 -= lr * gw2
                    b2 -= lr * gb2
                    w1 -= lr * gw1
                    b1 -= lr * gb1
                pv = np.tanh(np.tanh(ds.x_valid @ w1 + b1) @ w2 + b2) @ w3 + b3
                out[epoch] = _rmse(pv, ds.y_valid)
                if not math.isfinite(out[epoch]):
                    raise EvaluationError(
                        f"training diverged at epoch {epoch + 1} (lr={lr}, batch={batch})",
                        assignment,
                    )
        return out


def genome_seed(genome: Genome) -> int:
    """Oracle seed policy: one fixed seed per genome."""
    return derive_seed("oracle", genome.bits)


@dataclass
class OracleRow:
    genome: Genome
    assignment: dict
    rmse: float


@dataclass
class OracleTable:
    space: SearchSpace
    rows: list[OracleRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def best(self) -> OracleRow:
        return self.rows[0]

    def rank_of(self, genome: Genome) -> int:
        """0-based position of ``genome`` in the sorted table."""
        for i, row in enumerate(self.rows):
            if row.genome == genome:
                return i
        raise KeyError(genome.bits)

    def rmse_of(self, genome: Genome) -> float:
        return self.rows[self.rank_of(genome)].rmse

    def quantile(self, q: float) -> float:
        """RMSE at the ``q`` quantile of the table (lower quantile convention)."""
        k = max(0, math.ceil(q * len(self.rows)) - 1)
        return self.rows[k].rmse

    def header(self) -> list[str]:
        return ["genome_bits", *self.space.names, "rmse"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([r.genome.bits, *(repr(r.assignment[n]) for n in self.space.names), repr(r.rmse)])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, space: SearchSpace) -> OracleTable:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        expected = ["genome_bits", *space.names, "rmse"]
        if header != expected:
            raise ValueError(f"unexpected oracle header {header}, expected {expected}")
        rows = []
        for rec in reader:
            g = Genome(rec[0])
            rows.append(OracleRow(g, decode_genome(g, space), float(rec[-1])))
        return cls(space, rows)


def exhaustive_oracle(
    space: SearchSpace,
    obj,
    n_e: int,
    seed_policy: Callable[[Genome], int] = genome_seed,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    budget: EvalBudget | None = None,
) -> OracleTable:
    """Fully evaluate every genome and sort by ``(rmse, genome value)``."""
    check_enumerable(space, limit)
    budget = budget if budget is not None else EvalBudget()
    rows = []
    for g in enumerate_space(space, limit):
        a = decode_genome(g, space)
        rows.append(OracleRow(g, a, safe_full_evaluate(obj, a, n_e, seed_policy(g), budget).rmse))
    rows.sort(key=lambda r: (r.rmse, int(r.genome)))
    return OracleTable(space, rows)


def objective_from_config(spec: Mapping, space: SearchSpace):
    """Build an objective from a configuration mapping with a ``type`` key."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "synthetic_curve":
        return SyntheticCurveObjective.bowl(space, **spec)
    if kind == "mlp_regression":
        ds_keys = ("n_train", "n_valid", "d", "noise", "dataset_seed", "degree", "scale", "quad_scale")
        ds = generate_regression_dataset(**{k: spec.pop(k) for k in ds_keys if k in spec})
        return MlpRegressionObjective(ds, **spec)
    raise ValueError(f"unknown objective type {kind!r}")


def check_prefix(obj, assignment: Mapping[str, float], short: int, long: int, seed: int) -> bool:
    a = obj.curve(assignment, short, seed)
    b = obj.curve(assignment, long, seed)
    return bool(np.array_equal(a, b[:short]))

