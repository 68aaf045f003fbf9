"""Binary-encoded hyperparameter search spaces.

Every dimension is a fixed-width unsigned gene. A gene with integer value
``k`` decodes to ``(k + 1) * step`` so the all-zeros gene maps to one step
rather than zero, which no hyperparameter here accepts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Mapping, Sequence

import numpy as np

DEFAULT_ENUMERATION_LIMIT = 2**20
GRID_RTOL = 1e-9


class EncodingError(ValueError):
    """Bit string does not fit the dimension or space it is decoded against."""


class GridError(ValueError):
    """Value does not lie on a dimension's grid."""


class EnumerationTooLarge(ValueError):
    """Space cardinality exceeds the enumeration limit."""


@dataclass(frozen=True)
class HyperparamDef:
    name: str
    bits: int
    step: float
    kind: Literal["integer", "real"] = "integer"

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("dimension name must be non-empty")
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"{self.name}: bits must be a positive integer, got {self.bits}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"{self.name}: step must be positive, got {self.step}")
        if self.kind not in ("integer", "real"):
            raise ValueError(f"{self.name}: kind must be 'integer' or 'real', got {self.kind!r}")

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def low(self) -> float:
        return self.step

    @property
    def high(self) -> float:
        return self.levels * self.step

    def value_of(self, index: int) -> float | int:
        v = (index + 1) * self.step
        if self.kind == "integer" and float(v).is_integer():
            return int(v)
        return v

    def index_of(self, value: float) -> int:
        """Grid index ``k`` such that ``value == (k + 1) * step``."""
        q = value / self.step - 1.0
        k = round(q)
        if abs(q - k) > GRID_RTOL * max(1.0, abs(value / self.step)) or not 0 <= k < self.levels:
            lo = min(max(math.floor(q), 0), self.levels - 1)
            hi = min(lo + 1, self.levels - 1)
            raise GridError(
                f"{self.name}: {value!r} is not on the grid "
                f"(nearest grid points {self.value_of(lo)!r} and {self.value_of(hi)!r})"
            )
        return int(k)


@dataclass(frozen=True)
class Genome:
    """Fixed-length bit string, most significant bit first within each gene."""

    bits: str

    def __post_init__(self) -> None:
        if not self.bits or set(self.bits) - {"0", "1"}:
            raise EncodingError(f"genome must be a non-empty string of 0/1, got {self.bits!r}")

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return self.bits

    def __int__(self) -> int:
        return int(self.bits, 2)

    @classmethod
    def from_int(cls, value: int, length: int) -> Genome:
        return cls(format(value, f"0{length}b"))

    @classmethod
    def from_array(cls, arr: Sequence[int]) -> Genome:
        return cls("".join("1" if b else "0" for b in arr))


Assignment = Mapping[str, float]


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[HyperparamDef, ...]
    total_bits: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise ValueError("search space needs at least one dimension")
        names = [d.name for d in self.dims]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"duplicate dimension names: {dupes}")
        object.__setattr__(self, "total_bits", sum(d.bits for d in self.dims))

    @classmethod
    def from_dicts(cls, dims: Sequence[Mapping]) -> SearchSpace:
        return cls(tuple(HyperparamDef(**dict(d)) for d in dims))

    def to_dicts(self) -> list[dict]:
        return [
            {"name": d.name, "bits": d.bits, "step": d.step, "kind": d.kind} for d in self.dims
        ]

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def cardinality(self) -> int:
        return 1 << self.total_bits

    def slices(self) -> Iterator[tuple[HyperparamDef, slice]]:
        start = 0
        for d in self.dims:
            yield d, slice(start, start + d.bits)
            start += d.bits

    def __getitem__(self, name: str) -> HyperparamDef:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)


def decode_gene(gene_bits: str, d: HyperparamDef) -> float | int:
    if len(gene_bits) != d.bits:
        raise EncodingError(f"{d.name}: expected {d.bits} bits, got {len(gene_bits)} ({gene_bits!r})")
    return d.value_of(int(gene_bits, 2))


def encode_value(value: float, d: HyperparamDef) -> str:
    return format(d.index_of(value), f"0{d.bits}b")


def decode_genome(g: Genome | str, space: SearchSpace) -> dict[str, float | int]:
    bits = g.bits if isinstance(g, Genome) else g
    if len(bits) != space.total_bits:
        raise EncodingError(f"genome has {len(bits)} bits, space expects {space.total_bits}")
    return {d.name: decode_gene(bits[s], d) for d, s in space.slices()}


def encode_assignment(values: Assignment, space: SearchSpace) -> Genome:
    missing = [n for n in space.names if n not in values]
    if missing:
        raise GridError(f"assignment is missing dimensions {missing}")
    return Genome("".join(encode_value(values[d.name], d) for d in space.dims))


def normalized_position(values: Assignment, space: SearchSpace) -> dict[str, float]:
    """Grid index of each dimension rescaled to [0, 1]."""
    out = {}
    for d in space.dims:
        k = d.index_of(values[d.name])
        out[d.name] = k / (d.levels - 1) if d.levels > 1 else 0.0
    return out


def random_genome(space: SearchSpace, rng: np.random.Generator) -> Genome:
    return Genome.from_array(rng.integers(0, 2, size=space.total_bits))


def enumerate_space(
    space: SearchSpace, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> Iterator[Genome]:
    """Yield every genome of ``space`` in ascending unsigned-integer order."""
    n = check_enumerable(space, limit)
    width = space.total_bits
    for i in range(n):
        yield Genome(format(i, f"0{width}b"))


def check_enumerable(space: SearchSpace, limit: int = DEFAULT_ENUMERATION_LIMIT) -> int:
    n = space.cardinality
    if n > limit:
        raise EnumerationTooLarge(
            f"space has 2^{space.total_bits} = {n} genomes, above the limit of {limit}"
        )
    return n


def count_space(space: SearchSpace, limit: int = DEFAULT_ENUMERATION_LIMIT) -> int:
    """Count genomes by walking the enumeration without materialising it."""
    return sum(1 for _ in enumerate_space(space, limit))


def table1_space() -> SearchSpace:
    """The 13-bit reference space: batch size, filters, learning rate and dense width."""
    return SearchSpace(
        (
            HyperparamDef("batch_size", 3, 32),
            HyperparamDef("n_filters", 3, 32),
            HyperparamDef("learning_rate", 4, 0.0001, "real"),
            HyperparamDef("n_dense", 3, 64),
        )
    )


def resolution_space(resolution: int) -> SearchSpace:
    """Space used for the resolution study: batch size and filters up to 512 at ``resolution``.

    Resolutions 64, 32, 16, 8 give 13, 15, 17, 19 bits.
    """
    bits = int(round(math.log2(512 / resolution)))
    if (1 << bits) * resolution != 512:
        raise ValueError(f"resolution must divide 512 into a power of two, got {resolution}")
    return SearchSpace(
        (
            HyperparamDef("batch_size", bits, resolution),
            HyperparamDef("n_filters", bits, resolution),
            HyperparamDef("learning_rate", 4, 0.0001, "real"),
            HyperparamDef("n_dense", 3, 64),
        )
    )
