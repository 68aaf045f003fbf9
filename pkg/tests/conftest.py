import sys
import threading

import numpy as np
import pytest

from hesga.objectives import SyntheticCurveObjective, synthetic_curve
from hesga.space import HyperparamDef, SearchSpace


class CountingObjective:
    """Wraps an objective and records every call and every epoch trained."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.epochs = 0
        self._lock = threading.Lock()

    def curve(self, assignment, epochs, seed):
        with self._lock:
            self.calls += 1
            self.epochs += epochs
        return self.inner.curve(assignment, epochs, seed)


class FixedCurve:
    """Objective returning a fixed curve (truncated to the requested epochs)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def curve(self, assignment, epochs, seed):
        return self.values[:epochs]


@pytest.fixture
def six_bit_space():
    return SearchSpace((HyperparamDef("x", 3, 1), HyperparamDef("y", 3, 1)))


@pytest.fixture
def small_space():
    return SearchSpace((HyperparamDef("A", 3, 32), HyperparamDef("B", 4, 0.0001, "real")))


@pytest.fixture
def bowl(six_bit_space):
    return SyntheticCurveObjective.bowl(six_bit_space)


def const_params(a, b, c):
    return SyntheticCurveObjective(lambda _assignment: (a, b, c))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)


__all__ = ["CountingObjective", "FixedCurve", "const_params", "synthetic_curve"]
