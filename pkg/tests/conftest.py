import numpy as np
import pytest

from pipg.bench import compute_reference
from pipg.mpc import build_benchmark, lift
from pipg.spectral import estimate_bounds

_REFERENCES = {}


def benchmark_reference(T):
    """Certified reference for the benchmark at horizon ``T``, computed once per session."""
    if T not in _REFERENCES:
        problem = lift(build_benchmark(T))
        bounds = estimate_bounds(problem)
        _REFERENCES[T] = (problem, bounds, compute_reference(problem, bounds))
    return _REFERENCES[T]


@pytest.fixture(scope="session")
def bench5():
    return benchmark_reference(5)


@pytest.fixture(scope="session")
def bench25():
    return benchmark_reference(25)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
