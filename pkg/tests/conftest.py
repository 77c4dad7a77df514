import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qpsmooth.potentials import PotentialModel

settings.register_profile("qp", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qp")


@pytest.fixture(scope="session")
def harmonic():
    return PotentialModel.harmonic()


@pytest.fixture(scope="session")
def quartic():
    return PotentialModel.pure_power(2)


@pytest.fixture(scope="session")
def smoothed():
    return PotentialModel.smoothed_power(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def accept(request):
    """accept(n, ok, detail, elapsed, budget) records one PASS/FAIL line."""

    def record(n, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed <= budget
        line = f"[{n}] {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.1f} s / {budget:g} s)"
        request.config.acceptance_lines.append(line)
        print(line)
        return ok

    return record
