import math

import numpy as np
import pytest
from hypothesis import settings

from autores.phase_model import ModelParams, StabilityClass, bifurcation_delta, find_roots

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

NU_II = math.pi / 6

# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)


def pick(params, cls):
    return next(r for r in find_roots(params) if r.stability_class is cls)


def unit_circle_roots(delta, nu):
    """Real roots of delta sin(2s + nu) - sin s via the quartic in z = exp(i s).

    delta e^{i nu} z^4 - z^3 + z - delta e^{-i nu} = 0; a root on |z| = 1 is a real s.
    """
    if abs(delta) < 1e-9:
        delta = 0.0
    coeffs = [delta * np.exp(1j * nu), -1.0, 0.0, 1.0, -delta * np.exp(-1j * nu)]
    z = np.roots(coeffs)
    on = np.abs(np.abs(z) - 1.0) < 1e-6
    return np.sort(np.mod(np.angle(z[on]), 2 * math.pi))


@pytest.fixture(scope="session")
def case1():
    p = ModelParams.from_delta(0.2, 0.0)
    return p, pick(p, StabilityClass.STABLE_CASE_I)


@pytest.fixture(scope="session")
def case2():
    p = ModelParams.from_delta(-bifurcation_delta(NU_II), NU_II)
    return p, pick(p, StabilityClass.CASE_II)


@pytest.fixture(scope="session")
def case3():
    p = ModelParams.from_delta(-0.5, 0.0)
    return p, pick(p, StabilityClass.CASE_III)
