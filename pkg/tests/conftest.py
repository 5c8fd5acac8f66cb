import math

import numpy as np
import pytest

from pencilspec.model import HALF_PI, PI, CosinePotentials, GridPotentials, make_spec
from pencilspec.spectrum import compute_spectrum

TRIVIAL_JUMPS = [(0.0, 1.0, 0.0), (HALF_PI, 1.0, 0.0)]
GENERIC_JUMPS = [(1.0, 1.5, 0.2), (2.2, 0.8, -0.1)]


def truth_potentials():
    """p = 0.1 sin x, q = cos 2x written exactly in cos(k (x - pi/2))."""
    return CosinePotentials([0.0, 0.1], [0.0, 0.0, -1.0], origin=HALF_PI)


@pytest.fixture(scope="session")
def trivial_spec():
    return make_spec(1.0, 1.0, TRIVIAL_JUMPS, mode="relaxed")


@pytest.fixture(scope="session")
def two_piece_spec():
    return make_spec(0.6, 0.8, TRIVIAL_JUMPS, mode="relaxed")


@pytest.fixture(scope="session")
def generic_spec():
    return make_spec(0.6, 0.8, GENERIC_JUMPS, potentials=truth_potentials())


@pytest.fixture(scope="session")
def generic_grid_spec():
    pots = GridPotentials.from_functions(lambda x: 0.1 * np.sin(x), lambda x: np.cos(2 * x),
                                         grid_n=4097)
    return make_spec(0.6, 0.8, GENERIC_JUMPS, potentials=pots)


@pytest.fixture(scope="session")
def gamma0_spec():
    return make_spec(0.6, 0.8, [(1.0, 1.5, 0.0), (2.2, 0.8, 0.0)], potentials=truth_potentials())


@pytest.fixture(scope="session")
def generic_spectrum(generic_spec):
    return compute_spectrum(generic_spec, 24)


def l2_left(f, g, n=400):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.25 * math.pi * (x + 1.0)
    return math.sqrt(0.25 * math.pi * float(w @ (np.asarray(f(x)) - np.asarray(g(x))) ** 2))



ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


__all__ = ["PI", "HALF_PI", "record_criterion"]
