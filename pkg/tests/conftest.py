from __future__ import annotations

import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from overdet_lab.geometry import (build_ellipse_domain, build_fourier_domain, build_rectangle_domain,  # noqa: E402
                                  triangulate)

H = 0.02


def n_around(length: float, h: float = H) -> int:
    return int(math.ceil(length / h))


@pytest.fixture(scope="session")
def disk_mesh():
    return triangulate(build_fourier_domain(1.0, n_boundary=n_around(2 * math.pi)), H)


@pytest.fixture(scope="session")
def coarse_disk_mesh():
    return triangulate(build_fourier_domain(1.0, n_boundary=n_around(2 * math.pi, 0.05)), 0.05)


@pytest.fixture(scope="session")
def ellipse_mesh():
    a, b = 1.2, 1.0 / 1.2
    return triangulate(build_ellipse_domain(a, b, n_boundary=n_around(math.pi * (a + b))), H)


@pytest.fixture(scope="session")
def square_mesh():
    return triangulate(build_rectangle_domain(1.0, 1.0, n_per_side=50), H)


@pytest.fixture(scope="session")
def coarse_square_mesh():
    return triangulate(build_rectangle_domain(1.0, 1.0, n_per_side=8), 0.125)


def trefoil_mesh(eps: float, h: float = H):
    return triangulate(build_fourier_domain(1.0, (0.0, 0.0, eps), n_boundary=n_around(2 * math.pi, h)), h)


@pytest.fixture(scope="session")
def trefoil_meshes():
    return {eps: trefoil_mesh(eps) for eps in (0.02, 0.05, 0.1)}


# one line per acceptance criterion, printed after the run (see test_acceptance.py)
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
