from __future__ import annotations

import numpy as np
import pytest

from specbesov.grid_core import make_grid, named_coefficient, rescale_coefficient
from specbesov.homogenization import homogenized_coefficient
from specbesov.operator_spectral import assemble, decompose
from specbesov.paracalculus import ParaContext

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def make_ctx(N: int, profile: str = "sin", eps: float = 1.0, dim: int = 1) -> ParaContext:
    A = named_coefficient(make_grid(dim, N), profile, eps)
    return ParaContext(decompose(assemble(A)), A)


@pytest.fixture(scope="session")
def ctx64():
    return make_ctx(64, eps=0.25)


@pytest.fixture(scope="session")
def ctx32():
    return make_ctx(32, eps=0.5)


@pytest.fixture(scope="session")
def ctx_const64():
    return make_ctx(64, "const")


@pytest.fixture(scope="session")
def pair128():
    """(ctx_eps, ctx_0) at N=128, eps=1/4."""
    A_unit = named_coefficient(make_grid(1, 128), "sin")
    Ae = rescale_coefficient(A_unit, 0.25)
    A0 = homogenized_coefficient(A_unit)
    return ParaContext(decompose(assemble(Ae)), Ae), ParaContext(decompose(assemble(A0)), A0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
