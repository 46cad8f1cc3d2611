import numpy as np
import pytest

from ldpspde.models import DiffusionSpec, linear_model
from ldpspde.spaces import Basis, GalerkinState

ACCEPTANCE = {}


@pytest.fixture
def brownian():
    """One mode, zero drift, sigma = 1."""
    return linear_model(0.0, Basis(n_modes=1), DiffusionSpec("additive", [1.0]))


@pytest.fixture
def ou():
    return linear_model(1.0, Basis(n_modes=1), DiffusionSpec("additive", [1.0]))


@pytest.fixture
def zero1():
    return GalerkinState(np.zeros(1), Basis(n_modes=1))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
