import numpy as np
import pytest

from vnncomp import fixtures
from vnncomp.onnx_rt import load_network
from vnncomp.specfmt import parse_vnnlib

BOX_Y0_GE_3_5 = fixtures.box_property([0.0, 0.0], [1.0, 1.0], 1, [["(>= Y_0 3.5)"]])


@pytest.fixture
def sum_net():
    """f(x0, x1) = 4 x0 + 4 x1, so f(0.5, 0.5) = 4."""
    return load_network(fixtures.make_mlp([np.full((2, 1), 4.0, np.float32)], [np.zeros(1, np.float32)]))


@pytest.fixture
def box_spec():
    return parse_vnnlib(BOX_Y0_GE_3_5)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
