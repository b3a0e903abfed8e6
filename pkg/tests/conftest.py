import math

import numpy as np
import pytest

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def exp_exact(x):
    return math.exp(0.5 * float(x @ x))


def exp_rhs(x):
    """det D^2 of exp(|x|^2/2), worked by hand: e^{|x|^2}(1 + |x|^2)."""
    s = float(x @ x)
    return math.exp(s) * (1.0 + s)


def half_sq(x):
    return 0.5 * float(x @ x)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
