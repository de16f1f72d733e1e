import numpy as np
import pytest

from gradshield import ModelConfig, build_model, synthesize_toy

# narrow widths so unit tests stay fast; shapes stay the real 3x28x28
TINY = ModelConfig(conv_widths=(4, 4, 4, 4, 8), init_seed=77)

# acceptance tests append one line each; echoed after the run so the
# verdicts survive output capture
CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def tiny_model():
    # cheap to build, so a fresh one per test avoids cross-test mutation
    return build_model(TINY)


@pytest.fixture(scope="session")
def toy56():
    return synthesize_toy(n_per_class=8, classes=7, seed=303)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
