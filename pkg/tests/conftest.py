import sys

import numpy as np
import pytest

from fparma.presets import random_stationary_model


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "ACCEPTANCE_LINES", None):
            terminalreporter.section("acceptance checklist")
            for line in mod.ACCEPTANCE_LINES:
                terminalreporter.write_line(line)
            break


@pytest.fixture
def model_factory():
    """Factory for seeded random stationary models; count=1 returns one."""

    def make(seed, count=1, **kw):
        g = np.random.default_rng(seed)
        models = [random_stationary_model(g, **kw) for _ in range(count)]
        return models if count > 1 else models[0]

    return make
