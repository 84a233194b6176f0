import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from heatdet import build_rule, enumerate_basis, make_bundle, make_model  # noqa: E402

TWO_PI = 2 * math.pi

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HEATDET_CACHE", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def circle():
    return make_model("circle", TWO_PI)


@pytest.fixture(scope="session")
def circle_basis(circle):
    return enumerate_basis(circle, make_bundle(circle), 2500.0)


@pytest.fixture(scope="session")
def circle_rule(circle_basis):
    return build_rule(circle_basis.model, circle_basis.dim * circle_basis.max_degree)


@pytest.fixture(scope="session")
def torus():
    return make_model("torus", [TWO_PI, TWO_PI])


@pytest.fixture(scope="session")
def sphere():
    return make_model("sphere", 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
