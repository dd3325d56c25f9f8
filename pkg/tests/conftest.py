import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from stablekernels import SymMatrix

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

epsilons = st.fractions(min_value=Fraction(1, 64), max_value=Fraction(31, 64), max_denominator=64)
rationals = st.fractions(min_value=-3, max_value=14, max_denominator=97)


@st.composite
def factors(draw, max_n=4, max_m=4):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    entries = st.integers(-3, 3)
    return [[draw(entries) for _ in range(m)] for _ in range(n)]


@st.composite
def psd_matrices(draw, max_n=4):
    return SymMatrix.from_factor(draw(factors(max_n=max_n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
