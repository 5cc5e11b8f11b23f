import numpy as np
import pytest

from mbm_holder.model import ModelSpec, ScaleFunction, builtin_hurst, constant_hurst
from mbm_holder.wavelet import make_wavelet


@pytest.fixture(scope="session")
def haar():
    return make_wavelet("haar")


@pytest.fixture(scope="session")
def leg2():
    return make_wavelet("legendre2")


@pytest.fixture(scope="session")
def bm_model_12():
    return ModelSpec(constant_hurst(0.5), ScaleFunction(), n=12)


@pytest.fixture(scope="session")
def h1_model_13():
    return ModelSpec(builtin_hurst("H1"), n=13)


def mc_se_var(x):
    """Standard error of the sample variance of ``x`` (uses the fourth central moment)."""
    x = np.asarray(x, dtype=float)
    m = x.size
    c = x - x.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return np.sqrt(max(m4 - m2**2, 0.0) / m)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
