import numpy as np
import pytest

from mbm_holder import _kernels
from mbm_holder._kernels import python as pyk

needs_compiled = pytest.mark.skipif(_kernels.compiled is None, reason="compiled extension not built")


def _inputs(N, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(1, N + 1) / N
    h = 0.1 + 0.8 * rng.random(N)
    th = 0.5 + rng.random(N)
    return t, h, th


def test_python_fill_matches_formula():
    from scipy.special import gamma

    t, h, th = _inputs(40)
    out = np.full((40, 40), np.nan)
    pyk.fill_gram_lower(t, h, th, out, 0.0)
    a = h[:, None] + h[None, :]
    c0 = 2 * np.pi / (gamma(a + 1) * np.sin(np.pi * a / 2))
    ref = np.outer(th, th) * 0.5 * c0 * (t[:, None] ** a + t[None, :] ** a - np.abs(t[:, None] - t[None, :]) ** a)
    lo = np.tril_indices(40)
    assert np.allclose(out[lo], ref[lo], rtol=1e-13)
    assert np.isnan(out[np.triu_indices(40, 1)]).all()


@needs_compiled
@pytest.mark.parametrize("N", [1, 7, 300])
def test_fill_backends_agree(N):
    t, h, th = _inputs(N, N)
    a = np.zeros((N, N))
    b = np.zeros((N, N))
    pyk.fill_gram_lower(t, h, th, a, 1e-9)
    _kernels.compiled.fill_gram_lower(t, h, th, b, 1e-9)
    lo = np.tril_indices(N)
    assert np.allclose(a[lo], b[lo], rtol=1e-13, atol=0)


@needs_compiled
def test_block_coefficients_backends_agree():
    rng = np.random.default_rng(4)
    dy = rng.standard_normal(2**10)
    w = rng.standard_normal(31)
    a = pyk.block_coefficients(dy, w, 32, -1.5)
    b = _kernels.compiled.block_coefficients(dy, w, 32, -1.5)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_shape_checks():
    t, h, th = _inputs(5)
    with pytest.raises(ValueError):
        pyk.fill_gram_lower(t, h, th, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        pyk.block_coefficients(np.zeros(8), np.zeros(5), 2, 1.0)
