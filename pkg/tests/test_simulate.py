import math
import warnings

import numpy as np
import pytest
from scipy import stats

from mbm_holder.model import LinkFunction, ModelSpec, ScaleFunction, builtin_hurst, constant_hurst
from mbm_holder.simulate import (SimulationError, build_covariance, clear_factor_cache, gram_matrix, read_factor,
                                 rep_seed, sample_fbm_circulant, sample_hidden, sample_path, write_path_csv)
from mbm_holder.specfun import mbm_covariance


def bm(n=4):
    return ModelSpec(constant_hurst(0.5), ScaleFunction(), n=max(n, 4))


def test_brownian_factor_n2():
    fac = build_covariance(bm(), n=2, use_memory_cache=False)
    t = np.array([0.25, 0.5, 0.75, 1.0])
    G = 2 * math.pi * np.minimum.outer(t, t)
    L = fac.lower_factor
    assert np.allclose(L @ L.T, G, atol=1e-10, rtol=0)
    assert np.array_equal(fac.grid, t)
    assert fac.jitter_used == 0.0


def test_single_point_grid_is_scalar():
    fac = build_covariance(bm(), n=0, use_memory_cache=False)
    assert fac.lower_factor.shape == (1, 1)
    assert fac.lower_factor[0, 0] == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)


def test_h1_factor_needs_no_jitter():
    model = ModelSpec(builtin_hurst("H1"), n=8)
    fac = build_covariance(model, use_memory_cache=False)
    assert fac.jitter_used == 0.0
    t = fac.grid
    G = mbm_covariance(t[:, None], t[None, :], model.hurst)
    L = fac.lower_factor
    assert np.linalg.norm(L @ L.T - G) / np.linalg.norm(G) < 1e-6


def test_gram_fill_matches_kernel():
    model = ModelSpec(builtin_hurst("H3"), ScaleFunction("expression", ("1 + t",)), n=6)
    G = gram_matrix(model)
    t = np.arange(1, 65) / 64
    ref = np.outer(1 + t, 1 + t) * mbm_covariance(t[:, None], t[None, :], model.hurst)
    lo = np.tril_indices(64)
    assert np.allclose(G[lo], ref[lo], rtol=1e-13, atol=0)


def test_size_cap():
    with pytest.raises(SimulationError, match="n <= 14"):
        build_covariance(bm(), n=15)


def test_memory_cache_returns_same_object():
    clear_factor_cache()
    m = ModelSpec(builtin_hurst("H2"), n=6)
    assert build_covariance(m) is build_covariance(m)


def test_file_cache_round_trip(tmp_path):
    m = ModelSpec(builtin_hurst("H2"), n=6)
    a = build_covariance(m, cache_dir=tmp_path, use_memory_cache=False)
    files = list(tmp_path.glob("factor-*.bin"))
    assert len(files) == 1
    raw = files[0].read_bytes()
    assert raw[:8] == b"MBMFACT\0"
    assert len(raw) == 8 + 4 + 8 + 8 + 8 * 64 * 65 // 2
    b = build_covariance(m, cache_dir=tmp_path, use_memory_cache=False)
    assert np.array_equal(a.lower_factor, b.lower_factor)
    assert b.model_hash == a.model_hash
    with pytest.raises(OSError):
        read_factor(files[0], 5)


def test_sampling_determinism_and_identity_link():
    fac = build_covariance(ModelSpec(builtin_hurst("H1"), n=7))
    a = sample_path(fac, None, seed=11)
    b = sample_path(fac, LinkFunction(), seed=11)
    assert np.array_equal(a.x_values, b.x_values)
    assert np.array_equal(b.y_values, b.x_values)
    assert a.x_values[0] == 0.0
    c = sample_path(fac, LinkFunction("exp"), seed=11)
    assert np.array_equal(c.y_values, np.exp(c.x_values))


def test_batched_sampling_matches_single_and_threads():
    fac = build_covariance(ModelSpec(builtin_hurst("H1"), n=7))
    seeds = [rep_seed(0, "cell", r) for r in range(130)]
    X1 = sample_hidden(fac, seeds, threads=1)
    X4 = sample_hidden(fac, seeds, threads=4)
    assert np.array_equal(X1, X4)
    assert np.allclose(X1[5], sample_path(fac, None, seeds[5]).x_values, rtol=1e-13, atol=1e-13)


def test_rep_seed_is_stable():
    assert rep_seed(0, "H1:n13", 0) == rep_seed(0, "H1:n13", 0)
    assert rep_seed(0, "H1:n13", 0) != rep_seed(0, "H1:n13", 1)
    assert rep_seed(0, "H1:n13", 0) != rep_seed(1, "H1:n13", 0)


def test_var_x1_brownian():
    fac = build_covariance(ModelSpec(constant_hurst(0.5), n=10))
    X = sample_hidden(fac, range(2000))
    assert np.var(X[:, -1]) == pytest.approx(2 * math.pi, rel=0.1)


def test_empirical_covariance_matches_gram():
    model = ModelSpec(builtin_hurst("H1"), n=4)
    fac = build_covariance(model)
    X = sample_hidden(fac, range(4000))[:, 1:]
    t = fac.grid
    G = mbm_covariance(t[:, None], t[None, :], model.hurst)
    emp = np.cov(X, rowvar=False, bias=True)
    # se of a product-moment estimate for Gaussian pairs
    se = np.sqrt((G**2 + np.outer(np.diag(G), np.diag(G))) / X.shape[0])
    assert np.all(np.abs(emp - G) <= 5 * se)


def test_unit_variance_scaling():
    model = ModelSpec(builtin_hurst("H1"), n=5)
    fac = build_covariance(model, unit_variance=True, use_memory_cache=False)
    L = fac.lower_factor
    var = np.sum(L**2, axis=1)
    t = fac.grid
    assert np.allclose(var, t ** (2 * model.hurst(t)), rtol=1e-12)


def test_circulant_quadratic_variation():
    sp = sample_fbm_circulant(0.5, 12, seed=2)
    qv = np.sum(np.diff(sp.x_values) ** 2)
    assert qv == pytest.approx(2 * math.pi, rel=0.1)
    assert sp.x_values[0] == 0.0


def test_circulant_h09_no_fallback():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sample_fbm_circulant(0.9, 8, seed=0)


def test_circulant_matches_cholesky_in_distribution():
    H, n = 0.7, 8
    circ = np.array([sample_fbm_circulant(H, n, seed=s).x_values[-1] for s in range(500)])
    fac = build_covariance(ModelSpec(constant_hurst(H), n=n))
    chol = sample_hidden(fac, range(10_000, 10_500))[:, -1]
    res = stats.ks_2samp(circ, chol)
    crit = 1.63 * math.sqrt(2 / 500)
    assert res.statistic < crit


def test_write_path_csv(tmp_path):
    fac = build_covariance(ModelSpec(builtin_hurst("H1"), n=4))
    sp = sample_path(fac, LinkFunction("exp"), seed=1)
    p = tmp_path / "p.csv"
    write_path_csv(p, sp, with_hidden=True)
    data = np.genfromtxt(p, delimiter=",", names=True)
    assert data.dtype.names == ("t", "y", "x")
    assert np.array_equal(data["y"], sp.y_values)
