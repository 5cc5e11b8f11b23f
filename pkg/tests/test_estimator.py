import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mbm_holder.estimator import (EstimationConfig, EstimationError, HolderEstimate, ci_half_width,
                                  clt_diagnostic, confidence_interval, estimate_H_from_coeffs,
                                  estimate_H_from_path, estimate_theta_sq, finite_sample_moments,
                                  h_from_functionals, holder_profile, neighborhood, plug_in_bundle, power_epsilon,
                                  quadratic_functional, select_parameters)
from mbm_holder.experiments import estimate_on_paths, simulate_pool
from mbm_holder.model import ModelSpec, ScaleFunction, builtin_hurst, constant_hurst
from mbm_holder.simulate import build_covariance, sample_path
from mbm_holder.specfun import ConstantsError, c0_alpha, constants_at, constants_bundle, pair_integral
from mbm_holder.wavelet import WaveletCoefficientSet, coefficients_from_path


def test_select_parameters_reference():
    p = select_parameters(0.1, 13)
    assert p.beta == pytest.approx(7 / 12, abs=1e-15)
    assert p.gamma == pytest.approx(6 / 7, abs=1e-15)
    assert p.J_n == 7
    assert p.epsilon_J == pytest.approx(2.0**-6, rel=1e-14)


def test_select_parameters_limits():
    p = select_parameters(1 - 1e-9, 100)
    assert p.beta == pytest.approx(5 / 6, abs=1e-8) and p.gamma == pytest.approx(3 / 5, abs=1e-8)
    with pytest.raises(EstimationError):
        select_parameters(0.0, 13)
    with pytest.raises(EstimationError):
        select_parameters(0.1, 5)


def test_config_validation(haar):
    with pytest.raises(EstimationError):
        EstimationConfig(0.5, 0.1, 13, haar, gamma=0.4)
    with pytest.raises(EstimationError):
        EstimationConfig(1.0, 0.1, 13, haar)
    with pytest.raises(EstimationError):
        EstimationConfig(0.5, 0.1, 13, haar, beta=1.0)
    cfg = EstimationConfig(0.5, 0.1, 13, haar)
    assert cfg.c0_ratio == 2 ** (-6 / 7)
    with pytest.raises(EstimationError):
        power_epsilon(1.0)


@pytest.mark.parametrize("t0, j, eps, expected", [
    (0.5, 4, 0.125, [6, 7, 8, 9, 10]),
    (0.5, 4, 1 / 16, [7, 8, 9]),
    (0.05, 4, 0.125, [0, 1, 2]),
])
def test_neighborhood_examples(t0, j, eps, expected):
    nu = neighborhood(t0, j, eps)
    assert nu.indices.tolist() == expected
    assert abs(nu.card - 2 ** (j + 1) * eps) <= 3


def test_neighborhood_errors():
    with pytest.raises(EstimationError, match="increase"):
        neighborhood(0.5, 2, 0.1)


@pytest.mark.parametrize("gamma", [0.6, 6 / 7])
def test_cardinality_bound_interior(gamma):
    for j in range(3, 15):
        eps = 2.0 ** (-j * gamma)
        for t0 in np.round(np.arange(0.05, 0.951, 0.05), 10):
            if t0 - eps < 0 or t0 + eps > 1 - 2.0**-j:
                continue
            assert abs(neighborhood(t0, j, eps).card - 2 ** (j + 1) * eps) <= 3


def test_cardinality_truncated_at_right_edge():
    # the last index is 2^j - 1, so a window reaching past 1 - 2^-j loses points
    eps = 2.0 ** (-4 * 0.6)
    nu = neighborhood(0.95, 4, eps)
    assert nu.indices.tolist() == [13, 14, 15]
    assert 2**5 * eps - nu.card == pytest.approx(3.0628662660, abs=1e-9)


def test_quadratic_functional():
    c = WaveletCoefficientSet(2, [1.0, -2.0, 3.0, 7.0], "observed")
    nu = neighborhood(0.25, 2, 0.25)
    assert nu.indices.tolist() == [0, 1, 2]
    assert quadratic_functional(c, nu) == 14.0
    scaled = WaveletCoefficientSet(2, 3.0 * c.values, "observed")
    assert quadratic_functional(scaled, nu) == 9.0 * 14.0
    assert quadratic_functional(WaveletCoefficientSet(2, np.zeros(4), "observed"), nu) == 0.0
    with pytest.raises(EstimationError):
        quadratic_functional(c, neighborhood(0.5, 3, 0.25))


@given(h=st.floats(0.01, 0.99), c=st.floats(1e-6, 1e6), j=st.integers(3, 12), gamma=st.floats(0.55, 0.95))
def test_formula_inversion(h, c, j, gamma):
    eps = power_epsilon(gamma)
    V = lambda i: c * 2.0 ** (-2 * i * h) * eps(i)
    assert h_from_functionals(V(j), V(j + 1), eps(j), eps(j + 1)) == pytest.approx(h, abs=1e-12)


def test_degenerate_functionals():
    with pytest.raises(EstimationError, match="degenerate"):
        h_from_functionals(0.0, 1.0, 0.1, 0.05)


def test_coefficient_scaling_leaves_h_unchanged(leg2):
    rng = np.random.default_rng(0)
    d0 = WaveletCoefficientSet(7, rng.standard_normal(128), "observed")
    d1 = WaveletCoefficientSet(8, rng.standard_normal(256), "observed")
    eps = power_epsilon(0.6)
    e = estimate_H_from_coeffs(d0, d1, 0.5, eps)
    s = estimate_H_from_coeffs(WaveletCoefficientSet(7, -4 * d0.values, "observed"),
                               WaveletCoefficientSet(8, -4 * d1.values, "observed"), 0.5, eps)
    assert e.h_hat == s.h_hat
    with pytest.raises(EstimationError, match="differ by one"):
        estimate_H_from_coeffs(d0, d0, 0.5, eps)


def test_affine_invariance_on_path(haar):
    fac = build_covariance(ModelSpec(builtin_hurst("H1"), n=10))
    y = sample_path(fac, None, seed=5).y_values
    cfg = EstimationConfig(0.5, 0.1, 10, haar)
    h = estimate_H_from_path(y, cfg).h_hat
    # power-of-two scaling is exact in floating point
    assert estimate_H_from_path(2 * y, cfg).h_hat == h
    assert estimate_H_from_path(0.25 * y, cfg).h_hat == h
    # other affine maps round the inputs, so agreement is to a few ulps
    for a, b in [(2, 5), (-3, 0), (-3, 5)]:
        assert estimate_H_from_path(a * y + b, cfg).h_hat == pytest.approx(h, abs=1e-12)


def test_fbm07_mean(leg2):
    model = ModelSpec(constant_hurst(0.7), n=12)
    X = simulate_pool(model, 100, 0)
    cfg = EstimationConfig(0.5, 0.7, 12, leg2, beta=7 / 12)
    assert cfg.J_n == 7
    H = estimate_on_paths(X, [cfg])[0]
    assert np.isfinite(H).all()
    assert abs(H.mean() - 0.7) <= 0.08


def test_ci_half_width_reference():
    assert ci_half_width(1.0, 7, 2.0**-6, 0.95) == pytest.approx(0.979982, abs=1e-6)
    assert ci_half_width(1.0, 7, 2.0**-6, 0.0) == 0.0
    with pytest.raises(ConstantsError):
        ci_half_width(0.0, 7, 0.1, 0.9)


def test_confidence_interval_and_plug_in(haar):
    fac = build_covariance(ModelSpec(constant_hurst(0.5), n=10))
    y = sample_path(fac, None, seed=1).y_values
    cfg = EstimationConfig(0.5, 0.5, 10, haar)
    e = estimate_H_from_path(y, cfg)
    b = constants_at(0.5, 1.0, haar, cfg.c0_ratio, 0.5)
    lo, hi = confidence_interval(e, b, 0.9)
    assert lo < e.h_hat < hi
    assert hi - e.h_hat == pytest.approx(ci_half_width(b.ctilde, e.j, e.epsilon_j, 0.9), rel=1e-14)
    if e.in_range:
        pb = plug_in_bundle(e, cfg)
        assert pb.H == e.h_hat and pb.ctilde > 0
    bad = HolderEstimate(0.5, 1.3, e.j, 1.0, 1.0, 0.1, 0.05, 3, 3)
    with pytest.raises(ConstantsError):
        plug_in_bundle(bad, cfg)


def test_coverage_brownian(leg2):
    model = ModelSpec(constant_hurst(0.5), n=13)
    cfg = EstimationConfig(0.5, 0.1, 13, leg2)
    b = constants_bundle(0.5, model, leg2, cfg.c0_ratio)
    diag = clt_diagnostic(model, cfg, b, 200, seed=0, level=0.9)
    assert diag.standardized.size == 200
    assert 0.80 <= diag.coverage <= 0.97


def test_clt_diagnostic_needs_reps(leg2):
    model = ModelSpec(constant_hurst(0.5), n=10)
    cfg = EstimationConfig(0.5, 0.1, 10, leg2)
    with pytest.raises(EstimationError, match="reps >= 100"):
        clt_diagnostic(model, cfg, None, 0, 0)


def test_theta_identity_true_h(leg2):
    # with the exact leading term of V and the true H the estimate returns theta^2
    h, theta, j, eps = 0.5, 1.7, 8, 2.0**-5
    c2 = -0.5 * theta**2 * c0_alpha(2 * h) * pair_integral(2 * h, leg2)
    V = 2 * c2 * 2.0 ** (-2 * j * h) * eps
    est = HolderEstimate(0.5, h, j, V, V, eps, eps, 16, 16)
    assert estimate_theta_sq(None, est, leg2).theta_sq_hat == pytest.approx(theta**2, rel=1e-12)
    scaled = HolderEstimate(0.5, h, j, 9 * V, V, eps, eps, 16, 16)
    assert estimate_theta_sq(None, scaled, leg2).theta_sq_hat == pytest.approx(9 * theta**2, rel=1e-12)
    with pytest.raises(EstimationError):
        estimate_theta_sq(None, HolderEstimate(0.5, 1.2, j, V, V, eps, eps, 16, 16), leg2)


def test_holder_profile_single_point(haar):
    fac = build_covariance(ModelSpec(builtin_hurst("H1"), n=10))
    y = sample_path(fac, None, seed=2).y_values
    cfg = EstimationConfig(0.5, 0.1, 10, haar)
    prof = holder_profile(y, [0.5], cfg)
    assert prof[0].h_hat == estimate_H_from_path(y, cfg).h_hat
    bad = holder_profile(y, [0.5, 1.5], cfg)
    assert bad[0].ok and not bad[1].ok and math.isnan(bad[1].h_hat)


def test_profile_constant_h_flat(haar):
    model = ModelSpec(constant_hurst(0.5), n=13)
    X = simulate_pool(model, 50, 0)
    grid = np.round(np.arange(0.2, 0.81, 0.1), 10)
    H = estimate_on_paths(X, [EstimationConfig(t0, 0.1, 13, haar) for t0 in grid])
    assert np.var(np.nanmean(H, axis=1)) < 0.02


def test_profile_slope_h1(haar):
    model = ModelSpec(builtin_hurst("H1"), n=13)
    X = simulate_pool(model, 100, 0)
    grid = np.round(np.arange(0.1, 0.91, 0.1), 10)
    H = estimate_on_paths(X, [EstimationConfig(t0, 0.1, 13, haar) for t0 in grid])
    slope = np.polyfit(grid, np.nanmean(H, axis=1), 1)[0]
    # per-path slopes give the Monte Carlo standard error of the fitted slope
    per_path = np.polyfit(grid, H, 1)[0]
    se = np.std(per_path, ddof=1) / math.sqrt(per_path.size)
    assert abs(slope - 0.8) <= max(0.2, 4 * se)


def test_monotone_information(haar):
    model = ModelSpec(builtin_hurst("H1"), n=13)
    X = simulate_pool(model, 100, 0)
    s13 = np.std(estimate_on_paths(X, [EstimationConfig(0.5, 0.1, 13, haar)])[0])
    s10 = np.std(estimate_on_paths(X[:, ::8], [EstimationConfig(0.5, 0.1, 10, haar)])[0])
    assert s13 <= s10


def test_finite_sample_moments_match_empirical(leg2):
    model = ModelSpec(constant_hurst(0.5), n=10)
    fac = build_covariance(model)
    cfg = EstimationConfig(0.5, 0.1, 10, leg2, gamma=0.6)
    fm = finite_sample_moments(fac, cfg)
    X = simulate_pool(model, 2000, 3, factor=fac)
    J = cfg.J_n
    V = []
    for x in X:
        V.append(quadratic_functional(coefficients_from_path(x, J, leg2), neighborhood(0.5, J, cfg.epsilon(J))))
    V = np.array(V)
    assert V.mean() == pytest.approx(fm.mean_Vj, rel=5 * V.std() / math.sqrt(V.size) / fm.mean_Vj)
    assert fm.sd_delta > 0
