"""Local Hoelder exponent estimation from wavelet quadratic functionals.

With ``V_j = sum_{k in nu(t0, j)} d(2^-j, k)^2`` over the neighborhood
``nu(t0, j) = {k : |t0 - k 2^-j| <= eps_j}`` and ``eps_j = 2^{-j gamma}``::

    H_hat = [log(eps_{j+1} / eps_j) + log(V_j / V_{j+1})] / (2 log 2)

From a path sampled at ``u / 2^n`` the scale is ``J_n = floor(beta n)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .model import ModelSpec
from .specfun import (DEFAULT_SETTINGS, ConstantsBundle, ConstantsError, QuadratureSettings, c0_alpha,
                      constants_at, pair_integral)
from .wavelet import MotherWavelet, WaveletCoefficientSet, coefficient_matrix, coefficients_from_path


class EstimationError(ValueError):
    """Estimator inputs are degenerate or inconsistent."""


@dataclass(frozen=True)
class ParameterChoice:
    beta: float
    gamma: float
    J_n: int
    epsilon_J: float


def select_parameters(tau1: float, n: int) -> ParameterChoice:
    """``beta = (4 tau1 + 1) / (4 tau1 + 2)``, ``gamma = 1 / (2 beta)``, ``J_n = floor(beta n)``."""
    if not 0.0 < tau1 < 1.0:
        raise EstimationError(f"tau1 must lie in (0, 1), got {tau1}")
    if n < 6:
        raise EstimationError(f"n must be >= 6, got {n}")
    beta = (4.0 * tau1 + 1.0) / (4.0 * tau1 + 2.0)
    gamma = 1.0 / (2.0 * beta)
    J = math.floor(beta * n)
    if J < 2:
        raise EstimationError(f"n={n} too small: J_n = {J} < 2")
    return ParameterChoice(beta, gamma, J, 2.0 ** (-J * gamma))


@dataclass(frozen=True, eq=False)
class EstimationConfig:
    """Everything the path estimator needs at one ``t0``.

    ``beta``/``gamma`` default to :func:`select_parameters`; overrides must keep
    ``gamma`` in (1/2, 1).
    """

    t0: float
    tau1: float
    n: int
    wavelet: MotherWavelet
    beta: float | None = None
    gamma: float | None = None
    midpoint: bool = False
    J_n: int = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.t0 < 1.0:
            raise EstimationError(f"t0 must lie in (0, 1), got {self.t0}")
        auto = select_parameters(self.tau1, self.n)
        beta = auto.beta if self.beta is None else float(self.beta)
        gamma = auto.gamma if self.gamma is None else float(self.gamma)
        if not 0.0 < beta < 1.0:
            raise EstimationError(f"beta must lie in (0, 1), got {beta}")
        if not 0.5 < gamma < 1.0:
            raise EstimationError(f"gamma must lie in (1/2, 1), got {gamma}")
        J = math.floor(beta * self.n)
        if J < 2:
            raise EstimationError(f"J_n = {J} < 2")
        if J + 1 > self.n:
            raise EstimationError(f"J_n + 1 = {J + 1} exceeds n = {self.n}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "J_n", J)

    def epsilon(self, j: int) -> float:
        return 2.0 ** (-j * self.gamma)

    @property
    def c0_ratio(self) -> float:
        return 2.0 ** (-self.gamma)

    def at(self, t0: float) -> "EstimationConfig":
        return EstimationConfig(t0, self.tau1, self.n, self.wavelet, self.beta, self.gamma, self.midpoint)


def power_epsilon(gamma: float):
    """``j -> 2^{-j gamma}``."""
    if not 0.5 < gamma < 1.0:
        raise EstimationError(f"gamma must lie in (1/2, 1), got {gamma}")
    return lambda j: 2.0 ** (-j * gamma)


@dataclass(frozen=True)
class Neighborhood:
    t0: float
    j: int
    epsilon_j: float
    indices: np.ndarray

    @property
    def card(self) -> int:
        return int(self.indices.size)


def neighborhood(t0: float, j: int, epsilon_j: float) -> Neighborhood:
    """Indices ``k in {0..2^j - 1}`` with ``|t0 - k 2^-j| <= epsilon_j``."""
    if 2.0**j * epsilon_j < 1.0:
        raise EstimationError(f"2^j eps_j = {2.0**j * epsilon_j:.3g} < 1; increase j or eps")
    k = np.arange(2**j)
    idx = k[np.abs(t0 - k / 2.0**j) <= epsilon_j]
    if idx.size == 0:
        raise EstimationError(f"empty neighborhood at t0={t0}, j={j}; increase j or eps")
    return Neighborhood(float(t0), int(j), float(epsilon_j), idx)


def quadratic_functional(coeffs: WaveletCoefficientSet, nu: Neighborhood) -> float:
    """``sum_{k in nu} d_k^2``."""
    if nu.j != coeffs.j:
        raise EstimationError(f"neighborhood scale {nu.j} != coefficient scale {coeffs.j}")
    if nu.indices.size and (nu.indices.min() < 0 or nu.indices.max() >= coeffs.values.size):
        raise EstimationError("neighborhood index out of range")
    v = coeffs.values[nu.indices]
    return float(np.dot(v, v))


@dataclass(frozen=True)
class HolderEstimate:
    t0: float
    h_hat: float
    j: int
    V_j: float
    V_jp1: float
    epsilon_j: float
    epsilon_jp1: float
    card_j: int
    card_jp1: int
    n: int | None = None
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    ctilde: float = float("nan")
    error: str | None = None

    @property
    def in_range(self) -> bool:
        return 0.0 < self.h_hat < 1.0

    @property
    def ok(self) -> bool:
        return self.error is None

    def with_ci(self, lo, hi, ctilde) -> "HolderEstimate":
        d = asdict(self)
        d.update(ci_low=lo, ci_high=hi, ctilde=ctilde)
        return HolderEstimate(**d)

    def to_row(self) -> dict:
        return {"t0": self.t0, "h_hat": self.h_hat, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "V_j": self.V_j, "V_jp1": self.V_jp1, "J_n": self.j, "n": self.n,
                "in_range": self.in_range, "error": self.error or ""}


def h_from_functionals(V_j: float, V_jp1: float, eps_j: float, eps_jp1: float) -> float:
    if not (V_j > 0.0 and V_jp1 > 0.0):
        raise EstimationError(f"degenerate data: V_j={V_j:.3g}, V_j+1={V_jp1:.3g}")
    return (math.log(eps_jp1 / eps_j) + math.log(V_j / V_jp1)) / (2.0 * math.log(2.0))


def estimate_H_from_coeffs(coeffs_j: WaveletCoefficientSet, coeffs_jp1: WaveletCoefficientSet, t0: float,
                           epsilon_fn, n: int | None = None) -> HolderEstimate:
    """Estimate ``H(t0)`` from coefficients at two consecutive scales."""
    j = coeffs_j.j
    if coeffs_jp1.j != j + 1:
        raise EstimationError(f"scales must differ by one (got {j} and {coeffs_jp1.j})")
    e0, e1 = float(epsilon_fn(j)), float(epsilon_fn(j + 1))
    nu0, nu1 = neighborhood(t0, j, e0), neighborhood(t0, j + 1, e1)
    if nu1.card < 2:
        raise EstimationError(f"neighborhood at scale {j + 1} has {nu1.card} < 2 points")
    V0, V1 = quadratic_functional(coeffs_j, nu0), quadratic_functional(coeffs_jp1, nu1)
    h = h_from_functionals(V0, V1, e0, e1)
    return HolderEstimate(float(t0), h, j, V0, V1, e0, e1, nu0.card, nu1.card, n)


def path_coefficients(y, config: EstimationConfig):
    J = config.J_n
    psi = config.wavelet
    return (coefficients_from_path(y, J, psi, config.midpoint),
            coefficients_from_path(y, J + 1, psi, config.midpoint))


def estimate_H_from_path(y, config: EstimationConfig, coeffs=None) -> HolderEstimate:
    """Estimate ``H(t0)`` from an observed path at scales ``J_n`` and ``J_n + 1``.

    ``coeffs`` may carry precomputed coefficient sets for those two scales.
    """
    d0, d1 = path_coefficients(y, config) if coeffs is None else coeffs
    return estimate_H_from_coeffs(d0, d1, config.t0, config.epsilon, config.n)


def ci_half_width(ctilde: float, J: int, eps_J: float, level: float) -> float:
    if not ctilde > 0.0:
        raise ConstantsError(f"ctilde must be positive, got {ctilde}")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    z = stats.norm.ppf(0.5 + 0.5 * level)
    return float(z * math.sqrt(ctilde / (2.0 ** (J + 1) * eps_J)))


def confidence_interval(est: HolderEstimate, bundle: ConstantsBundle, level: float = 0.95,
                        variance: str = "as-written"):
    """``h_hat -/+ z sqrt(ctilde / (2^{J+1} eps_J))``.

    ``variance="consistent"`` uses ``bundle.ctilde_consistent`` instead.
    """
    hw = ci_half_width(bundle.variance(variance), est.j, est.epsilon_j, level)
    return est.h_hat - hw, est.h_hat + hw


def plug_in_bundle(est: HolderEstimate, config: EstimationConfig,
                   settings: QuadratureSettings = DEFAULT_SETTINGS) -> ConstantsBundle:
    """Approximate constants with ``h_hat`` in place of ``H(t0)``.

    The variance ``ctilde`` does not depend on ``theta``, so ``theta = 1`` is used.
    """
    if not est.in_range:
        raise ConstantsError(f"plug-in constants need h_hat in (0, 1), got {est.h_hat:.4g}")
    return constants_at(est.h_hat, 1.0, config.wavelet, config.c0_ratio, est.t0, settings)


@dataclass(frozen=True)
class ThetaEstimate:
    t0: float
    theta_sq_hat: float
    h_hat: float
    V: float
    J: int


def estimate_theta_sq(y, est: HolderEstimate, psi: MotherWavelet,
                      settings: QuadratureSettings = DEFAULT_SETTINGS) -> ThetaEstimate:
    """``theta(t0)^2`` from ``V_J`` and the estimated exponent.

    ``-4^{J h} eps_J^{-1} V_J / (C0(2h) int int psi psi |t - s|^{2h})`` with ``h = h_hat``.
    ``y`` is unused beyond bookkeeping; ``est`` already carries ``V_J``.
    """
    h = est.h_hat
    if not 0.0 < h < 1.0:
        raise EstimationError(f"theta estimate needs h_hat in (0, 1), got {h:.4g}")
    if not est.V_j > 0.0:
        raise EstimationError("V_J must be positive")
    denom = c0_alpha(2.0 * h, settings) * pair_integral(2.0 * h, psi, 1.0, 1.0, 0.0, settings)
    if not denom < 0.0:
        raise EstimationError("wavelet double integral has the wrong sign")
    val = -(4.0 ** (est.j * h)) / est.epsilon_j * est.V_j / denom
    return ThetaEstimate(est.t0, val, h, est.V_j, est.j)


def holder_profile(y, t_grid, config: EstimationConfig) -> list[HolderEstimate]:
    """Estimates at every ``t0`` in ``t_grid``; coefficients are computed once.

    Failures are returned as estimates with ``error`` set and ``h_hat = nan``.
    """
    coeffs = path_coefficients(y, config)
    out = []
    for t0 in t_grid:
        try:
            out.append(estimate_H_from_path(y, config.at(float(t0)), coeffs))
        except (EstimationError, ValueError) as exc:
            nan = float("nan")
            out.append(HolderEstimate(float(t0), nan, config.J_n, nan, nan, nan, nan, 0, 0, config.n,
                                      error=str(exc)))
    return out


def standardize(h_hats, h_true: float, J: int, eps_J: float, ctilde: float) -> np.ndarray:
    """``sqrt(2^{J+1} eps_J) (h_hat - H) / sqrt(ctilde)``."""
    return math.sqrt(2.0 ** (J + 1) * eps_J) * (np.asarray(h_hats) - h_true) / math.sqrt(ctilde)


@dataclass(frozen=True)
class CLTDiagnostic:
    standardized: np.ndarray
    ks: float
    h_hats: np.ndarray
    coverage: float
    level: float


def clt_diagnostic(model: ModelSpec, config: EstimationConfig, bundle: ConstantsBundle, reps: int, seed: int,
                   level: float = 0.9, factor=None, unit_variance: bool = False, h_hats=None,
                   variance: str = "as-written") -> CLTDiagnostic:
    """Standardized estimates over ``reps`` simulated paths and their KS distance to N(0, 1).

    Pass ``h_hats`` to reuse a pool of estimates instead of simulating. ``variance``
    selects ``ctilde`` or ``ctilde_consistent`` (see :class:`ConstantsBundle`).
    """
    if reps < 100:
        raise EstimationError(f"the diagnostic needs reps >= 100, got {reps}")
    if h_hats is None:
        from .experiments import estimate_pool

        h_hats = estimate_pool(model, [config], reps, seed, factor=factor, unit_variance=unit_variance)[0]
    h_hats = np.asarray(h_hats, dtype=float)[:reps]
    if h_hats.size != reps:
        raise EstimationError("fewer estimates than reps")
    h0 = model.hurst(config.t0)
    ct = bundle.variance(variance)
    z = standardize(h_hats, h0, config.J_n, config.epsilon(config.J_n), ct)
    ks = float(stats.kstest(z, "norm").statistic)
    hw = ci_half_width(ct, config.J_n, config.epsilon(config.J_n), level)
    cover = float(np.mean(np.abs(h_hats - h0) <= hw))
    return CLTDiagnostic(z, ks, h_hats, cover, level)


@dataclass(frozen=True)
class FiniteSampleMoments:
    """Exact Gaussian moments of ``(V_J, V_{J+1})`` for ``Phi = id`` and a delta-method sd of ``h_hat``."""

    mean_Vj: float
    mean_Vjp1: float
    var_Vj: float
    var_Vjp1: float
    cov: float
    h_limit: float
    sd_delta: float


def finite_sample_moments(factor, config: EstimationConfig) -> FiniteSampleMoments:
    """Moments of the quadratic functionals from the exact coefficient covariance.

    This is an addition beyond the asymptotic theory: with ``B = A L`` restricted to
    the two neighborhoods, ``C = B B^T`` is the exact covariance of the selected
    coefficients, ``E V = tr C_jj``, ``Var V = 2 |C_jj|_F^2`` and
    ``Cov(V_j, V_j+1) = 2 |C_j,j+1|_F^2``.
    """
    n, J, psi = config.n, config.J_n, config.wavelet
    if factor.n != n:
        raise EstimationError("factor resolution does not match config.n")
    rows = []
    nus = []
    for j in (J, J + 1):
        nu = neighborhood(config.t0, j, config.epsilon(j))
        A = coefficient_matrix(n, j, psi, config.midpoint)[nu.indices, 1:]
        rows.append(A)
        nus.append(nu.card)
    B = np.vstack(rows) @ factor.lower_factor
    C = B @ B.T
    a = nus[0]
    C00, C11, C01 = C[:a, :a], C[a:, a:], C[:a, a:]
    m0, m1 = float(np.trace(C00)), float(np.trace(C11))
    v0, v1 = 2.0 * float(np.sum(C00**2)), 2.0 * float(np.sum(C11**2))
    cv = 2.0 * float(np.sum(C01**2))
    var_log = v0 / m0**2 + v1 / m1**2 - 2.0 * cv / (m0 * m1)
    e0, e1 = config.epsilon(J), config.epsilon(J + 1)
    h_lim = h_from_functionals(m0, m1, e0, e1)
    return FiniteSampleMoments(m0, m1, v0, v1, cv, h_lim, math.sqrt(max(var_log, 0.0)) / (2.0 * math.log(2.0)))
