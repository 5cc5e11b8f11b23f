"""Special constants and kernels for mBm wavelet statistics.

Notation
--------
``C_l(alpha; p)`` is ``binom(p, l) * int_R |e^{iu} - 1|^2 (log|u|)^l |u|^{-alpha-1} du``
and ``C0(alpha) = C_0(alpha; 0)``.

``J(alpha; p, q, D) = int_0^1 int_0^1 psi(t) psi(s) |p t - q s + D|^alpha dt ds`` is the
pair integral behind every leading covariance term.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .model import HurstProfile, ModelSpec, ScaleFunction
from .wavelet import MotherWavelet, WaveletError


class QuadratureError(RuntimeError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, msg, estimate=None, error=None):
        super().__init__(msg)
        self.estimate = estimate
        self.error = error


class ConstantsError(ValueError):
    """Constants are undefined for the requested configuration."""


class A0Error(ConstantsError):
    """The wavelet's cancellation order is too low for the Hurst profile."""


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    tail_cut: float = 1e3
    max_subdivisions: int = 200
    series_cut: float = 1e-3
    richardson_lags: tuple = (32, 64, 128)

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.tail_cut < 1e3:
            raise ValueError("tail_cut must be >= 1e3")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        lags = tuple(int(v) for v in self.richardson_lags)
        if len(lags) != 3 or lags[1] != 2 * lags[0] or lags[2] != 2 * lags[1]:
            raise ValueError("richardson_lags must be (L, 2L, 4L)")
        object.__setattr__(self, "richardson_lags", lags)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:12]


DEFAULT_SETTINGS = QuadratureSettings()


def _quad(f, a, b, settings, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=settings.abs_tol, epsrel=settings.rel_tol,
                                      limit=settings.max_subdivisions, **kw)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, a, b, epsabs=settings.abs_tol, epsrel=settings.rel_tol,
                                          limit=settings.max_subdivisions, **kw)
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {exc}", val, err) from None
    return val


def c0_closed(alpha):
    """Closed form ``2 pi / (Gamma(alpha + 1) sin(pi alpha / 2))``."""
    alpha = np.asarray(alpha, dtype=float)
    return 2.0 * np.pi / (special.gamma(alpha + 1.0) * np.sin(np.pi * alpha / 2.0))


def _log_power_integral_0(p, l, delta):
    # int_0^delta u^p log(u)^l du, p > -1
    L = math.log(delta)
    fact = math.factorial(l)
    s = sum((-1) ** i * fact / math.factorial(l - i) * L ** (l - i) / (p + 1) ** (i + 1) for i in range(l + 1))
    return delta ** (p + 1) * s


def _log_power_integral_inf(alpha, l, A):
    # int_A^inf u^(-alpha-1) log(u)^l du, alpha > 0
    L = math.log(A)
    fact = math.factorial(l)
    s = sum(fact / math.factorial(l - i) * L ** (l - i) / alpha ** (i + 1) for i in range(l + 1))
    return A ** (-alpha) * s


@lru_cache(maxsize=4096)
def _half_line_integral(l: int, alpha: float, settings: QuadratureSettings) -> float:
    """``int_0^inf (1 - cos u) log(u)^l u^(-alpha-1) du``."""
    delta = settings.series_cut
    # [0, delta]: 1 - cos u = sum_k (-1)^(k+1) u^(2k) / (2k)!
    head = 0.0
    for k in range(1, 8):
        head += (-1) ** (k + 1) / math.factorial(2 * k) * _log_power_integral_0(2 * k - alpha - 1, l, delta)
    # [delta, 1]: 2 sin^2(u/2) avoids cancellation in 1 - cos u
    mid = _quad(lambda u: 2.0 * math.sin(0.5 * u) ** 2 * math.log(u) ** l * u ** (-alpha - 1), delta, 1.0, settings)
    # [1, inf): the non-oscillatory part in closed form, the cosine part by weighted quadrature
    smooth = _log_power_integral_inf(alpha, l, 1.0)
    g = lambda u: math.log(u) ** l * u ** (-alpha - 1)  # noqa: E731
    osc = _quad(g, 1.0, settings.tail_cut, settings, weight="cos", wvar=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            tail, _ = integrate.quad(g, settings.tail_cut, np.inf, weight="cos", wvar=1.0,
                                     epsabs=settings.abs_tol, limlst=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"oscillatory tail did not converge: {exc}") from None
    return head + mid + smooth - osc - tail


def cl_alpha(l: int, p: int, alpha: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Log-weighted constant ``C_l(alpha; p)`` by quadrature."""
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if l < 0 or p < l:
        raise ValueError("need 0 <= l <= p")
    return math.comb(p, l) * 4.0 * _half_line_integral(int(l), float(alpha), settings)


def c0_alpha(alpha: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``C0(alpha) = int_R |e^{iu} - 1|^2 |u|^{-alpha-1} du`` by quadrature."""
    return cl_alpha(0, 0, alpha, settings)


def mbm_covariance(s, t, hurst: HurstProfile):
    """``Cov(B_{H(s)}(s), B_{H(t)}(t)) = C0(a)/2 (|s|^a + |t|^a - |s-t|^a)``, ``a = H(s) + H(t)``.

    Broadcasts over array arguments. ``C0`` uses its closed form.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    a = hurst(s) + hurst(t)
    out = 0.5 * c0_closed(a) * (np.abs(s) ** a + np.abs(t) ** a - np.abs(s - t) ** a)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- pair integral

def _inner_antiderivative(w, alpha, deg):
    # P_i(w) = sign(w)^(i+1) |w|^(alpha+i+1) / (alpha+i+1), i = 0..deg
    i = np.arange(deg + 1)
    aw = abs(w)
    sg = 1.0 if w >= 0 else -1.0
    return sg ** (i + 1) * aw ** (alpha + i + 1) / (alpha + i + 1)


def _pair_direct(alpha, psi: MotherWavelet, p, q, D, settings):
    deg = psi.degree
    pieces = [(psi.breaks[i], psi.breaks[i + 1], psi.coefs[i]) for i in range(psi.coefs.shape[0])]
    binoms = [[math.comb(c, i) for i in range(deg + 1)] for c in range(deg + 1)]

    def inner(t):
        C = p * t + D
        total = 0.0
        for sa, sb, a in pieces:
            # psi(s) = sum_c a_c s^c with s = (C - w) / q, expanded in powers of w
            b = np.zeros(deg + 1)
            for c, ac in enumerate(a):
                if ac == 0.0:
                    continue
                f = ac / q**c
                for i in range(c + 1):
                    b[i] += f * binoms[c][i] * C ** (c - i) * (-1.0) ** i
            hi = _inner_antiderivative(C - q * sa, alpha, deg)
            lo = _inner_antiderivative(C - q * sb, alpha, deg)
            total += float(b @ (hi - lo))
        return total / q

    sbreaks = psi.breaks
    total = 0.0
    for ta, tb, a in pieces:
        kinks = sorted({(q * sbk - D) / p for sbk in sbreaks if ta < (q * sbk - D) / p < tb})
        f = lambda t, a=a: np.polynomial.polynomial.polyval(t, a) * inner(t)  # noqa: E731
        total += _quad(f, ta, tb, settings, points=kinks or None)
    return total


@lru_cache(maxsize=256)
def _gl_tensor(psi_key, nodes_per_piece):
    psi = _WAVELET_REGISTRY[psi_key]
    x, w = np.polynomial.legendre.leggauss(nodes_per_piece)
    ts, ws = [], []
    for i in range(psi.coefs.shape[0]):
        a, b = psi.breaks[i], psi.breaks[i + 1]
        tt = 0.5 * (b - a) * x + 0.5 * (a + b)
        ts.append(tt)
        ws.append(0.5 * (b - a) * w * np.polynomial.polynomial.polyval(tt, psi.coefs[i]))
    return np.concatenate(ts), np.concatenate(ws)


_WAVELET_REGISTRY: dict = {}


def _register(psi: MotherWavelet) -> str:
    key = json.dumps(psi.to_dict(), sort_keys=True)
    _WAVELET_REGISTRY.setdefault(key, psi)
    return key


def pair_moments(psi: MotherWavelet, p: float, q: float, upto: int) -> np.ndarray:
    """``M_m = int int psi(t) psi(s) (p t - q s)^m`` for ``m = 0..upto``.

    Computed with tensor Gauss-Legendre rules that are exact for these polynomial
    integrands; ``M_m`` with ``m < 2Q`` vanishes identically and is set to zero.
    """
    key = _register(psi)
    nodes = (upto + 2 * psi.degree) // 2 + 2
    t, wt = _gl_tensor(key, nodes)
    x = p * t[:, None] - q * t[None, :]
    W = wt[:, None] * wt[None, :]
    out = np.zeros(upto + 1)
    xm = np.ones_like(x)
    for m in range(upto + 1):
        if m >= 2 * psi.Q:
            out[m] = float(np.sum(W * xm))
        xm = xm * x
    return out


def _pair_series(alpha, psi, p, q, D):
    ratio = max(p, q) / D
    upto = 2 * psi.Q + int(math.ceil(38.0 / -math.log(ratio))) + 2
    M = pair_moments(psi, p, q, upto)
    m = np.arange(upto + 1)
    terms = special.binom(alpha, m) * D ** (alpha - m) * M
    return float(np.sum(terms[::-1]))


def pair_integral(alpha: float, psi: MotherWavelet, p: float = 1.0, q: float = 1.0, D: float = 0.0,
                  settings: QuadratureSettings = DEFAULT_SETTINGS, method: str = "auto") -> float:
    """``J(alpha; p, q, D) = int int psi(t) psi(s) |p t - q s + D|^alpha dt ds``.

    ``method`` is ``direct`` (analytic inner integral, adaptive outer quadrature),
    ``series`` (binomial expansion in ``1/D``, needs ``|D| > max(p, q)``) or ``auto``,
    which uses the series once ``|D| >= 2 max(p, q)``.
    """
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    if D < 0:
        # swap the roles of t and s
        p, q, D = q, p, -D
    if method == "auto":
        method = "series" if D >= 2.0 * max(p, q) else "direct"
    if method == "series":
        if D <= max(p, q):
            raise ValueError("series needs |D| > max(p, q)")
        return _pair_series(alpha, psi, p, q, D)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    return _pair_direct(alpha, psi, p, q, D, settings)


def wavelet_cov_leading(delta: int, alpha: float, psi: MotherWavelet,
                        settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``I(delta, alpha) = -(C0(alpha)/2) J(alpha; 1, 1, delta)``.

    Same-scale coefficient covariance at lag ``delta`` is ``theta theta' I 2^{-j(alpha+1)}``
    to leading order.
    """
    return -0.5 * c0_alpha(alpha, settings) * pair_integral(alpha, psi, 1.0, 1.0, float(delta), settings)


def c2_const(t0: float, rho: float, hurst: HurstProfile, theta: ScaleFunction, psi: MotherWavelet,
             settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``-theta(t0)^2 C0(2H)/2 int int psi(t) psi(s) |t - rho s|^{2H}``, ``H = H(t0)``."""
    return _c2_at(hurst(t0), theta(t0), rho, psi, settings)


def _c2_at(h, th, rho, psi, settings):
    alpha = 2.0 * h
    val = -th**2 * 0.5 * c0_alpha(alpha, settings) * pair_integral(alpha, psi, 1.0, rho, 0.0, settings)
    if rho == 1.0 and not val > 0.0:
        raise WaveletError(f"coefficient variance constant is {val:.3g}; wavelet is not admissible")
    return val


def c1_limit(alpha: float, Q: int, r: float, psi: MotherWavelet,
             settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``C1(alpha, Q, r) = lim_D D^{2Q-alpha} r^{-Q} (-C0/2) J(alpha; r, 1, D)``.

    Found by two rounds of Richardson extrapolation over the lags in ``settings``.
    """
    c0 = c0_alpha(alpha, settings)
    f = []
    for D in settings.richardson_lags:
        J = pair_integral(alpha, psi, r, 1.0, float(D), settings)
        f.append(D ** (2 * Q - alpha) * r ** (-Q) * (-0.5 * c0) * J)
    g1 = 2.0 * f[1] - f[0]
    g2 = 2.0 * f[2] - f[1]
    return (4.0 * g2 - g1) / 3.0


def lag_series(h: float, Q: int) -> float:
    """``sum_{l != 0} |l|^{4h - 4Q} = 2 zeta(4Q - 4h)``."""
    s = 4.0 * Q - 4.0 * h
    if s <= 1.0:
        raise ConstantsError(f"lag series diverges (4Q - 4H = {s:g} <= 1)")
    return 2.0 * float(special.zeta(s, 1))


def check_a0(Q: int, hurst: HurstProfile, t0: float | None = None, rule: str = "global") -> None:
    """Cancellation-order rule: Q >= 2, or Q = 1 with sup H < 3/4.

    ``rule="local"`` only requires ``H(t0) < 3/4``.
    """
    if Q >= 2:
        return
    if rule == "global":
        sup = hurst.tau2
        if sup < 0.75:
            return
        raise A0Error(f"(A0) violated: Q>=2 is required, or Q=1 with sup H < 3/4 (sup H = {sup:.4g})")
    if rule == "local":
        h0 = hurst(t0)
        if h0 < 0.75:
            return
        raise A0Error(f"(A0) violated: Q>=2 is required, or Q=1 with H(t0) < 3/4 (H(t0) = {h0:.4g})")
    raise ValueError(f"unknown rule {rule!r}")


@dataclass(frozen=True)
class ConstantsBundle:
    """Leading-order constants at ``t0``; ``ctilde`` is the CLT variance of the estimator.

    ``ctilde_consistent`` uses ``c3 / (2 c2^2)`` for the variance of the normalized
    functional, the value implied by ``E V = 2 c2 2^{-2jH} eps`` and
    ``Var V = c3 2^{-j(4H+1)} eps``; it is half of the variance term in ``ctilde``.
    """

    t0: float
    alpha: float
    C0: float
    c1: float
    c2: float
    C2_half: float
    c3: float
    c4: float
    c0_ratio: float
    ctilde: float
    Q: int
    lag_series: float
    C1_two: float = 0.0
    H: float = 0.0
    theta: float = 1.0
    wavelet: str = ""
    ctilde_consistent: float = float("nan")

    def variance(self, which: str = "as-written") -> float:
        """``ctilde`` (``"as-written"``) or ``ctilde_consistent`` (``"consistent"``)."""
        if which == "as-written":
            return self.ctilde
        if which == "consistent":
            return self.ctilde_consistent
        raise ValueError(f"unknown variance convention {which!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConstantsBundle":
        data = json.loads(text)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def constants_at(h: float, th: float, psi: MotherWavelet, c0_ratio: float, t0: float = float("nan"),
                 settings: QuadratureSettings = DEFAULT_SETTINGS) -> ConstantsBundle:
    """Constants for local Hurst value ``h`` and scale ``th`` (no (A0) check)."""
    Q = psi.Q
    alpha = 2.0 * h
    C0 = c0_alpha(alpha, settings)
    c1 = c1_limit(alpha, Q, 1.0, psi, settings) * th**2
    c2 = _c2_at(h, th, 1.0, psi, settings)
    C2_half = _c2_at(h, th, 0.5, psi, settings)
    lag = lag_series(h, Q)
    c3 = 4.0 * (c2**2 + c1**2 * lag)
    C1_two = c1_limit(alpha, Q, 2.0, psi, settings)
    far = 2.0 * (float(special.zeta(4.0 * Q - 4.0 * h, 1)) - 1.0)  # sum over |l| >= 2
    c4 = math.sqrt(2.0 * c0_ratio) / c2**2 * (
        C2_half**2 * 2.0 ** (alpha + 1.0)
        + 2.0 * c1**2
        + 2.0 ** (2 * Q - alpha + 1.0) * C1_two**2 * th**4 * far
    )
    inv = 1.0 / (2.0 * c0_ratio)
    ctilde = ((inv + 1.0) * c3 / c2**2 - 2.0 * math.sqrt(inv) * c4) / (2.0 * math.log(2.0)) ** 2
    ctilde_c = ((inv + 1.0) * c3 / (2.0 * c2**2) - 2.0 * math.sqrt(inv) * c4) / (2.0 * math.log(2.0)) ** 2
    if not ctilde > 0.0:
        raise ConstantsError(f"asymptotic variance is not positive (ctilde = {ctilde:.4g})")
    return ConstantsBundle(t0=float(t0), alpha=alpha, C0=C0, c1=c1, c2=c2, C2_half=C2_half, c3=c3, c4=c4,
                           c0_ratio=c0_ratio, ctilde=ctilde, Q=Q, lag_series=lag, C1_two=C1_two,
                           H=float(h), theta=float(th), wavelet=psi.name or psi.kind, ctilde_consistent=ctilde_c)


def constants_bundle(t0: float, model: ModelSpec, psi: MotherWavelet, c0_ratio: float,
                     settings: QuadratureSettings = DEFAULT_SETTINGS, a0_rule: str = "global") -> ConstantsBundle:
    """All leading-order constants at ``t0`` for ``model`` and ``psi``.

    ``c0_ratio`` is ``lim eps_{j+1} / eps_j`` (``2^-gamma`` for ``eps_j = 2^{-j gamma}``).
    """
    if not 0.0 < t0 < 1.0:
        raise ValueError("t0 must lie in (0, 1)")
    check_a0(psi.Q, model.hurst, t0, a0_rule)
    return constants_at(model.hurst(t0), model.scale(t0), psi, c0_ratio, t0, settings)


def bundle_cache_key(t0, model: ModelSpec, psi: MotherWavelet, c0_ratio, settings, a0_rule="global") -> str:
    payload = json.dumps({
        "t0": float(t0), "hurst": model.hurst.to_dict(), "theta": model.scale.to_dict(),
        "wavelet": psi.to_dict(), "c0_ratio": float(c0_ratio), "settings": asdict(settings),
        "rule": a0_rule, "format": 2,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def cached_constants_bundle(cache_dir, t0, model, psi, c0_ratio, settings=DEFAULT_SETTINGS, a0_rule="global"):
    """:func:`constants_bundle` backed by a JSON file per key in ``cache_dir``.

    Returns ``(bundle, path, hit)``.
    """
    cache_dir = Path(cache_dir)
    path = cache_dir / f"constants-{bundle_cache_key(t0, model, psi, c0_ratio, settings, a0_rule)}.json"
    if path.exists():
        return ConstantsBundle.from_json(path.read_text()), path, True
    bundle = constants_bundle(t0, model, psi, c0_ratio, settings, a0_rule)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(bundle.to_json())
    return bundle, path, False
