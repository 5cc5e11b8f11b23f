"""Data-generating model: Hurst profile H, scale function theta, link Phi.

The observed process is ``Y(t) = Phi(theta(t) * B_{H(t)}(t))`` on the dyadic
grid ``{u / 2**n : u = 0..2**n}``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

_GRID_POINTS = 10_000

HURST_KINDS = ("constant", "linear", "sinusoidal", "damped-sine", "tabulated")
SCALE_KINDS = ("constant", "tabulated", "expression")
LINK_KINDS = ("identity", "exp", "sin4x", "xsin2_4x", "custom")


class ModelError(ValueError):
    """Invalid model description."""


def _check_unit_interval(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ModelError(f"time must lie in [0, 1], got {t!r}")
    return arr


@dataclass(frozen=True)
class HurstProfile:
    """Hurst function H on [0, 1] with known bounds ``tau1 <= H <= tau2``.

    Closed-form kinds take ``params``:

    - ``constant``: (h,)
    - ``linear``: (a, b) for ``a + b t``
    - ``sinusoidal``: (a, b, c) for ``a + b sin(c t)``
    - ``damped-sine``: (a, b, c) for ``a + b (1 - t) sin(c t)**2``
    - ``tabulated``: flat (t_0, h_0, t_1, h_1, ...) interpolated by a cubic spline;
      ``tau1``/``tau2`` must be supplied.
    """

    kind: str
    params: tuple
    tau1: float | None = None
    tau2: float | None = None
    name: str | None = None
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in HURST_KINDS:
            raise ModelError(f"unknown Hurst kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        nparams = {"constant": 1, "linear": 2, "sinusoidal": 3, "damped-sine": 3}
        if self.kind in nparams and len(self.params) != nparams[self.kind]:
            raise ModelError(f"{self.kind} profile needs {nparams[self.kind]} params")
        if self.kind == "tabulated":
            if self.tau1 is None or self.tau2 is None:
                raise ModelError("tabulated profiles must supply tau1 and tau2")
            pts = np.asarray(self.params).reshape(-1, 2)
            if pts.shape[0] < 4:
                raise ModelError("tabulated profile needs at least 4 knots")
            object.__setattr__(self, "_spline", CubicSpline(pts[:, 0], pts[:, 1]))
        else:
            grid = np.linspace(0.0, 1.0, _GRID_POINTS)
            vals = self._evaluate(grid)
            if self.tau1 is None:
                object.__setattr__(self, "tau1", float(vals.min()))
            if self.tau2 is None:
                object.__setattr__(self, "tau2", float(vals.max()))
        object.__setattr__(self, "tau1", float(self.tau1))
        object.__setattr__(self, "tau2", float(self.tau2))

    def _evaluate(self, t):
        p = self.params
        if self.kind == "constant":
            return np.full_like(t, p[0], dtype=float)
        if self.kind == "linear":
            return p[0] + p[1] * t
        if self.kind == "sinusoidal":
            return p[0] + p[1] * np.sin(p[2] * t)
        if self.kind == "damped-sine":
            return p[0] + p[1] * (1.0 - t) * np.sin(p[2] * t) ** 2
        return self._spline(t)

    def __call__(self, t):
        arr = _check_unit_interval(t)
        out = self._evaluate(arr)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "params": list(self.params), "tau1": self.tau1, "tau2": self.tau2}
        if self.name:
            d["name"] = self.name
        return d


def eval_hurst(profile: HurstProfile, t: float) -> float:
    """Evaluate ``H(t)``; raises :class:`ModelError` outside [0, 1]."""
    if not np.isscalar(t):
        raise ModelError("eval_hurst takes a scalar time")
    return profile(t)


def builtin_hurst(name: str) -> HurstProfile:
    """The three test profiles H1, H2, H3 used in the Monte Carlo study."""
    table = {
        "H1": ("linear", (0.1, 0.8)),
        "H2": ("sinusoidal", (0.5, 0.4, 5.0)),
        "H3": ("damped-sine", (0.1, 0.8, 10.0)),
    }
    try:
        kind, params = table[name.upper()]
    except KeyError:
        raise ModelError(f"unknown built-in Hurst profile {name!r}") from None
    return HurstProfile(kind, params, name=name.upper())


def constant_hurst(h: float) -> HurstProfile:
    return HurstProfile("constant", (h,), name=f"const({h:g})")


@dataclass(frozen=True)
class ScaleFunction:
    """The deterministic scale theta(t).

    ``expression`` kinds hold a numpy expression in ``t`` (e.g. ``"1 + 0.5*sin(t)"``)
    in ``params[0]``; ``flag_zeros`` records that isolated zeros are expected.
    """

    kind: str = "constant"
    params: tuple = (1.0,)
    flag_zeros: bool = False
    _fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SCALE_KINDS:
            raise ModelError(f"unknown theta kind {self.kind!r}")
        if self.kind == "expression":
            if len(self.params) != 1 or not isinstance(self.params[0], str):
                raise ModelError("expression theta needs a single string parameter")
            object.__setattr__(self, "_fn", _compile_expression(self.params[0]))
        else:
            object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "tabulated":
            pts = np.asarray(self.params).reshape(-1, 2)
            object.__setattr__(self, "_fn", CubicSpline(pts[:, 0], pts[:, 1]))

    def __call__(self, t):
        arr = _check_unit_interval(t)
        if self.kind == "constant":
            out = np.full_like(arr, self.params[0], dtype=float)
        else:
            out = np.asarray(self._fn(arr), dtype=float) * np.ones_like(arr)
        return float(out) if np.ndim(t) == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "flag_zeros": self.flag_zeros}


_EXPR_NAMES = {k: getattr(np, k) for k in ("sin", "cos", "exp", "log", "sqrt", "abs", "pi", "tanh")}


def _compile_expression(src: str) -> Callable:
    code = compile(src, "<theta>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name != "t":
            raise ModelError(f"name {name!r} not allowed in theta expression")
    return lambda t: eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "t": t})


@dataclass(frozen=True)
class LinkFunction:
    """Link Phi with derivative-bound metadata ``(c1, c2)`` when known."""

    kind: str = "identity"
    fn: Callable | None = field(default=None, compare=False)
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ModelError(f"unknown link kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ModelError("custom link needs a callable")
        if self.kind == "identity" and self.c1 is None:
            object.__setattr__(self, "c1", 1.0)
            object.__setattr__(self, "c2", 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "sin4x":
            return np.sin(4.0 * x)
        if self.kind == "xsin2_4x":
            return x * np.sin(4.0 * x) ** 2
        return np.asarray(self.fn(x), dtype=float)

    @property
    def builtin(self) -> bool:
        return self.kind != "custom"


_LINK_ALIASES = {"phi1": "identity", "phi2": "exp", "phi3": "sin4x", "phi4": "xsin2_4x"}


def builtin_link(name: str) -> LinkFunction:
    """``Phi1..Phi4`` (or their kind names): x, e^x, sin(4x), x sin^2(4x)."""
    kind = _LINK_ALIASES.get(name.lower(), name.lower())
    if kind == "custom":
        raise ModelError("custom links are not built in")
    return LinkFunction(kind)


@dataclass(frozen=True)
class ModelSpec:
    hurst: HurstProfile
    scale: ScaleFunction = field(default_factory=ScaleFunction)
    link: LinkFunction = field(default_factory=LinkFunction)
    n: int = 13

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ModelError(f"dyadic resolution n must be an integer >= 4, got {self.n}")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(2**self.n + 1) / 2.0**self.n

    def covariance_digest(self) -> str:
        """Digest of everything the covariance of X depends on (not the link)."""
        payload = json.dumps(
            {"hurst": self.hurst.to_dict(), "theta": self.scale.to_dict(), "n": self.n},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def validate_model(spec: ModelSpec) -> list[str]:
    """Return the list of violated modelling assumptions (empty when all hold)."""
    problems = []
    h = spec.hurst
    if not h.tau1 > 0.0:
        problems.append(f"tau1 <= 0 (tau1={h.tau1:g})")
    if not h.tau2 < 1.0:
        problems.append(f"tau2 >= 1 (tau2={h.tau2:g})")
    if h.tau1 > h.tau2:
        problems.append("tau1 > tau2")
    fine = np.linspace(0.0, 1.0, _GRID_POINTS)
    hv = h(fine)
    if hv.min() < h.tau1 - 1e-9 or hv.max() > h.tau2 + 1e-9:
        problems.append("H leaves [tau1, tau2] on the evaluation grid")
    grid = spec.grid
    th = spec.scale(grid)
    zeros = np.flatnonzero(th == 0.0)
    if zeros.size:
        pts = ", ".join(f"{grid[i]:g}" for i in zeros[:5])
        problems.append(f"theta vanishes on grid at t = {pts}")
    if not spec.link.builtin and (spec.link.c1 is None or spec.link.c2 is None):
        problems.append("custom link without derivative bounds c1, c2")
    return problems
