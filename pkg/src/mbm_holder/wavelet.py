"""Mother wavelets on [0, 1] and dyadic wavelet coefficients of sampled paths.

Every wavelet is stored as a piecewise polynomial (breakpoints plus ascending
coefficients in the global variable ``t``), so moments, antiderivatives and
the cell integrals ``int psi(2^j t) dt`` over grid cells are exact.

The coefficient at scale ``j`` and position ``k`` of a path ``Y`` sampled on
``{u / 2**n}`` is::

    d(2^-j, k) = 2^(j/2) * sum_l Y((l + k m) / 2^n) * w_l,   m = 2^(n-j)

with ``w_l`` the integral of ``psi(2^j t)`` over the ``l``-th grid cell.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels

WAVELET_KINDS = ("haar", "legendre2", "tabulated")
_MOMENT_TOL = 1e-10


class WaveletError(ValueError):
    """Invalid wavelet or coefficient request."""


@dataclass(frozen=True, eq=False)
class MotherWavelet:
    """Piecewise-polynomial wavelet supported on [0, 1].

    Parameters
    ----------
    kind : str
        ``haar``, ``legendre2`` or ``tabulated``.
    breaks : ndarray
        Increasing breakpoints ``0 = b_0 < ... < b_P = 1``.
    coefs : ndarray, shape (P, d + 1)
        Ascending polynomial coefficients in ``t`` on each piece.
    Q : int
        Cancellation order: moments ``0..Q-1`` vanish, moment ``Q`` does not.
    """

    kind: str
    breaks: np.ndarray
    coefs: np.ndarray
    Q: int
    name: str = ""
    _prims: list = field(default=None, repr=False)

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        coefs = np.atleast_2d(np.asarray(self.coefs, dtype=float))
        if breaks[0] != 0.0 or breaks[-1] != 1.0 or np.any(np.diff(breaks) <= 0):
            raise WaveletError("breakpoints must increase from 0 to 1")
        if coefs.shape[0] != breaks.size - 1:
            raise WaveletError("need one coefficient row per piece")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coefs", coefs)
        # antiderivative per piece, shifted so Psi is continuous with Psi(0) = 0
        prims, offset = [], 0.0
        for i, c in enumerate(coefs):
            pc = P.polyint(c)
            pc[0] += offset - P.polyval(breaks[i], pc)
            prims.append(pc)
            offset = P.polyval(breaks[i + 1], pc)
        object.__setattr__(self, "_prims", prims)
        self._check_moments()

    def _check_moments(self):
        for p in range(self.Q):
            if abs(self.moment(p)) > _MOMENT_TOL:
                raise WaveletError(f"moment {p} of {self.kind} wavelet is {self.moment(p):.3g}, expected 0")
        if self.moment_Q_abs <= 0.0:
            raise WaveletError("int t^Q |psi| must be positive")

    @property
    def degree(self) -> int:
        return self.coefs.shape[1] - 1

    def _piece(self, t):
        idx = np.searchsorted(self.breaks, t, side="right") - 1
        return np.clip(idx, 0, self.breaks.size - 2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t >= 0.0) & (t <= 1.0)
        idx = self._piece(t[inside])
        vals = np.zeros(idx.shape)
        for i in np.unique(idx):
            sel = idx == i
            vals[sel] = P.polyval(t[inside][sel], self.coefs[i])
        out[inside] = vals
        return out if out.ndim else float(out)

    def antiderivative(self, t):
        """``Psi(t) = int_0^t psi``; zero outside [0, 1] since ``Psi(1) = 0`` when Q >= 1."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        idx = self._piece(t)
        out = np.empty_like(t)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = P.polyval(t[sel], self._prims[i])
        return out if out.ndim else float(out)

    def moment(self, p: int) -> float:
        """Exact ``int_0^1 t^p psi(t) dt``."""
        total = 0.0
        shift = np.zeros(p + 1)
        shift[p] = 1.0
        for i, c in enumerate(self.coefs):
            pc = P.polyint(P.polymul(c, shift))
            total += P.polyval(self.breaks[i + 1], pc) - P.polyval(self.breaks[i], pc)
        return float(total)

    def abs_moment(self, p: int) -> float:
        """Exact ``int_0^1 t^p |psi(t)| dt`` (pieces split at their real roots)."""
        total = 0.0
        shift = np.zeros(p + 1)
        shift[p] = 1.0
        for i, c in enumerate(self.coefs):
            a, b = self.breaks[i], self.breaks[i + 1]
            roots = P.polyroots(c) if np.any(c[1:]) else np.array([])
            cuts = sorted({a, b, *[r.real for r in roots if abs(r.imag) < 1e-14 and a < r.real < b]})
            pc = P.polyint(P.polymul(c, shift))
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                total += abs(P.polyval(hi, pc) - P.polyval(lo, pc))
        return float(total)

    @property
    def moment_Q_abs(self) -> float:
        return self.abs_moment(self.Q)

    def moments(self, upto: int) -> np.ndarray:
        return np.array([self.moment(p) for p in range(upto + 1)])

    def pieces_shifted(self, scale: float, shift: float):
        """Pieces of ``psi((x - shift) / scale)`` as polynomials in ``x``.

        Returns a list of ``(lo, hi, coefs)``; used by the pair integral.
        """
        out = []
        for i, c in enumerate(self.coefs):
            # substitute t = (x - shift) / scale
            lin = np.array([-shift / scale, 1.0 / scale])
            poly = np.zeros(1)
            term = np.ones(1)
            for ci in c:
                poly = P.polyadd(poly, ci * term)
                term = P.polymul(term, lin)
            lo, hi = shift + scale * self.breaks[i], shift + scale * self.breaks[i + 1]
            out.append((lo, hi, poly))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, "Q": self.Q,
                "breaks": self.breaks.tolist(), "coefs": self.coefs.tolist()}


def make_wavelet(kind: str = "legendre2", values=None, nodes=None) -> MotherWavelet:
    """Build a mother wavelet.

    ``haar`` is ``1`` on [0, 1/2) and ``-1`` on [1/2, 1] (Q = 1); ``legendre2`` is
    ``6t^2 - 6t + 1`` (Q = 2). ``tabulated`` interpolates ``values`` at ``nodes``
    linearly; its Q is the number of leading moments that vanish to 1e-10.
    """
    if kind == "haar":
        return MotherWavelet("haar", np.array([0.0, 0.5, 1.0]), np.array([[1.0], [-1.0]]), 1, "haar")
    if kind == "legendre2":
        return MotherWavelet("legendre2", np.array([0.0, 1.0]), np.array([[1.0, -6.0, 6.0]]), 2, "legendre2")
    if kind == "tabulated":
        if values is None:
            raise WaveletError("tabulated wavelet needs values")
        values = np.asarray(values, dtype=float)
        nodes = np.linspace(0.0, 1.0, values.size) if nodes is None else np.asarray(nodes, dtype=float)
        if nodes.shape != values.shape or nodes.size < 2:
            raise WaveletError("nodes and values must match and have >= 2 entries")
        slope = np.diff(values) / np.diff(nodes)
        coefs = np.column_stack([values[:-1] - slope * nodes[:-1], slope])
        probe = MotherWavelet.__new__(MotherWavelet)
        object.__setattr__(probe, "breaks", nodes)
        object.__setattr__(probe, "coefs", coefs)
        Q = 0
        while Q < 8 and abs(MotherWavelet.moment(probe, Q)) <= _MOMENT_TOL:
            Q += 1
        if Q == 0:
            raise WaveletError(f"tabulated wavelet has nonzero mean {MotherWavelet.moment(probe, 0):.3g}")
        return MotherWavelet("tabulated", nodes, coefs, Q, "tabulated")
    raise WaveletError(f"unknown wavelet kind {kind!r}")


@dataclass(frozen=True, eq=False)
class WaveletCoefficientSet:
    """Coefficients ``d(2^-j, k)``, ``k = 0..2^j - 1``, at one scale.

    ``provenance`` is ``"exact"``, ``"observed"`` or ``"discretized(n)"``.
    """

    j: int
    values: np.ndarray
    provenance: str
    wavelet: MotherWavelet | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (2**self.j,):
            raise WaveletError(f"scale {self.j} needs {2**self.j} coefficients, got {vals.size}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


def cell_weights(psi: MotherWavelet, j: int, n: int, midpoint: bool = False) -> np.ndarray:
    """Integrals of ``psi(2^j t)`` over ``[l 2^-n, (l+1) 2^-n]``, ``l = 0..2^(n-j)-1``.

    With ``midpoint=True`` the integral is replaced by ``2^-n psi(2^(j-n)(l + 1/2))``.
    """
    if j > n:
        raise WaveletError(f"scale j={j} exceeds resolution n={n}")
    m = 2 ** (n - j)
    if midpoint:
        return psi((np.arange(m) + 0.5) / m) / 2.0**n
    big = psi.antiderivative(np.arange(m + 1) / m)
    return np.diff(big) / 2.0**j


def _abel_weights(psi: MotherWavelet, j: int, n: int) -> np.ndarray:
    # partial sums of the cell weights; the last one is 2^-j Psi(1) = 0 and is dropped
    m = 2 ** (n - j)
    return psi.antiderivative(np.arange(1, m) / m) / 2.0**j


def _path_values(y) -> np.ndarray:
    vals = getattr(y, "y_values", y)
    return np.ascontiguousarray(vals, dtype=np.float64)


def _resolution(vals: np.ndarray) -> int:
    n = int(round(np.log2(vals.size - 1))) if vals.size > 1 else -1
    if n < 0 or 2**n + 1 != vals.size:
        raise WaveletError(f"path length {vals.size} is not 2^n + 1")
    return n


def _transform(vals, j, psi, midpoint):
    n = _resolution(vals)
    if j > n:
        raise WaveletError(f"scale j={j} exceeds resolution n={n}")
    if j < 0:
        raise WaveletError("scale must be nonnegative")
    m = 2 ** (n - j)
    scale = 2.0 ** (j / 2)
    if midpoint:
        w = cell_weights(psi, j, n, midpoint=True)
        return _kernels.block_coefficients(vals[:-1].copy(), w, 2**j, scale), n
    if m == 1:
        # one cell per coefficient: d_k = 2^(j/2) Y_k w_0 with w_0 = 2^-j Psi(1) = 0
        return np.zeros(2**j), n
    # Abel summation: sum_l Y_l (W_{l+1} - W_l) = -sum_l (Y_{l+1} - Y_l) W_{l+1};
    # works on increments so constants cancel exactly
    dy = np.empty(2**n)
    np.subtract(vals[1:], vals[:-1], out=dy)
    w = _abel_weights(psi, j, n)
    return _kernels.block_coefficients(dy, w, 2**j, -scale), n


def coefficients_from_path(y, j: int, psi: MotherWavelet, midpoint: bool = False) -> WaveletCoefficientSet:
    """Discretized wavelet coefficients of an observed path at scale ``j``.

    Parameters
    ----------
    y : SamplePath or array_like
        Observed values on ``{u / 2^n : u = 0..2^n}``.
    j : int
        Scale, ``j <= n``.
    psi : MotherWavelet
    midpoint : bool
        Use the midpoint rule for the cell integrals instead of exact integration.
    """
    vals = _path_values(y)
    d, n = _transform(vals, j, psi, midpoint)
    tag = f"discretized({n})" + ("-midpoint" if midpoint else "")
    return WaveletCoefficientSet(j, d, tag, psi)


def coefficients_exact(x_path_fine, j: int, psi: MotherWavelet) -> WaveletCoefficientSet:
    """Stand-in for the continuous coefficients of ``X`` from a fine path (``n >= j + 6``)."""
    vals = np.ascontiguousarray(getattr(x_path_fine, "x_values", x_path_fine), dtype=np.float64)
    n = _resolution(vals)
    if n < j + 6:
        raise WaveletError(f"exact coefficients need n >= j + 6 (n={n}, j={j})")
    d, _ = _transform(vals, j, psi, False)
    return WaveletCoefficientSet(j, d, "exact", psi)


def coefficient_matrix(n: int, j: int, psi: MotherWavelet, midpoint: bool = False) -> np.ndarray:
    """Dense operator ``A`` with ``d = A @ Y`` for a path of length ``2^n + 1``.

    The last column is zero. Used for exact finite-sample covariances.
    """
    m = 2 ** (n - j)
    w = cell_weights(psi, j, n, midpoint)
    A = np.zeros((2**j, 2**n + 1))
    for k in range(2**j):
        A[k, k * m: k * m + m] = w
    return 2.0 ** (j / 2) * A


def write_coefficients_csv(path, sets) -> None:
    """Write coefficient sets as rows ``j,k,value``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j", "k", "value"])
        for s in sets:
            for k, v in enumerate(s.values):
                wr.writerow([s.j, k, repr(float(v))])


def read_coefficients_csv(path, psi: MotherWavelet | None = None) -> dict[int, WaveletCoefficientSet]:
    """Read ``j,k,value`` rows back into one :class:`WaveletCoefficientSet` per scale."""
    rows: dict[int, dict[int, float]] = {}
    with open(Path(path), newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or not {"j", "k", "value"} <= set(rd.fieldnames):
            raise WaveletError("coefficient CSV needs columns j,k,value")
        for lineno, rec in enumerate(rd, start=2):
            try:
                j, k, v = int(rec["j"]), int(rec["k"]), float(rec["value"])
            except (TypeError, ValueError):
                raise WaveletError(f"bad coefficient row at line {lineno}") from None
            if not np.isfinite(v):
                raise WaveletError(f"non-finite coefficient at line {lineno}")
            rows.setdefault(j, {})[k] = v
    out = {}
    for j, byk in rows.items():
        if sorted(byk) != list(range(2**j)):
            raise WaveletError(f"scale {j} must list k = 0..{2**j - 1} exactly once")
        out[j] = WaveletCoefficientSet(j, np.array([byk[k] for k in range(2**j)]), "observed", psi)
    return out


def binomial_moment_sums(psi: MotherWavelet, p: float, q: float, upto: int) -> np.ndarray:
    """``M_m = int int psi(t) psi(s) (p t - q s)^m dt ds`` for ``m = 0..upto``."""
    mu = psi.moments(upto)
    out = np.zeros(upto + 1)
    for m in range(upto + 1):
        out[m] = sum(comb(m, i) * p**i * (-q) ** (m - i) * mu[i] * mu[m - i] for i in range(m + 1))
    return out
