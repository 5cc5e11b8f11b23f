"""Exact Gaussian sampling of ``X = theta * B_H`` on the dyadic grid.

The Gram matrix of ``X`` on ``{u / 2^n : u = 1..2^n}`` is filled in place (lower
triangle only) and factored once with LAPACK; ``X(0) = 0`` is set directly.

Seeds
-----
Repetition ``r`` of a Monte Carlo cell uses
``int.from_bytes(blake2b(f"{root}:{cell}:{r}", digest_size=8), "little")`` as the
seed of :func:`numpy.random.default_rng`, so results do not depend on thread
count or platform.
"""
from __future__ import annotations

import hashlib
import logging
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import _kernels
from .model import LinkFunction, ModelSpec
from .specfun import c0_closed

log = logging.getLogger(__name__)

MAX_N = 14
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
_MAGIC = b"MBMFACT\0"
_VERSION = 1
_HEADER = struct.Struct("<8sIQd")


class SimulationError(RuntimeError):
    """Covariance could not be factored."""


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Lower Cholesky factor of the Gram matrix of ``X`` on ``u / 2^n``, ``u = 1..2^n``."""

    n: int
    lower_factor: np.ndarray
    jitter_used: float
    model_hash: str
    unit_variance: bool = False

    @property
    def grid(self) -> np.ndarray:
        return np.arange(1, 2**self.n + 1) / 2.0**self.n

    @property
    def size(self) -> int:
        return self.lower_factor.shape[0]


@dataclass(frozen=True, eq=False)
class SamplePath:
    n: int
    x_values: np.ndarray
    y_values: np.ndarray
    seed: int | None = None

    @property
    def t(self) -> np.ndarray:
        return np.arange(2**self.n + 1) / 2.0**self.n


def rep_seed(root_seed: int, cell_id: str, r: int) -> int:
    """Stable 64-bit seed for repetition ``r`` of ``cell_id``."""
    h = hashlib.blake2b(f"{root_seed}:{cell_id}:{r}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _scale_values(model: ModelSpec, t: np.ndarray, unit_variance: bool) -> np.ndarray:
    th = np.ascontiguousarray(model.scale(t), dtype=np.float64)
    if unit_variance:
        th = th / np.sqrt(c0_closed(2.0 * model.hurst(t)))
    return th


def gram_matrix(model: ModelSpec, unit_variance: bool = False, out=None, jitter: float = 0.0,
                n: int | None = None) -> np.ndarray:
    """Gram matrix of ``X`` on ``u / 2^n``, ``u = 1..2^n`` (lower triangle filled only)."""
    N = 2 ** (model.n if n is None else n)
    t = np.arange(1, N + 1) / float(N)
    h = np.ascontiguousarray(model.hurst(t), dtype=np.float64)
    th = _scale_values(model, t, unit_variance)
    if out is None:
        out = np.empty((N, N), dtype=np.float64)
    _kernels.fill_gram_lower(t, h, th, out, jitter)
    return out


_FACTOR_CACHE: dict[str, CovarianceFactor] = {}


def factor_digest(model: ModelSpec, unit_variance: bool = False, n: int | None = None) -> str:
    n = model.n if n is None else n
    key = f"{model.covariance_digest()}:{int(unit_variance)}:{n}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def build_covariance(model: ModelSpec, unit_variance: bool = False, cache_dir=None,
                     use_memory_cache: bool = True, n: int | None = None) -> CovarianceFactor:
    """Factor the Gram matrix of ``X``; escalates diagonal jitter on failure.

    Parameters
    ----------
    model : ModelSpec
    unit_variance : bool
        Rescale so that ``Var B_{H(t)}(t) = t^{2H(t)}`` (divides by ``sqrt(C0(2H(t)))``).
    cache_dir : path, optional
        Directory for the binary factor cache.
    n : int, optional
        Grid resolution overriding ``model.n`` (any ``n >= 0``; small grids are handy
        for checks).
    """
    n = model.n if n is None else int(n)
    if n > MAX_N:
        raise SimulationError(f"n={n} exceeds the desk-scale cap n <= {MAX_N}")
    if n < 0:
        raise SimulationError("n must be nonnegative")
    digest = factor_digest(model, unit_variance, n)
    if use_memory_cache and digest in _FACTOR_CACHE:
        return _FACTOR_CACHE[digest]
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"factor-{digest}.bin"
        if path.exists():
            fac = read_factor(path, n, digest, unit_variance)
            if use_memory_cache:
                _FACTOR_CACHE[digest] = fac
            return fac
    N = 2**n
    buf = np.empty((N, N), dtype=np.float64)
    maxdiag = None
    for step in JITTER_LADDER:
        gram_matrix(model, unit_variance, out=buf, n=n)
        if maxdiag is None:
            maxdiag = float(np.max(np.diagonal(buf)))
        jitter = step * maxdiag
        if jitter:
            buf[np.diag_indices(N)] += jitter
        try:
            # buf.T is Fortran-ordered and its upper triangle holds the filled entries
            U = linalg.cholesky(buf.T, lower=False, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError:
            log.info("Cholesky failed with jitter %.3g; escalating", jitter)
            continue
        L = U.T
        if not L.flags.c_contiguous:
            L = np.ascontiguousarray(L)
        fac = CovarianceFactor(n, L, jitter, digest, unit_variance)
        if path is not None:
            write_factor(path, fac)
        if use_memory_cache:
            _FACTOR_CACHE[digest] = fac
        return fac
    raise SimulationError("Gram matrix is not positive definite even at the largest jitter")


def clear_factor_cache() -> None:
    _FACTOR_CACHE.clear()


def write_factor(path, fac: CovarianceFactor) -> None:
    """Binary cache: header (magic, version, N, jitter) then the packed lower triangle, row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    L = fac.lower_factor
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, L.shape[0], fac.jitter_used))
        for i in range(L.shape[0]):
            fh.write(L[i, : i + 1].astype("<f8", copy=False).tobytes())
    tmp.replace(path)


def read_factor(path, n: int, digest: str = "", unit_variance: bool = False) -> CovarianceFactor:
    with open(path, "rb") as fh:
        magic, version, N, jitter = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise OSError(f"{path} is not a factor cache file (version {_VERSION})")
        if N != 2**n:
            raise OSError(f"{path} holds a factor of size {N}, expected {2**n}")
        packed = np.fromfile(fh, dtype="<f8")
    if packed.size != N * (N + 1) // 2:
        raise OSError(f"{path} is truncated")
    L = np.zeros((N, N))
    off = 0
    for i in range(N):
        L[i, : i + 1] = packed[off: off + i + 1]
        off += i + 1
    return CovarianceFactor(n, L, float(jitter), digest, unit_variance)


def _hidden_block(fac: CovarianceFactor, seeds) -> np.ndarray:
    N = fac.size
    Z = np.empty((N, len(seeds)))
    for c, s in enumerate(seeds):
        Z[:, c] = np.random.default_rng(s).standard_normal(N)
    X = np.zeros((len(seeds), N + 1))
    X[:, 1:] = (fac.lower_factor @ Z).T
    return X


def sample_path(factor: CovarianceFactor, link: LinkFunction | None = None, seed: int = 0) -> SamplePath:
    """One path ``X = L z`` with ``z ~ N(0, I)`` from ``default_rng(seed)``; ``Y = Phi(X)``."""
    x = _hidden_block(factor, [seed])[0]
    y = x.copy() if link is None or link.kind == "identity" else np.asarray(link(x), dtype=float)
    return SamplePath(factor.n, x, y, seed)


def sample_hidden(factor: CovarianceFactor, seeds, block: int = 64, threads: int = 1) -> np.ndarray:
    """Hidden paths for ``seeds`` as rows of an array of shape ``(len(seeds), 2^n + 1)``.

    Seeds are processed in fixed blocks so the output does not depend on ``threads``.
    """
    seeds = list(seeds)
    chunks = [seeds[i: i + block] for i in range(0, len(seeds), block)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda c: _hidden_block(factor, c), chunks))
    else:
        parts = [_hidden_block(factor, c) for c in chunks]
    if not parts:
        return np.zeros((0, factor.size + 1))
    return np.vstack(parts)


def fgn_autocovariance(H: float, N: int) -> np.ndarray:
    k = np.arange(N + 1, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def sample_fbm_circulant(H: float, n: int, seed: int, unit_variance: bool = False) -> SamplePath:
    """Constant-H fBm by circulant embedding of its increments.

    Scaled so ``Var X(t) = C0(2H) t^{2H}`` (or ``t^{2H}`` with ``unit_variance``).
    Falls back to the Cholesky sampler with a warning if the embedding has
    negative eigenvalues.
    """
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    N = 2**n
    r = fgn_autocovariance(H, N)
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(row).real
    amp = 1.0 if unit_variance else float(np.sqrt(c0_closed(2.0 * H)))
    if lam.min() < -1e-10 * lam.max():
        warnings.warn("circulant embedding is not nonnegative; using Cholesky", RuntimeWarning, stacklevel=2)
        from .model import ScaleFunction, constant_hurst

        fac = build_covariance(ModelSpec(constant_hurst(H), ScaleFunction(), n=n), unit_variance)
        return sample_path(fac, None, seed)
    lam = np.clip(lam, 0.0, None)
    M = row.size
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    w = np.fft.fft(np.sqrt(lam / M) * z)
    incr = w.real[:N] * (1.0 / N) ** H * amp
    x = np.concatenate([[0.0], np.cumsum(incr)])
    return SamplePath(n, x, x.copy(), seed)


def write_path_csv(path, sp: SamplePath, with_hidden: bool = False) -> None:
    cols = [sp.t, sp.y_values] + ([sp.x_values] if with_hidden else [])
    header = "t,y" + (",x" if with_hidden else "")
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")
