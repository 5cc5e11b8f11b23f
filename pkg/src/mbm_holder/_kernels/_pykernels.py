"""Numpy implementations of the compiled kernels (same signatures)."""
import numpy as np
from scipy.special import gamma

_ROW_BLOCK = 256


def _c0(alpha):
    return 2.0 * np.pi / (gamma(alpha + 1.0) * np.sin(np.pi * alpha / 2.0))


def fill_gram_lower(t, h, theta, out, jitter=0.0):
    t = np.ascontiguousarray(t, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    n = t.shape[0]
    if out.shape != (n, n):
        raise ValueError("out must be square with side len(t)")
    # row blocks keep temporaries at O(block * n)
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        ti = t[start:stop, None]
        a = h[start:stop, None] + h[None, :stop]
        blk = theta[start:stop, None] * theta[None, :stop] * 0.5 * _c0(a) * (
            np.abs(ti) ** a + np.abs(t[None, :stop]) ** a - np.abs(ti - t[None, :stop]) ** a)
        rows = np.arange(start, stop)
        mask = np.arange(stop)[None, :] <= rows[:, None]
        out[start:stop, :stop] = np.where(mask, blk, out[start:stop, :stop])
        out[rows, rows] += jitter
    return out


def block_coefficients(dy, w, nblocks, scale):
    dy = np.asarray(dy, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    m = dy.shape[0] // nblocks
    if w.shape[0] > m:
        raise ValueError("weight vector longer than block")
    return scale * (dy[: nblocks * m].reshape(nblocks, m)[:, : w.shape[0]] @ w)
