"""Monte Carlo experiments: estimate tables, QQ data and convergence sweeps.

Paths for one Hurst profile are drawn once per repetition and shared by every
link and every ``t0`` (the seed's cell id is the profile label and ``n``).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .estimator import EstimationConfig, EstimationError, estimate_H_from_path, path_coefficients, standardize
from .model import HurstProfile, LinkFunction, ModelSpec, ScaleFunction, builtin_hurst, builtin_link
from .simulate import build_covariance, rep_seed, sample_hidden
from .specfun import ConstantsBundle
from .wavelet import make_wavelet

TABLE_T0 = (0.1, 0.3, 0.5, 0.7, 0.9)
TABLE_LINKS = ("phi1", "phi2", "phi3", "phi4")
TABLE_PROFILES = ("H1", "H2", "H3")
INVALID_FRACTION = 0.05


def cell_id(model: ModelSpec, unit_variance: bool = False) -> str:
    label = model.hurst.name or model.covariance_digest()
    theta = "" if model.scale.to_dict() == ScaleFunction().to_dict() else f":theta{model.covariance_digest()}"
    return f"{label}:n{model.n}{theta}" + (":uv" if unit_variance else "")


def simulate_pool(model: ModelSpec, reps: int, root_seed: int, factor=None, unit_variance: bool = False,
                  threads: int = 1, cache_dir=None) -> np.ndarray:
    """Hidden paths ``X`` for repetitions ``0..reps-1`` as rows."""
    if factor is None:
        factor = build_covariance(model, unit_variance, cache_dir=cache_dir)
    cid = cell_id(model, unit_variance)
    seeds = [rep_seed(root_seed, cid, r) for r in range(reps)]
    return sample_hidden(factor, seeds, threads=threads)


def estimate_on_paths(Y: np.ndarray, configs, threads: int = 1) -> np.ndarray:
    """``h_hat`` for every path (rows of ``Y``) and config; ``nan`` marks a failure.

    Configs with equal ``(n, J_n, wavelet, midpoint)`` share coefficient sets.
    """
    configs = list(configs)

    def one(r):
        y = Y[r]
        cache = {}
        out = np.full(len(configs), np.nan)
        for c, cfg in enumerate(configs):
            key = (cfg.n, cfg.J_n, id(cfg.wavelet), cfg.midpoint)
            if key not in cache:
                cache[key] = path_coefficients(y, cfg)
            try:
                out[c] = estimate_H_from_path(y, cfg, cache[key]).h_hat
            except EstimationError:
                pass
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, range(Y.shape[0])))
    else:
        rows = [one(r) for r in range(Y.shape[0])]
    return np.array(rows).T.reshape(len(configs), Y.shape[0])


def estimate_pool(model: ModelSpec, configs, reps: int, root_seed: int, factor=None, unit_variance=False,
                  threads: int = 1) -> np.ndarray:
    """Simulate ``reps`` paths of ``model`` and estimate at every config."""
    X = simulate_pool(model, reps, root_seed, factor, unit_variance, threads)
    Y = X if model.link.kind == "identity" else model.link(X)
    return estimate_on_paths(Y, configs, threads)


def summarize(values) -> dict:
    """Mean/std over finite values (std with ``ddof=1``; 0 and a flag for one value)."""
    v = np.asarray(values, dtype=float)
    ok = v[np.isfinite(v)]
    res = {"reps_ok": int(ok.size), "failures": int(v.size - ok.size)}
    if ok.size == 0:
        res.update(mean=float("nan"), std=float("nan"), degenerate=True)
    elif ok.size == 1:
        res.update(mean=float(ok[0]), std=0.0, degenerate=True)
    else:
        res.update(mean=float(np.mean(ok)), std=float(np.std(ok, ddof=1)), degenerate=False)
    res["valid"] = res["failures"] <= INVALID_FRACTION * v.size
    return res


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("phi", "hurst_profile", "t0", "true_H", "mean", "std", "reps", "n", "failures", "valid",
               "degenerate")

    def cell(self, phi, hurst, t0) -> dict:
        for r in self.rows:
            if r["phi"] == phi and r["hurst_profile"] == hurst and math.isclose(r["t0"], t0):
                return r
        raise KeyError((phi, hurst, t0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=self.COLUMNS, extrasaction="ignore")
            wr.writeheader()
            for r in self.rows:
                wr.writerow(r)

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": self.rows}, indent=2, sort_keys=True)


def run_table1(phis=("phi1", "phi2"), hursts=TABLE_PROFILES, t0s=(0.3, 0.5, 0.7), n: int = 13, reps: int = 100,
               root_seed: int = 0, wavelet: str = "haar", tau1: float | None = None, midpoint: bool = False,
               unit_variance: bool = False, cache_dir=None, threads: int = 1, keep_samples: bool = False):
    """Mean/std of ``h_hat`` over ``reps`` paths for each (link, profile, t0) cell.

    One covariance factor per profile is reused for all links and repetitions.
    With ``keep_samples`` the raw estimates are stored under ``metadata["samples"]``.
    """
    for p in phis:
        if p.lower() not in TABLE_LINKS:
            raise ValueError(f"link {p!r} is not one of {TABLE_LINKS}")
    for h in hursts:
        if h.upper() not in TABLE_PROFILES:
            raise ValueError(f"profile {h!r} is not one of {TABLE_PROFILES}")
    for t0 in t0s:
        if not any(math.isclose(t0, x) for x in TABLE_T0):
            raise ValueError(f"t0={t0} is not one of {TABLE_T0}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    psi = make_wavelet(wavelet)
    table = ResultTable(metadata={"seed": root_seed, "wavelet": wavelet, "version": __version__, "n": n,
                                  "reps": reps, "midpoint": midpoint, "unit_variance": unit_variance})
    samples = {}
    for hname in hursts:
        prof = builtin_hurst(hname)
        model = ModelSpec(prof, n=n)
        t1 = prof.tau1 if tau1 is None else tau1
        configs = [EstimationConfig(t0, t1, n, psi, midpoint=midpoint) for t0 in t0s]
        X = simulate_pool(model, reps, root_seed, unit_variance=unit_variance, threads=threads, cache_dir=cache_dir)
        for pname in phis:
            link = builtin_link(pname)
            Y = X if link.kind == "identity" else link(X)
            H = estimate_on_paths(Y, configs, threads)
            for c, t0 in enumerate(t0s):
                s = summarize(H[c])
                table.rows.append({"phi": pname.lower(), "hurst_profile": prof.name, "t0": t0,
                                   "true_H": prof(t0), "mean": s["mean"], "std": s["std"], "reps": s["reps_ok"],
                                   "n": n, "failures": s["failures"], "valid": s["valid"],
                                   "degenerate": s["degenerate"]})
                samples[(pname.lower(), prof.name, t0)] = H[c]
        table.metadata.setdefault("J_n", {})[prof.name] = configs[0].J_n
    if keep_samples:
        table.metadata["samples"] = samples
    return table


def qq_points(standardized) -> np.ndarray:
    """Rows ``(normal quantile, sorted sample)`` at plotting positions ``(i - 1/2) / m``."""
    z = np.sort(np.asarray(standardized, dtype=float))
    m = z.size
    q = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return np.column_stack([q, z])


def run_qq(model: ModelSpec, config: EstimationConfig, bundle: ConstantsBundle, reps: int = 100,
           root_seed: int = 0, unit_variance: bool = False, threads: int = 1, h_hats=None,
           variance: str = "as-written"):
    """QQ data for the standardized estimates; returns ``(points, standardized, h_hats)``."""
    if reps < 100:
        raise ValueError(f"QQ data needs reps >= 100, got {reps}")
    if h_hats is None:
        h_hats = estimate_pool(model, [config], reps, root_seed, unit_variance=unit_variance, threads=threads)[0]
    h_hats = np.asarray(h_hats, dtype=float)
    ok = h_hats[np.isfinite(h_hats)]
    z = standardize(ok, model.hurst(config.t0), config.J_n, config.epsilon(config.J_n), bundle.variance(variance))
    return qq_points(z), z, h_hats


def convergence(hurst: HurstProfile, t0: float, n_values, reps: int = 100, root_seed: int = 0,
                wavelet: str = "legendre2", link: LinkFunction | None = None, tau1: float | None = None,
                unit_variance: bool = False, threads: int = 1, cache_dir=None) -> list[dict]:
    """Mean, std and RMSE of ``h_hat`` at ``t0`` as the resolution ``n`` grows."""
    psi = make_wavelet(wavelet)
    link = link or LinkFunction()
    t1 = hurst.tau1 if tau1 is None else tau1
    out = []
    for n in n_values:
        model = ModelSpec(hurst, ScaleFunction(), link, n)
        cfg = EstimationConfig(t0, t1, n, psi)
        X = simulate_pool(model, reps, root_seed, unit_variance=unit_variance, threads=threads, cache_dir=cache_dir)
        Y = X if link.kind == "identity" else link(X)
        H = estimate_on_paths(Y, [cfg], threads)[0]
        s = summarize(H)
        ok = H[np.isfinite(H)]
        rmse = float(np.sqrt(np.mean((ok - hurst(t0)) ** 2))) if ok.size else float("nan")
        out.append({"n": n, "J_n": cfg.J_n, "t0": t0, "true_H": hurst(t0), "mean": s["mean"], "std": s["std"],
                    "rmse": rmse, "reps": s["reps_ok"], "failures": s["failures"]})
    return out
