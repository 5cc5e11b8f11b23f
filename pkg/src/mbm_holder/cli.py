"""Command-line front end: ``mbm-holder <command> --config FILE [options]``.

Config files are YAML with ``version: 1``. Keys (all optional unless noted)::

    version: 1
    model:
      hurst: {kind: linear, params: [0.1, 0.8]}   # or {builtin: H1}
      theta: {kind: constant, params: [1.0]}
      phi: {kind: identity}                       # or {builtin: phi2}
      n: 13
    estimation:
      tau1: 0.1            # defaults to the profile's lower bound
      t0: [0.5]
      beta: null           # overrides of the automatic choice
      gamma: null
      wavelet: legendre2   # haar | legendre2
      midpoint_cells: false
      level: 0.9
      constants: model     # model | plug-in
      variance: as-written # as-written | consistent (CLT variance convention)
      a0_rule: global      # global | local
      t_grid: [0.1, 0.2]   # profile command
    table1: {phis: [phi1, phi2], hursts: [H1, H2, H3], t0: [0.3, 0.5, 0.7]}
    convergence: {n: [9, 10, 11, 12, 13]}
    input: {path: series.csv, column: y, resample: false}
    reps: 100
    root_seed: 0
    threads: 1
    unit_variance: false
    output: {dir: out, cache_dir: null, with_hidden: false}

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .estimator import (EstimationConfig, EstimationError, confidence_interval, estimate_H_from_path,
                        estimate_theta_sq, holder_profile, plug_in_bundle)
from .experiments import convergence, run_qq, run_table1
from .model import (HurstProfile, LinkFunction, ModelError, ModelSpec, ScaleFunction, builtin_hurst, builtin_link,
                    validate_model)
from .simulate import SamplePath, SimulationError, build_covariance, rep_seed, sample_path, write_path_csv
from .specfun import A0Error, ConstantsError, QuadratureError, cached_constants_bundle
from .wavelet import WaveletError, make_wavelet

log = logging.getLogger("mbm_holder")

COMMANDS = ("simulate", "estimate", "profile", "table1", "qq", "convergence", "constants")
CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid configuration."""


class IngestError(ValueError):
    """Malformed input series."""


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    version = cfg.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
    return cfg


def _hurst_from(section) -> HurstProfile:
    if section is None:
        return builtin_hurst("H1")
    if isinstance(section, str):
        return builtin_hurst(section)
    if "builtin" in section:
        return builtin_hurst(section["builtin"])
    return HurstProfile(section["kind"], tuple(section.get("params", ())), section.get("tau1"),
                        section.get("tau2"), section.get("name"))


def _theta_from(section) -> ScaleFunction:
    if section is None:
        return ScaleFunction()
    params = section.get("params", (1.0,))
    if section.get("kind") == "expression" and isinstance(params, str):
        params = (params,)
    return ScaleFunction(section.get("kind", "constant"), tuple(params), bool(section.get("flag_zeros", False)))


def _link_from(section) -> LinkFunction:
    if section is None:
        return LinkFunction()
    if isinstance(section, str):
        return builtin_link(section)
    if "builtin" in section:
        return builtin_link(section["builtin"])
    kind = section.get("kind", "identity")
    if kind == "custom":
        raise ConfigError("custom links cannot be described in a config file")
    return LinkFunction(kind)


def model_from_config(cfg: dict) -> ModelSpec:
    m = cfg.get("model", {}) or {}
    try:
        return ModelSpec(_hurst_from(m.get("hurst")), _theta_from(m.get("theta")), _link_from(m.get("phi")),
                         int(m.get("n", 13)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}") from None


def _as_list(v):
    if v is None:
        return []
    return list(v) if isinstance(v, (list, tuple)) else [v]


def estimation_configs(cfg: dict, model: ModelSpec, n: int | None = None) -> list[EstimationConfig]:
    est = cfg.get("estimation", {}) or {}
    psi = make_wavelet(est.get("wavelet", "legendre2"))
    tau1 = float(est.get("tau1", model.hurst.tau1))
    t0s = _as_list(est.get("t0", 0.5))
    return [EstimationConfig(float(t0), tau1, model.n if n is None else n, psi, est.get("beta"), est.get("gamma"),
                             bool(est.get("midpoint_cells", False))) for t0 in t0s]


def ingest_series(path, column: str | None = None, resample: bool = False) -> SamplePath:
    """Read an observed series (one row per ``u / 2^n``) from CSV.

    ``column`` defaults to ``y`` when present, else the last column. With
    ``resample`` a non-dyadic series is linearly interpolated onto the largest
    dyadic grid it covers.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if column is None:
        col = header.index("y") if "y" in header else len(header) - 1
    elif column in header:
        col = header.index(column)
    else:
        raise IngestError(f"column {column!r} not in header {header}")
    vals = np.empty(len(body))
    bad, missing = [], []
    for i, rec in enumerate(body, start=1):
        cell = rec[col].strip() if col < len(rec) else ""
        if cell == "":
            missing.append(i)
            continue
        try:
            vals[i - 1] = float(cell)
        except ValueError:
            bad.append(i)
            continue
        if not math.isfinite(vals[i - 1]):
            missing.append(i)
    if bad:
        raise IngestError(f"non-numeric values in data rows {bad[:20]}")
    if missing:
        raise IngestError(f"missing or NaN values in data rows {missing[:20]}")
    m = vals.size
    n = int(round(math.log2(m - 1))) if m > 1 else -1
    if n < 0 or 2**n + 1 != m:
        if not resample:
            raise IngestError(f"{m} rows is not 2^n + 1 for any n; pass resample to interpolate")
        n = int(math.floor(math.log2(m - 1)))
        vals = np.interp(np.linspace(0.0, m - 1.0, 2**n + 1), np.arange(m), vals)
    return SamplePath(n, np.full(vals.size, np.nan), vals, None)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _write_rows(path, rows, columns=None) -> None:
    columns = columns or list(rows[0].keys()) if rows else (columns or [])
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


class Runner:
    def __init__(self, cfg: dict, args):
        self.cfg = cfg
        self.args = args
        est = cfg.setdefault("estimation", {}) or {}
        cfg["estimation"] = est
        if args.wavelet:
            est["wavelet"] = args.wavelet
        if args.midpoint_cells:
            est["midpoint_cells"] = True
        self.seed = int(args.seed if args.seed is not None else cfg.get("root_seed", 0))
        self.threads = int(args.threads or cfg.get("threads") or os.cpu_count() or 1)
        out = cfg.get("output", {}) or {}
        self.out = Path(args.out or out.get("dir", "out"))
        self.cache_dir = out.get("cache_dir") or (self.out / "cache")
        self.with_hidden = bool(out.get("with_hidden", False))
        self.unit_variance = bool(args.unit_variance or cfg.get("unit_variance", False))
        self.reps = int(cfg.get("reps", 1))
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        self.level = float(est.get("level", 0.9))
        self.variance = est.get("variance", "as-written")
        if self.variance not in ("as-written", "consistent"):
            raise ConfigError(f"estimation.variance must be as-written or consistent, got {self.variance!r}")
        self.model = model_from_config(cfg)
        self.meta = {"version": __version__, "seed": self.seed, "wavelet": est.get("wavelet", "legendre2"),
                     "unit_variance": self.unit_variance}

    def prepare_out(self):
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            probe = self.out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise OSError(f"output directory {self.out} is not writable: {exc}") from exc

    def problems(self):
        for p in validate_model(self.model):
            log.warning("model assumption: %s", p)

    def bundle(self, t0):
        est = self.cfg["estimation"]
        cfg = estimation_configs(self.cfg, self.model)[0].at(t0)
        b, path, hit = cached_constants_bundle(self.cache_dir, t0, self.model, cfg.wavelet, cfg.c0_ratio,
                                               a0_rule=est.get("a0_rule", "global"))
        return b, path, hit

    # commands -----------------------------------------------------------

    def simulate(self):
        fac = build_covariance(self.model, self.unit_variance, cache_dir=self.cache_dir)
        cid = f"simulate:{self.model.covariance_digest()}"
        files = []
        for r in range(self.reps):
            sp = sample_path(fac, self.model.link, rep_seed(self.seed, cid, r))
            f = self.out / f"path_{r:04d}.csv"
            write_path_csv(f, sp, self.with_hidden)
            files.append(f.name)
        _write_json(self.out / "simulate.json", {**self.meta, "n": self.model.n, "reps": self.reps,
                                                  "jitter": fac.jitter_used, "factor": fac.model_hash,
                                                  "files": files})

    def _observed(self):
        inp = self.cfg.get("input")
        if inp:
            return ingest_series(inp["path"], inp.get("column"), bool(inp.get("resample", False))), False
        fac = build_covariance(self.model, self.unit_variance, cache_dir=self.cache_dir)
        return sample_path(fac, self.model.link, rep_seed(self.seed, "estimate", 0)), True

    def estimate(self):
        y, simulated = self._observed()
        mode = self.cfg["estimation"].get("constants", "model" if simulated else "plug-in")
        rows = []
        for cfg in estimation_configs(self.cfg, self.model, y.n):
            e = estimate_H_from_path(y, cfg)
            if mode == "model":
                b = self.bundle(cfg.t0)[0]
            else:
                b = plug_in_bundle(e, cfg)
            lo, hi = confidence_interval(e, b, self.level, self.variance)
            e = e.with_ci(lo, hi, b.variance(self.variance))
            row = e.to_row()
            try:
                row["theta_sq_hat"] = estimate_theta_sq(y, e, cfg.wavelet).theta_sq_hat
            except EstimationError as exc:
                row["theta_sq_hat"] = float("nan")
                log.warning("theta estimate at t0=%g failed: %s", cfg.t0, exc)
            row["constants"] = mode
            rows.append(row)
        _write_rows(self.out / "estimates.csv", rows)
        _write_json(self.out / "estimates.json", {**self.meta, "level": self.level, "n": y.n, "rows": rows})

    def profile(self):
        y, _ = self._observed()
        grid = self.cfg["estimation"].get("t_grid") or [round(0.05 * i, 10) for i in range(1, 20)]
        cfg = estimation_configs(self.cfg, self.model, y.n)[0]
        rows = [e.to_row() for e in holder_profile(y, grid, cfg)]
        _write_rows(self.out / "profile.csv", rows)
        _write_json(self.out / "profile.json", {**self.meta, "n": y.n, "rows": rows})

    def table1(self):
        t = self.cfg.get("table1", {}) or {}
        est = self.cfg["estimation"]
        table = run_table1(tuple(t.get("phis", ("phi1", "phi2"))), tuple(t.get("hursts", ("H1", "H2", "H3"))),
                           tuple(float(v) for v in t.get("t0", (0.3, 0.5, 0.7))), self.model.n,
                           int(self.cfg.get("reps", 100)), self.seed, est.get("wavelet", "haar"),
                           est.get("tau1"), bool(est.get("midpoint_cells", False)), self.unit_variance,
                           self.cache_dir, self.threads)
        table.to_csv(self.out / "table1.csv")
        (self.out / "table1.json").write_text(table.to_json() + "\n")

    def qq(self):
        cfg = estimation_configs(self.cfg, self.model)[0]
        b = self.bundle(cfg.t0)[0]
        reps = int(self.cfg.get("reps", 100))
        pts, z, h = run_qq(self.model, cfg, b, reps, self.seed, self.unit_variance, self.threads,
                           variance=self.variance)
        rows = [{"normal_quantile": float(q), "standardized": float(v)} for q, v in pts]
        _write_rows(self.out / "qq.csv", rows, ["normal_quantile", "standardized"])
        from scipy import stats

        _write_json(self.out / "qq.json", {**self.meta, "t0": cfg.t0, "reps": reps,
                                            "ctilde": b.variance(self.variance), "variance": self.variance,
                                            "ks": float(stats.kstest(z, "norm").statistic),
                                            "failures": int(np.sum(~np.isfinite(h)))})

    def convergence(self):
        c = self.cfg.get("convergence", {}) or {}
        cfg = estimation_configs(self.cfg, self.model)[0]
        rows = convergence(self.model.hurst, cfg.t0, [int(v) for v in c.get("n", (9, 10, 11, 12, 13))],
                           int(self.cfg.get("reps", 100)), self.seed, cfg.wavelet.kind, self.model.link,
                           self.cfg["estimation"].get("tau1"), self.unit_variance, self.threads, self.cache_dir)
        _write_rows(self.out / "convergence.csv", rows)

    def constants(self):
        out = []
        for t0 in _as_list(self.cfg["estimation"].get("t0", 0.5)):
            b, path, hit = self.bundle(float(t0))
            target = self.out / f"constants_t0_{float(t0):g}.json"
            target.write_text(b.to_json())
            out.append({"t0": float(t0), "cache": str(path), "hit": hit})
            log.info("constants at t0=%g: %s (%s)", t0, path, "cache hit" if hit else "computed")
        _write_json(self.out / "constants.json", {**self.meta, "bundles": out})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbm-holder", description="Hoelder exponent estimation for hidden mBm")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides root_seed)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--unit-variance", action="store_true", help="simulate with Var B(t) = t^{2H(t)}")
    p.add_argument("--midpoint-cells", action="store_true", help="midpoint rule for cell integrals")
    p.add_argument("--wavelet", choices=("haar", "legendre2"), default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        runner = Runner(cfg, args)
        runner.problems()
        runner.prepare_out()
        getattr(runner, args.command)()
    except (ConfigError, ModelError, A0Error, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, FileNotFoundError, PermissionError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QuadratureError, SimulationError, ConstantsError, EstimationError, WaveletError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
