"""Command line entry point: single runs, repeated-run studies and sweeps.

Configuration is a JSON document::

    {
      "problem": {"name": "linear", "d": 1000, "pF_target": 1e-3},
      "ss": {"p0": 0.1, "N": 1000, "max_levels": 20},
      "scaling": {"mode": "adaptive", "sigma0": 1.0, "band": [0.3, 0.5], "step": 1.3},
      "seed": 0,
      "output": "out"
    }

``problem.name`` may also be ``"ball"``, or ``"external"`` together with
``"function": "package.module:callable"`` and a threshold ``"b"``.
"""

from __future__ import annotations

import argparse
import csv
import importlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bayes import ProductBetaDensity, summarize_posterior
from .errors import ConfigError, SubsetSimError
from .mathkernel import RngStream, beta_logpdf
from .model import PerformanceModel, ball_problem, linear_problem
from .sss import (
    ScalingConfig,
    SsConfig,
    SubsetRunResult,
    cov_vs_p0,
    optimal_spread_scan,
    run_subset_simulation,
)

log = logging.getLogger("subsetsim")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2, 3
GRID_POINTS = 512
EXACT_WINDOW_NATS = 30.0

_PROBLEM_KEYS = {"name", "d", "pF_target", "b", "function"}
_SS_KEYS = {"p0", "N", "max_levels"}
_SCALING_KEYS = {"mode", "band", "batch", "step", "sigma0", "sigmas", "family"}
_TOP_KEYS = {"problem", "ss", "scaling", "seed", "output", "threads"}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    problem: dict
    ss: SsConfig
    output: str = "out"
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.ss.master_seed

    def resolved(self) -> dict:
        """The full configuration with every default filled in.

        The output directory is left out so that identical inputs give
        byte-identical files wherever they are written.
        """
        sc = self.ss.scaling
        scaling = {"mode": sc.mode, "band": list(sc.band), "batch": sc.batch, "step": sc.step,
                   "family": sc.family}
        if sc.mode == "adaptive":
            scaling["sigma0"] = sc.sigma0
        else:
            scaling["sigmas"] = list(sc.sigmas)
        return {
            "problem": dict(self.problem),
            "ss": {"p0": self.ss.p0, "N": self.ss.n_samples, "max_levels": self.ss.max_levels},
            "scaling": scaling,
            "seed": self.ss.master_seed,
        }

    def with_seed(self, seed: int) -> "RunConfig":
        ss = SsConfig(self.ss.p0, self.ss.n_samples, self.ss.max_levels, self.ss.scaling, seed,
                      self.ss.threads)
        return RunConfig(self.problem, ss, self.output, self.raw)


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required field {where}.{key}")
    return section[key]


def parse_config(data: dict, seed: Optional[int] = None, output: Optional[str] = None,
                 threads: int = 1) -> RunConfig:
    """Validate a configuration document; every check happens before any simulation."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")
    problem = _require(data, "problem", "config")
    ss = _require(data, "ss", "config")
    if not isinstance(problem, dict) or not isinstance(ss, dict):
        raise ConfigError("problem and ss must be objects")
    _reject_unknown(problem, _PROBLEM_KEYS, "problem")
    _reject_unknown(ss, _SS_KEYS, "ss")

    name = _require(problem, "name", "problem")
    if name not in ("linear", "ball", "external"):
        raise ConfigError(f"problem.name must be linear, ball or external, got {name!r}")
    _require(problem, "d", "problem")
    if name == "external":
        _require(problem, "function", "problem")
        _require(problem, "b", "problem")
    elif "pF_target" not in problem and "b" not in problem:
        raise ConfigError("missing required field problem.pF_target (or problem.b)")

    scaling_raw = data.get("scaling", {})
    if not isinstance(scaling_raw, dict):
        raise ConfigError("scaling must be an object")
    _reject_unknown(scaling_raw, _SCALING_KEYS, "scaling")
    scaling_args = dict(scaling_raw)
    if "band" in scaling_args:
        scaling_args["band"] = tuple(scaling_args["band"])
    if "sigmas" in scaling_args:
        scaling_args["sigmas"] = tuple(scaling_args["sigmas"])

    master_seed = data.get("seed", 0) if seed is None else seed
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ss_cfg = SsConfig(
                p0=float(_require(ss, "p0", "ss")),
                n_samples=_require(ss, "N", "ss"),
                max_levels=int(ss.get("max_levels", 20)),
                scaling=ScalingConfig(**scaling_args),
                master_seed=int(master_seed),
                threads=threads,
            )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    out = output if output is not None else data.get("output", "out")
    cfg = RunConfig(problem=dict(problem), ss=ss_cfg, output=str(out), raw=data)
    build_model(cfg)  # surfaces problem errors now
    return cfg


def load_config(path, **overrides) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data, **overrides)


def build_model(cfg: RunConfig) -> PerformanceModel:
    prob = cfg.problem
    name, d = prob["name"], prob["d"]
    if name in ("linear", "ball"):
        factory = linear_problem if name == "linear" else ball_problem
        if "pF_target" in prob:
            return factory(d, float(prob["pF_target"]))
        model = factory(d, 0.5)
        model.threshold = float(prob["b"])
        model.exact_pf = None
        return model
    module_name, _, attr = str(prob["function"]).partition(":")
    try:
        func = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError, ValueError) as exc:
        raise ConfigError(f"cannot import performance function {prob['function']!r}") from exc
    return PerformanceModel(dimension=d, func=func, threshold=float(prob["b"]))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _clean(value):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list, rows: list, provenance: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(_clean(provenance), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if isinstance(v, float) and math.isnan(v) else _fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_text(obj: dict) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _provenance(cfg: RunConfig) -> dict:
    return {"config": cfg.resolved(), "seed": cfg.seed, "version": __version__}


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def level_rows(result: SubsetRunResult) -> list:
    rows = []
    for rec in result.levels:
        sched = ";".join(repr(float(s)) for s in rec.sigma_schedule)
        rows.append([rec.j, rec.conditioning_threshold, rec.threshold, rec.n, rec.n_samples,
                     rec.rho, rec.gamma, rec.evaluations, sched])
    return rows


def posterior_grid(summary, exact: bool) -> tuple[list, list]:
    lo = max(0.0, summary.mean * 1e-2)
    hi = min(1.0, summary.mean * 1e2)
    grid = np.geomspace(lo, hi, GRID_POINTS)
    with np.errstate(divide="ignore"):
        fan_log = beta_logpdf(grid, summary.fan)
    fan = np.exp(fan_log)
    header = ["p", "fan_density"]
    cols = [grid, fan]
    if exact:
        dens = np.full(grid.size, np.nan)
        # far tails need millions of series terms; those cells stay empty
        inner = (grid > 0) & (grid < 1) & (fan_log >= fan_log.max() - EXACT_WINDOW_NATS)
        dens[inner] = ProductBetaDensity(summary.levels).pdf(grid[inner], strict=False)
        header.insert(1, "exact_density")
        cols.insert(1, dens)
    return header, [list(r) for r in zip(*cols)]


def run_summary(cfg: RunConfig, result: SubsetRunResult, summary) -> dict:
    levels = [
        {
            "j": rec.j,
            "conditioning_threshold": rec.conditioning_threshold,
            "threshold": rec.threshold,
            "n": rec.n,
            "N": rec.n_samples,
            "rho": rec.rho,
            "gamma": rec.gamma,
            "evaluations": rec.evaluations,
            "sigma_schedule": list(rec.sigma_schedule),
        }
        for rec in result.levels
    ]
    return {
        **_provenance(cfg),
        "estimate": result.p_hat,
        "m": result.m,
        "converged": result.converged,
        "no_failure_observed": result.no_failure_observed,
        "total_evaluations": result.total_evaluations,
        "levels": levels,
        "posterior": summary.to_dict(),
        "exact_pF": build_model(cfg).exact_pf,
    }


def cmd_run(cfg: RunConfig, exact_posterior: bool = False) -> int:
    model = build_model(cfg)
    result = run_subset_simulation(model, cfg.ss)
    summary = summarize_posterior(result)
    out = Path(cfg.output)
    prov = _provenance(cfg)
    write_atomic(out / "run_summary.json", _json_text(run_summary(cfg, result, summary)))
    header = ["j", "conditioning_threshold", "threshold", "n", "N", "rho", "gamma", "evaluations",
              "sigma_schedule"]
    write_atomic(out / "levels.csv", _csv_text(header, level_rows(result), prov))
    g_header, g_rows = posterior_grid(summary, exact_posterior)
    write_atomic(out / "posterior_grid.csv", _csv_text(g_header, g_rows, prov))
    print(f"estimate {result.p_hat:.6g}  m={result.m}  posterior mean {summary.mean:.6g}  "
          f"cov {summary.cov:.4f}  evaluations {result.total_evaluations}")
    if not result.converged:
        print("warning: run stopped at max_levels before reaching the failure domain", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------


@dataclass
class StudyReport:
    seeds: list
    estimates: list
    posterior_covs: list
    evaluations: list
    ms: list
    converged: list
    failures: list

    @property
    def n_ok(self) -> int:
        return sum(1 for e in self.estimates if e is not None)

    @property
    def partial(self) -> bool:
        return bool(self.failures) or not all(self.converged)

    def _ok(self, values):
        return np.array([v for v in values if v is not None], dtype=float)

    @property
    def mean(self) -> float:
        est = self._ok(self.estimates)
        return float(est.mean()) if est.size else float("nan")

    @property
    def cov(self) -> float:
        est = self._ok(self.estimates)
        if est.size < 2 or est.mean() == 0:
            return float("nan")
        return float(est.std(ddof=1) / est.mean())

    @property
    def std_error(self) -> float:
        est = self._ok(self.estimates)
        return float(est.std(ddof=1) / math.sqrt(est.size)) if est.size > 1 else float("nan")

    @property
    def mean_posterior_cov(self) -> float:
        c = self._ok(self.posterior_covs)
        return float(c.mean()) if c.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "runs": len(self.seeds),
            "completed": self.n_ok,
            "partial": self.partial,
            "mean_estimate": self.mean,
            "cov_estimate": self.cov,
            "std_error": self.std_error,
            "mean_posterior_cov": self.mean_posterior_cov,
            "m_counts": {str(k): self.ms.count(k) for k in sorted(set(m for m in self.ms if m is not None))},
            "failures": self.failures,
        }


def study_seeds(master_seed: int, runs: int, same_seed: bool = False) -> list[int]:
    if same_seed:
        return [master_seed] * runs
    root = RngStream(master_seed, ("study",))
    return [root.child(i).derive_seed() for i in range(runs)]


def run_study(cfg: RunConfig, runs: int, same_seed: bool = False) -> StudyReport:
    if runs < 2:
        raise ConfigError("a study needs at least 2 runs")
    report = StudyReport([], [], [], [], [], [], [])
    for i, seed in enumerate(study_seeds(cfg.seed, runs, same_seed)):
        report.seeds.append(seed)
        try:
            res = run_subset_simulation(build_model(cfg), cfg.with_seed(seed).ss)
            post = summarize_posterior(res)
        except SubsetSimError as exc:
            log.warning("run %d (seed %d) failed: %s", i, seed, exc)
            report.failures.append({"run": i, "seed": seed, "error": str(exc)})
            for lst in (report.estimates, report.posterior_covs, report.evaluations, report.ms):
                lst.append(None)
            report.converged.append(False)
            continue
        report.estimates.append(res.p_hat)
        report.posterior_covs.append(post.cov)
        report.evaluations.append(res.total_evaluations)
        report.ms.append(res.m)
        report.converged.append(res.converged)
    return report


def cmd_study(cfg: RunConfig, runs: int, same_seed: bool = False) -> int:
    report = run_study(cfg, runs, same_seed)
    out = Path(cfg.output)
    prov = _provenance(cfg)
    write_atomic(out / "study_summary.json", _json_text({**prov, **report.to_dict()}))
    rows = [[i, s, e, c, m, ev, conv] for i, (s, e, c, m, ev, conv) in enumerate(zip(
        report.seeds, report.estimates, report.posterior_covs, report.ms, report.evaluations,
        report.converged))]
    rows = [[("" if v is None else v) for v in r] for r in rows]
    write_atomic(out / "study_runs.csv", _csv_text(
        ["run", "seed", "estimate", "posterior_cov", "m", "evaluations", "converged"], rows, prov))
    print(f"runs {len(report.seeds)}  mean {report.mean:.6g}  cov {report.cov:.4f}  "
          f"mean posterior cov {report.mean_posterior_cov:.4f}")
    if report.failures:
        print(f"warning: {len(report.failures)} run(s) failed; summary is partial", file=sys.stderr)
        return EXIT_RUNTIME
    if not all(report.converged):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def p0_sweep_table(pf: float, n_total: float, gamma_bars, p0_grid) -> tuple[list, dict]:
    p0_grid = np.asarray(p0_grid, dtype=float)
    if np.any((p0_grid <= pf) | (p0_grid >= 1)):
        raise ConfigError("p0 grid must lie inside (pF, 1)")
    rows, argmins = [], {}
    for gb in gamma_bars:
        delta = np.asarray(cov_vs_p0(pf, n_total, gb, p0_grid), dtype=float)
        best = int(np.argmin(delta))
        argmins[float(gb)] = float(p0_grid[best])
        for i, (p0, d) in enumerate(zip(p0_grid, delta)):
            rows.append([float(gb), float(p0), float(d), int(i == best)])
    return rows, argmins


def cmd_p0_sweep(args) -> int:
    if args.p0_grid:
        grid = [float(x) for x in args.p0_grid.split(",")]
    else:
        grid = np.round(np.arange(0.02, 0.81, 0.01), 10).tolist()
    gammas = [float(x) for x in args.gamma_bar.split(",")]
    rows, argmins = p0_sweep_table(args.pf, args.n_total, gammas, grid)
    prov = {"pF": args.pf, "N_T": args.n_total, "gamma_bar": gammas, "p0_grid": grid}
    text = _csv_text(["gamma_bar", "p0", "delta", "argmin"], rows, prov)
    if args.out:
        write_atomic(Path(args.out) / "p0_sweep.csv", text)
    else:
        sys.stdout.write(text)
    for gb, p in argmins.items():
        print(f"gamma_bar={gb:g}: argmin p0 = {p:g}", file=sys.stderr)
    return EXIT_OK


def cmd_sigma_scan(cfg: RunConfig, args) -> int:
    kind = cfg.problem["name"]
    if kind not in ("linear", "ball"):
        raise ConfigError("sigma-scan needs an analytic problem (linear or ball)")
    grid = [float(x) for x in args.sigmas.split(",")]
    rows, best = optimal_spread_scan(kind, int(cfg.problem["d"]), args.level, grid,
                                     n_samples=cfg.ss.n_samples, repetitions=args.repetitions,
                                     p0=cfg.ss.p0, seed=cfg.seed, family=cfg.ss.scaling.family)
    prov = {**_provenance(cfg), "level": args.level, "repetitions": args.repetitions}
    table = [[r.sigma, r.gamma, r.rho, r.gamma_se, r.n_valid, int(r.sigma == best)] for r in rows]
    text = _csv_text(["sigma", "gamma", "rho", "gamma_se", "n_valid", "argmin"], table, prov)
    write_atomic(Path(cfg.output) / f"sigma_scan_level{args.level}.csv", text)
    print(f"argmin sigma = {best:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subsetsim", description="Subset Simulation with Bayesian post-processing")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = one per CPU")

    p_run = sub.add_parser("run", help="single Subset Simulation run")
    common(p_run)
    p_run.add_argument("--exact-posterior", action="store_true", help="add the exact product density to the grid")

    p_study = sub.add_parser("study", help="repeated independent runs")
    common(p_study)
    p_study.add_argument("--runs", type=int, default=50)
    p_study.add_argument("--same-seed", action="store_true", help="reuse the master seed for every run")

    p_sweep = sub.add_parser("p0-sweep", help="c.o.v. as a function of p0")
    p_sweep.add_argument("--pf", type=float, default=1e-3)
    p_sweep.add_argument("--n-total", type=float, default=2000)
    p_sweep.add_argument("--gamma-bar", default="0,2,4,6,8,10", help="comma-separated list")
    p_sweep.add_argument("--p0-grid", help="comma-separated list (default 0.02..0.80)")
    p_sweep.add_argument("--out")

    p_scan = sub.add_parser("sigma-scan", help="correlation factor versus proposal spread at one level")
    common(p_scan)
    p_scan.add_argument("--level", type=int, default=1)
    p_scan.add_argument("--sigmas", default="0.2,0.4,0.6,0.8,1.0,1.2,1.5,2.0")
    p_scan.add_argument("--repetitions", type=int, default=10)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "p0-sweep":
            return cmd_p0_sweep(args)
        threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
        cfg = load_config(args.config, seed=args.seed, output=args.out, threads=threads)
        if args.command == "run":
            return cmd_run(cfg, args.exact_posterior)
        if args.command == "study":
            return cmd_study(cfg, args.runs, args.same_seed)
        return cmd_sigma_scan(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SubsetSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
