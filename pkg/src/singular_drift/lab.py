"""Statistical studies: convergence in law along mollified drifts, invariance
of the virtual solution under the damping parameter, and consistency with the
direct simulation when the drift is smooth.

Every study is a pure function of an ExperimentConfig; results land in
results/<digest>/ with a JSON report, RFC-4180 CSV tables, terminal-sample
binaries, and a manifest of file digests, so reruns are byte-reproducible
(wall-clock timings live only in the report).
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .spectral import GridSpec, TimeField, save_time_field
from .drifts import DriftSpec, KappaRegion, assumption_check, generate, mollified_sequence, pick_kappa
from .kolmogorov import PdeConfig, calibrate_lambda, solve_fwd, to_backward
from .zvonkin import make_context
from .sde import PathEnsemble, SimConfig, simulate_classical, simulate_y, virtual_x

__all__ = [
    "ExperimentConfig",
    "StudyReport",
    "wasserstein1",
    "ks_stat",
    "bootstrap_ci",
    "kendall_trend",
    "environment_fingerprint",
    "config_digest",
    "prepare_transform",
    "study_mollify",
    "study_lambda",
    "study_smooth_consistency",
    "REPORT_TIMES",
]

REPORT_TIMES = (0.25, 0.5, 0.75, 1.0)   # fractions of the horizon


# --- sample statistics ----------------------------------------------------------


def wasserstein1(a, b) -> float:
    """Exact 1-d W1 between empirical laws.

    Equal sample counts: mean absolute difference of the sorted samples.
    Unequal counts fall back to linear quantile interpolation on the common
    plotting positions.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    k = min(a.size, b.size)
    qs = (np.arange(k) + 0.5) / k
    qa = np.quantile(a, qs, method="linear")
    qb = np.quantile(b, qs, method="linear")
    return float(np.mean(np.abs(qa - qb)))


def ks_stat(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def bootstrap_ci(a, b, n_boot: int = 1000, seed: int = 0,
                 level: float = 0.95) -> tuple:
    """Percentile bootstrap CI for W1(a, b) with paired index resampling."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("paired bootstrap needs equal sample counts")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    n = a.size
    for i in range(n_boot):
        idx = rng.integers(0, n, n)
        vals[i] = np.mean(np.abs(np.sort(a[idx]) - np.sort(b[idx])))
    tail = 0.5 * (1.0 - level)
    return float(np.quantile(vals, tail)), float(np.quantile(vals, 1.0 - tail))


def kendall_trend(levels, values) -> dict:
    """Kendall tau of values against levels with a one-sided decreasing test."""
    tau, p_two = stats.kendalltau(levels, values)
    p_one = 0.5 * p_two if tau < 0 else 1.0 - 0.5 * p_two
    return {"tau": float(tau), "p_one_sided": float(p_one),
            "decreasing_at_5pct": bool(tau < 0 and p_one < 0.05)}


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a study needs; studies are pure functions of this record."""

    name: str
    drift: DriftSpec
    dimension: int = 1
    modes: int = 256
    period: float = 2.0 * np.pi
    horizon: float = 1.0
    pde_nodes: int = 128
    q: float = 3.0
    delta: float | None = None      # None: canonical midpoint choice
    p: float | None = None
    rho: float | None = None
    tol: float = 1e-9
    max_iter: int = 200
    product_tol: float = 2.0
    lam: float | None = None        # None: calibrate by doubling
    inverse_tol: float = 1e-9       # point inversion tolerance during simulation
    x0: tuple = (0.0,)
    steps: int = 128
    paths: int = 10000
    seed: int = 1234
    n_list: tuple = (2, 4, 8, 16, 32)
    lambda_list: tuple | None = None
    steps_list: tuple = (250, 500, 1000)
    consistency_paths: int | None = None
    out_dir: str | None = None
    note: str = ""                  # free-form; never feeds seeds or results

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "steps_list", tuple(int(s) for s in self.steps_list))
        if self.lambda_list is not None:
            object.__setattr__(self, "lambda_list",
                               tuple(float(l) for l in self.lambda_list))
        if len(self.x0) != self.dimension:
            raise ValueError("x0 must have `dimension` coordinates")

    def grid(self) -> GridSpec:
        return GridSpec(self.dimension, self.modes, self.period)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drift"] = self.drift.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["drift"] = DriftSpec.from_dict(d["drift"])
        for key in ("x0", "n_list", "steps_list"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("lambda_list") is not None:
            d["lambda_list"] = tuple(d["lambda_list"])
        return ExperimentConfig(**d)


def config_digest(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def environment_fingerprint() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "package": __version__,
    }


@dataclass
class StudyReport:
    study: str
    digest: str
    config: dict
    environment: dict
    pipeline: dict            # assumption norms, exponents, lambda trace, solver stats
    levels: list              # per-level dict rows
    trend: dict
    floor: float
    timings: dict
    notes: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# --- shared pipeline -------------------------------------------------------------


def prepare_transform(cfg: ExperimentConfig, drift: TimeField | None = None) -> dict:
    """Drift -> admissibility -> exponents -> (calibrated) solve -> transform.

    Returns a bundle with the drift b, PdeConfig, lambda, trace, backward u,
    TransformContext, and the solver report.
    """
    t0 = time.perf_counter()
    grid = cfg.grid()
    b = drift if drift is not None else generate(cfg.drift, grid, cfg.horizon, cfg.pde_nodes)
    report = assumption_check(b, cfg.drift.beta, cfg.q)
    if cfg.delta is None or cfg.p is None:
        delta, p = pick_kappa(KappaRegion(cfg.drift.beta, cfg.q, cfg.dimension))
    else:
        delta, p = cfg.delta, cfg.p
    pde = PdeConfig(beta=cfg.drift.beta, delta=delta, p=p, q=cfg.q, rho=cfg.rho,
                    tol=cfg.tol, max_iter=cfg.max_iter, product_tol=cfg.product_tol)
    if cfg.lam is None:
        lam, trace = calibrate_lambda(b, pde)
    else:
        lam, trace = float(cfg.lam), []
    v, solve_report = solve_fwd(b, lam, pde)
    u = to_backward(v)
    ctx = make_context(u, inverse_tol=cfg.inverse_tol)
    return {
        "grid": grid,
        "b": b,
        "assumption": report,
        "pde": pde,
        "lam": lam,
        "trace": trace,
        "u": u,
        "ctx": ctx,
        "solve_report": solve_report,
        "prepare_seconds": time.perf_counter() - t0,
    }


def _marginal(ens: PathEnsemble, frac: float, coord: int = 0) -> np.ndarray:
    return ens.at_time(frac * ens.config.horizon)[:, coord]


def _sim_config(cfg: ExperimentConfig, lam: float, **over) -> SimConfig:
    kw = dict(x0=cfg.x0, horizon=cfg.horizon, steps=cfg.steps, paths=cfg.paths,
              seed=cfg.seed, lam=lam)
    kw.update(over)
    return SimConfig(**kw)


def _pipeline_summary(bundle, cfg: ExperimentConfig) -> dict:
    rep = bundle["assumption"]
    solve = bundle["solve_report"]
    return {
        "drift_norm": rep.sup_norm,
        "drift_norm_refinement_change": rep.refinement_change,
        "beta": cfg.drift.beta,
        "q": cfg.q,
        "delta": bundle["pde"].delta,
        "p": bundle["pde"].p,
        "lambda": bundle["lam"],
        "lambda_trace": [list(t) for t in bundle["trace"]],
        "rho": solve.rho,
        "picard_iterations": solve.iterations,
        "picard_ratios": list(solve.ratios),
        "gradient_bound": bundle["ctx"].gradient_bound,
    }


# --- studies -----------------------------------------------------------------------


def study_mollify(cfg: ExperimentConfig) -> StudyReport:
    """W1 between the virtual solution and classical solutions driven by
    mollified drifts, along an increasing mollification ladder."""
    timings = {}
    bundle = prepare_transform(cfg)
    timings["prepare"] = bundle["prepare_seconds"]

    lam = bundle["lam"]
    sim = _sim_config(cfg, lam)
    t0 = time.perf_counter()
    x_virtual = virtual_x(bundle["ctx"], simulate_y(bundle["ctx"], sim))
    timings["virtual"] = time.perf_counter() - t0

    smoothed = mollified_sequence(bundle["b"], cfg.n_list)
    levels = []
    t0 = time.perf_counter()
    terminal_w1 = []
    last_classical = None
    for n, b_n in zip(cfg.n_list, smoothed):
        x_n = simulate_classical(b_n, sim, label=f"classical-n{n}")
        last_classical = b_n
        row = {"level": int(n)}
        for frac in REPORT_TIMES:
            row[f"w1_t{frac:g}"] = wasserstein1(_marginal(x_n, frac), _marginal(x_virtual, frac))
        lo, hi = bootstrap_ci(_marginal(x_n, 1.0), _marginal(x_virtual, 1.0),
                              n_boot=1000, seed=cfg.seed + int(n))
        row["ci_lo"], row["ci_hi"] = lo, hi
        row["ks_terminal"] = ks_stat(_marginal(x_n, 1.0), _marginal(x_virtual, 1.0))
        terminal_w1.append(row[f"w1_t{1.0:g}"])
        levels.append(row)
    timings["classical_ladder"] = time.perf_counter() - t0

    # sampling floor: same law, fresh noise, cheapest honest reference
    t0 = time.perf_counter()
    floor_sim = replace(sim, seed=cfg.seed + 10_000)
    x_floor = simulate_classical(last_classical, floor_sim, label="floor")
    x_base = simulate_classical(last_classical, sim, label="floor-base")
    floor = wasserstein1(_marginal(x_floor, 1.0), _marginal(x_base, 1.0))
    timings["floor"] = time.perf_counter() - t0

    trend = kendall_trend(list(cfg.n_list), terminal_w1)
    report = StudyReport(
        study="mollify", digest=config_digest(cfg), config=cfg.to_dict(),
        environment=environment_fingerprint(),
        pipeline=_pipeline_summary(bundle, cfg),
        levels=levels, trend=trend, floor=floor, timings=timings,
        notes=cfg.note,
    )
    _persist(cfg, report, bundle)
    return report


def study_lambda(cfg: ExperimentConfig) -> StudyReport:
    """Invariance of the virtual solution's law under the damping parameter."""
    timings = {}
    bundle = prepare_transform(cfg)
    timings["prepare"] = bundle["prepare_seconds"]
    lam0 = bundle["lam"]
    lams = list(cfg.lambda_list) if cfg.lambda_list else [lam0, 2.0 * lam0]

    marginals = {}
    t0 = time.perf_counter()
    for lam in lams:
        if lam == lam0:
            ctx = bundle["ctx"]
        else:
            v, _ = solve_fwd(bundle["b"], lam, bundle["pde"])
            ctx = make_context(to_backward(v))
        sim = _sim_config(cfg, lam)
        x = virtual_x(ctx, simulate_y(ctx, sim))
        marginals[lam] = {frac: _marginal(x, frac) for frac in REPORT_TIMES}
    timings["simulations"] = time.perf_counter() - t0

    # floor: re-run the base lambda with fresh noise
    t0 = time.perf_counter()
    sim_floor = _sim_config(cfg, lam0, seed=cfg.seed + 10_000)
    x_floor = virtual_x(bundle["ctx"], simulate_y(bundle["ctx"], sim_floor))
    floor = wasserstein1(_marginal(x_floor, 1.0), marginals[lam0][1.0])
    timings["floor"] = time.perf_counter() - t0

    levels = []
    for i in range(len(lams)):
        for j in range(i + 1, len(lams)):
            row = {"lambda_a": lams[i], "lambda_b": lams[j]}
            for frac in REPORT_TIMES:
                row[f"w1_t{frac:g}"] = wasserstein1(marginals[lams[i]][frac],
                                                    marginals[lams[j]][frac])
            row["within_3_floors"] = bool(row[f"w1_t{1.0:g}"] <= 3.0 * floor)
            levels.append(row)

    report = StudyReport(
        study="lambda", digest=config_digest(cfg), config=cfg.to_dict(),
        environment=environment_fingerprint(),
        pipeline=_pipeline_summary(bundle, cfg),
        levels=levels, trend={}, floor=floor, timings=timings, notes=cfg.note,
    )
    _persist(cfg, report, bundle)
    return report


def study_smooth_consistency(cfg: ExperimentConfig) -> StudyReport:
    """Direct vs virtual route for a smooth drift on shared Brownian paths.

    Runs the pair at each step count in cfg.steps_list with nested noise, so
    the pathwise deviation is measured along one Brownian path per seed.
    """
    if cfg.drift.family != "smooth-test":
        raise ValueError("consistency study expects the smooth-test family")
    timings = {}
    bundle = prepare_transform(cfg)
    timings["prepare"] = bundle["prepare_seconds"]
    lam = bundle["lam"]
    paths = cfg.consistency_paths or cfg.paths
    base = max(cfg.steps_list)

    levels = []
    deviations = []
    finest = None
    t0 = time.perf_counter()
    for steps in sorted(cfg.steps_list):
        sim = _sim_config(cfg, lam, steps=steps, base_steps=base, paths=paths)
        x_direct = simulate_classical(bundle["b"], sim, label=f"direct-{steps}")
        x_virt = virtual_x(bundle["ctx"], simulate_y(bundle["ctx"], sim))
        dev = float(np.max(np.linalg.norm(
            np.asarray(x_direct.states) - np.asarray(x_virt.states), axis=2)))
        w1_term = wasserstein1(_marginal(x_direct, 1.0), _marginal(x_virt, 1.0))
        levels.append({"steps": steps, "pathwise_dev": dev, "w1_terminal": w1_term})
        deviations.append(dev)
        if steps == base:
            finest = (x_direct, x_virt, sim)
    timings["pairs"] = time.perf_counter() - t0

    for i in range(1, len(levels)):
        levels[i]["dev_ratio"] = deviations[i] / deviations[i - 1]

    t0 = time.perf_counter()
    x_d, x_v, sim_base = finest
    sim_floor = replace(sim_base, seed=cfg.seed + 10_000)
    x_floor = simulate_classical(bundle["b"], sim_floor, label="floor")
    floor = wasserstein1(_marginal(x_floor, 1.0), _marginal(x_d, 1.0))
    timings["floor"] = time.perf_counter() - t0

    report = StudyReport(
        study="consistency", digest=config_digest(cfg), config=cfg.to_dict(),
        environment=environment_fingerprint(),
        pipeline=_pipeline_summary(bundle, cfg),
        levels=levels, trend={}, floor=floor, timings=timings, notes=cfg.note,
    )
    _persist(cfg, report, bundle)
    return report


# --- persistence --------------------------------------------------------------------


def _persist(cfg: ExperimentConfig, report: StudyReport, bundle) -> Path | None:
    if cfg.out_dir is None:
        return None
    root = Path(cfg.out_dir) / report.digest
    root.mkdir(parents=True, exist_ok=True)

    (root / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))

    csv_path = root / "levels.csv"
    if report.levels:
        cols = sorted({k for row in report.levels for k in row})
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\r\n")
            writer.writeheader()
            for row in report.levels:
                writer.writerow(row)

    save_time_field(bundle["b"], root / "drift.bin", description="drift",
                    extra={"seed": cfg.drift.seed, "spec": cfg.drift.to_dict()})
    save_time_field(bundle["u"], root / "u.bin", description="backward solution")

    manifest = {
        "study": report.study,
        "digest": report.digest,
        "seeds": {"master": cfg.seed, "drift": cfg.drift.seed},
        "environment": report.environment,
        "files": {},
    }
    for f in sorted(root.iterdir()):
        if f.name == "manifest.json":
            continue
        manifest["files"][f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root
