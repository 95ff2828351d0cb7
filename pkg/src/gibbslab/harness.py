"""Experiment runner: YAML configs, per-cell seeding, resource guards, CSV and JSON reports.

A run is a list of tasks; each task expands into independent cells that
may execute in a process pool. Every cell draws randomness from a
generator keyed by (seed, task, cell index), so results do not depend on
scheduling, and report files contain no timestamps, so equal configs give
byte-identical outputs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .algebra import gibbs
from .chain import Region, make_model
from .curves import CSV_HEADER
from .gapanalysis import ResourceError, superop_bytes

SCHEMA_VERSION = 1
TASKS = ("gap-scan", "clustering-scan", "truncation-scan", "lr-scan", "adiabatic", "identity-suite")
DEFAULT_BUDGET = 2 * 1024**3

DEFAULT_TOLERANCES = {
    "fixed_point": 1e-8,
    "detailed_balance": 1e-8,
    "dirichlet": 1e-10,
    "routes": 1e-8,
    "projective": 1e-9,
    "discriminant": 1e-8,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ModelBlock:
    name: str = "tfim"
    n: int = 2
    q: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LindbladBlock:
    beta: float = 1.0
    sigma: float | None = None
    weight: str = "metropolis"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock = ModelBlock()
    lindblad: LindbladBlock = LindbladBlock()
    tasks: tuple = ()
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str = "out"
    seed: int = 0
    budget_bytes: int = DEFAULT_BUDGET
    jobs: int = 1

    def task(self, name: str) -> dict | None:
        for t in self.tasks:
            if t["name"] == name:
                return t
        return None


TASK_KEYS = {
    "gap-scan": {"ns", "betas", "weights", "model", "n_max"},
    "clustering-scan": {"n", "beta", "models", "distances", "widths", "island", "buffers", "quantities"},
    "truncation-scan": {"n", "beta", "models", "region", "buffers", "k_site", "k_buffers"},
    "lr-scan": {"n", "beta", "models", "a_len", "b_lens", "times"},
    "adiabatic": {"n", "beta_min", "beta_target", "steps", "weight", "model", "threshold", "prescan_points"},
    "identity-suite": {"ns", "betas", "weights", "models", "seeds", "n_ops"},
}


# sizes that make each task meaningful when no config file is given
TASK_DEFAULTS = {
    "gap-scan": {"ns": [2, 3, 4], "betas": [0.2, 1.0, 2.0], "weights": ["metropolis", "gaussian"]},
    "clustering-scan": {"n": 6, "models": ["tfim", "random"]},
    "truncation-scan": {"n": 5, "models": ["tfim", "random"], "region": [3], "buffers": [0, 1, 2]},
    "lr-scan": {"n": 5, "a_len": 1, "b_lens": [1, 2, 3], "models": ["tfim", "random"]},
    "adiabatic": {"n": 2, "steps": [100, 200, 400]},
    "identity-suite": {"ns": [2, 3], "betas": [0.2, 1.0, 2.0], "weights": ["metropolis", "gaussian"]},
}


def default_config(task: str) -> "ExperimentConfig":
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    return parse_config({"tasks": [{"name": task, **TASK_DEFAULTS[task]}]})


def _block(cls, data, where: str):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return cls(**data)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    top = {"model", "lindblad", "tasks", "tolerances", "out", "seed", "budget_bytes", "jobs"}
    extra = set(data) - top
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    tasks = []
    for i, t in enumerate(data.get("tasks") or []):
        if isinstance(t, str):
            t = {"name": t}
        if not isinstance(t, dict) or t.get("name") not in TASKS:
            raise ConfigError(f"task {i}: name must be one of {TASKS}")
        bad = set(t) - TASK_KEYS[t["name"]] - {"name"}
        if bad:
            raise ConfigError(f"task {t['name']}: unknown keys {sorted(bad)}")
        tasks.append(dict(t))
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in (data.get("tolerances") or {}).items():
        if k not in tol:
            raise ConfigError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    cfg = ExperimentConfig(
        _block(ModelBlock, data.get("model"), "model"),
        _block(LindbladBlock, data.get("lindblad"), "lindblad"),
        tuple(tasks),
        tol,
        str(data.get("out", "out")),
        int(data.get("seed", 0)),
        int(data.get("budget_bytes", DEFAULT_BUDGET)),
        int(data.get("jobs", 1)),
    )
    if cfg.lindblad.weight not in ("metropolis", "gaussian"):
        raise ConfigError(f"unknown weight {cfg.lindblad.weight!r}")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(yaml.safe_load(fh))


# ---------------------------------------------------------------------------
# seeding and guards


def cell_rng(seed: int, task: str, cell: int) -> np.random.Generator:
    """Independent stream for one cell; the key never depends on execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), TASKS.index(task), int(cell)]))


def check_budget(n: int, q: int, budget: int) -> None:
    need = superop_bytes(n, q)
    if need > budget:
        fit = max((m for m in range(1, n) if superop_bytes(m, q) <= budget), default=0)
        raise ResourceError(
            f"n={n}, q={q} needs {need / 2**30:.3g} GiB per dense superoperator, over the "
            f"{budget / 2**30:.3g} GiB budget; use n <= {fit} or raise --budget-bytes"
        )


def _task_sizes(cfg: ExperimentConfig, t: dict) -> list[int]:
    if "ns" in t:
        return list(t["ns"])
    return [int(t.get("n", cfg.model.n))]


# ---------------------------------------------------------------------------
# report structures


@dataclass
class TaskReport:
    name: str
    csv_name: str
    header: tuple
    rows: list
    payload: dict
    ok: bool = True


@dataclass
class ReportBundle:
    provenance: dict
    tasks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.tasks)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        f = float(x)
        return f if math.isfinite(f) else repr(f)
    if isinstance(x, Region):
        return list(x.sites)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def report_json(bundle: ReportBundle) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "provenance": bundle.provenance,
        "tasks": {t.name: {"ok": t.ok, "csv": t.csv_name, **t.payload} for t in bundle.tasks},
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t in bundle.tasks:
        p = out / t.csv_name
        p.write_text(csv_text(t.header, t.rows))
        written.append(p)
    p = out / "report.json"
    p.write_text(report_json(bundle))
    written.append(p)
    return written


# ---------------------------------------------------------------------------
# cells (module-level so a process pool can pickle them)


def _gap_cell(args):
    from .gapanalysis import gap_report
    from .lindblad import LindbladSpec

    model, n, q, mseed, params, beta, sigma, weight, budget = args
    H = make_model(model, n, q=q, seed=mseed, **params)
    rep = gap_report(H, LindbladSpec(beta, sigma, weight), budget=budget).as_dict()
    rep["seed"] = mseed
    return rep


def _clustering_cell(args):
    from . import clustering as cl

    model, n, mseed, beta, quantities, distances, widths, island, buffers = args
    H = make_model(model, n, seed=mseed)
    st = gibbs(H, beta)
    curves = []
    if "weak" in quantities:
        curves.append(cl.weak_clustering_scan(H, beta, distances, state=st, seed=mseed))
    if "weak_inf" in quantities:
        curves.append(cl.weak_clustering_scan(H, beta, distances, norm="inf", state=st, seed=mseed))
    if "strong" in quantities:
        curves.append(cl.strong_clustering_scan(H, beta, widths, state=st, seed=mseed))
    for q in ("local_indistinguishability", "partition_ratio"):
        if q in quantities:
            curves.append(cl.tripartition_scan(H, beta, widths, q, seed=mseed))
    if "island" in quantities:
        curves.append(cl.island_scan(H, beta, island, buffers, state=st, seed=mseed))
    return [c.to_json() for c in curves]


def _truncation_cell(args):
    from .condexp import truncation_error_scan
    from .kgen import truncation_gap_audit

    model, n, mseed, beta, region, buffers, k_site, k_buffers = args
    H = make_model(model, n, seed=mseed)
    st = gibbs(H, beta)
    out = [truncation_error_scan(H, beta, region, buffers, state=st, seed=mseed).to_json()]
    if k_buffers:
        out.append(truncation_gap_audit(H, beta, k_site, k_buffers, state=st, seed=mseed).to_json())
    return out


def _lr_cell(args):
    from .condexp import lr_speed

    model, n, mseed, beta, a_len, b_lens, times = args
    H = make_model(model, n, seed=mseed)
    return lr_speed(H, beta, a_len, b_lens, times, seed=mseed)


def _adiabatic_cell(args):
    from .adiabatic import Schedule, adiabatic_run

    model, n, mseed, bmin, btarget, steps, weight, threshold, pre = args
    H = make_model(model, n, seed=mseed)
    r = adiabatic_run(H, Schedule(bmin, btarget, steps), weight, threshold, prescan_points=pre)
    return asdict(r)


def _identity_cell(args):
    from .identities import identity_rows

    model, n, mseed, beta, weight, tol, seed, cell, n_ops = args
    rng = cell_rng(seed, "identity-suite", cell)
    rows = identity_rows(make_model(model, n, seed=mseed), beta, weight, tol, rng, n_ops)
    return [(r[0], mseed, *r[2:]) for r in rows]


def _map(fn, cells, jobs: int) -> list:
    if jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


# ---------------------------------------------------------------------------
# tasks


GAP_HEADER = ("model", "seed", "n", "beta", "sigma", "weight", "lambda_K", "lambda_L", "alpha", "kernel_dim")
CURVE_HEADER = ("task_model", "curve", *CSV_HEADER)
ADIABATIC_HEADER = ("model", "seed", "n", "steps", "step", "s", "beta", "fidelity")
IDENTITY_HEADER = ("model", "seed", "n", "beta", "sigma", "weight", "identity", "residual", "tolerance", "passed")
LR_HEADER = ("model", "seed", "n", "beta", "a_len", "b_len", "t", "lhs")


def _models(cfg, t) -> list[str]:
    return list(t.get("models", [t.get("model", cfg.model.name)]))


def run_gap_scan(cfg: ExperimentConfig, t: dict) -> TaskReport:
    ns = list(t.get("ns", [cfg.model.n]))
    betas = list(t.get("betas", [cfg.lindblad.beta]))
    weights = list(t.get("weights", [cfg.lindblad.weight]))
    n_max = int(t.get("n_max", 5))
    if max(ns) > n_max:
        raise ResourceError(f"gap-scan n={max(ns)} above n_max={n_max}")
    model = t.get("model", cfg.model.name)
    cells = [(model, n, cfg.model.q, cfg.model.seed, cfg.model.params, b, cfg.lindblad.sigma, w, cfg.budget_bytes)
             for n in ns for b in betas for w in weights]
    res = _map(_gap_cell, cells, cfg.jobs)
    rows = [(r["model"], r["seed"], r["n"], r["beta"], r["sigma"], r["weight"], r["lambda_k"], r["lambda_l"],
             r["alpha"], r["kernel_dim_l"]) for r in res]
    gaps = [r["lambda_l"] for r in res]
    payload = {"reports": res, "plateau_ratio": max(gaps) / min(gaps) if gaps else None}
    ok = all(r["lambda_l"] > 0 and r["lambda_l"] >= r["lambda_k"] / r["alpha"] - 1e-9 for r in res)
    return TaskReport("gap-scan", "gap_scan.csv", GAP_HEADER, rows, payload, ok)


def _curve_task(name, csv_name, cfg, t, cell_fn, cell_args) -> TaskReport:
    models = _models(cfg, t)
    res = _map(cell_fn, [cell_args(m) for m in models], cfg.jobs)
    rows, curves = [], []
    for m, cs in zip(models, res):
        for c in cs:
            curves.append(c)
            bounds = c["bounds"] or [float("nan")] * len(c["values"])
            for x, v, b in zip(c["abscissa"], c["values"], bounds):
                rows.append((m, c["name"], x, v, b, c["model"], c["beta"], "" if c["seed"] is None else c["seed"]))
    ok = all(c["inversions"] <= 1 for c in curves)
    return TaskReport(name, csv_name, CURVE_HEADER, rows, {"curves": curves}, ok)


def run_clustering_scan(cfg, t) -> TaskReport:
    n, beta = int(t.get("n", cfg.model.n)), float(t.get("beta", cfg.lindblad.beta))
    q = tuple(t.get("quantities", ("weak", "strong", "local_indistinguishability", "partition_ratio", "island")))
    dist = tuple(t.get("distances", range(1, n)))
    widths = tuple(t.get("widths", range(1, n - 1)))
    island = int(t.get("island", 2))
    buffers = tuple(t.get("buffers", range(0, (n - island) // 2 + 1)))
    return _curve_task("clustering-scan", "clustering_scan.csv", cfg, t, _clustering_cell,
                       lambda m: (m, n, cfg.model.seed, beta, q, dist, widths, island, buffers))


def run_truncation_scan(cfg, t) -> TaskReport:
    n, beta = int(t.get("n", cfg.model.n)), float(t.get("beta", cfg.lindblad.beta))
    region = tuple(t.get("region", (n // 2, n // 2 + 1)))
    buffers = tuple(t.get("buffers", (0, 1, 2)))
    k_site = int(t.get("k_site", (n + 1) // 2))
    k_buffers = tuple(t.get("k_buffers", ()))
    return _curve_task("truncation-scan", "truncation_scan.csv", cfg, t, _truncation_cell,
                       lambda m: (m, n, cfg.model.seed, beta, region, buffers, k_site, k_buffers))


def run_lr_scan(cfg, t) -> TaskReport:
    n, beta = int(t.get("n", cfg.model.n)), float(t.get("beta", cfg.lindblad.beta))
    a_len = int(t.get("a_len", 2))
    b_lens = tuple(t.get("b_lens", (1, 2, 3)))
    times = tuple(t.get("times", (0.5, 1.0, 2.0)))
    if a_len + max(b_lens) >= n:
        raise ConfigError(f"lr-scan: a_len + max(b_lens) = {a_len + max(b_lens)} leaves no room for C at n={n}")
    models = _models(cfg, t)
    res = _map(_lr_cell, [(m, n, cfg.model.seed, beta, a_len, b_lens, times) for m in models], cfg.jobs)
    rows = []
    for m, r in zip(models, res):
        for b in r["b_lens"]:
            for tt, v in zip(r["times"], r["lhs"][b]):
                rows.append((m, cfg.model.seed, n, beta, a_len, b, tt, v))
    return TaskReport("lr-scan", "lr_scan.csv", LR_HEADER, rows, {"scans": res})


def run_adiabatic(cfg, t) -> TaskReport:
    n = int(t.get("n", 2))
    steps = list(t.get("steps", [100, 200, 400]))
    model = t.get("model", cfg.model.name)
    bmin, btarget = float(t.get("beta_min", 1e-3)), float(t.get("beta_target", cfg.lindblad.beta))
    weight = t.get("weight", "gaussian")
    thr = float(t.get("threshold", 0.99))
    pre = int(t.get("prescan_points", 21))
    cells = [(model, n, cfg.model.seed, bmin, btarget, k, weight, thr, pre) for k in steps]
    res = _map(_adiabatic_cell, cells, cfg.jobs)
    rows = []
    for r in res:
        k = r["steps"]
        for i, f in enumerate(r["trace"]):
            s = (i + 1) / k
            rows.append((model, cfg.model.seed, n, k, i + 1, s, bmin + s * (btarget - bmin), f))
    fids = [r["fidelity"] for r in res]
    monotone = all(b >= a - 1e-12 for a, b in zip(fids, fids[1:]))
    payload = {"runs": [{k: v for k, v in r.items() if k != "trace"} for r in res], "monotone": monotone}
    ok = all(r["passed"] for r in res)
    return TaskReport("adiabatic", "adiabatic_trace.csv", ADIABATIC_HEADER, rows, payload, ok)


def run_identity_suite(cfg, t) -> TaskReport:
    ns = list(t.get("ns", [cfg.model.n]))
    betas = list(t.get("betas", [cfg.lindblad.beta]))
    weights = list(t.get("weights", [cfg.lindblad.weight]))
    models = _models(cfg, t)
    seeds = list(t.get("seeds", [cfg.model.seed]))
    n_ops = int(t.get("n_ops", 3))
    cells, idx = [], 0
    for m in models:
        for s in seeds:
            for n in ns:
                for b in betas:
                    for w in weights:
                        cells.append((m, n, s, b, w, cfg.tolerances, cfg.seed, idx, n_ops))
                        idx += 1
    res = _map(_identity_cell, cells, cfg.jobs)
    rows = [r for cell in res for r in cell]
    ok = all(r[-1] for r in rows)
    failed = [f"{r[0]} n={r[2]} beta={r[3]} {r[5]}: {r[6]}" for r in rows if not r[-1]]
    return TaskReport("identity-suite", "identity_suite.csv", IDENTITY_HEADER, rows,
                      {"checks": len(rows), "failed": failed}, ok)


RUNNERS = {
    "gap-scan": run_gap_scan,
    "clustering-scan": run_clustering_scan,
    "truncation-scan": run_truncation_scan,
    "lr-scan": run_lr_scan,
    "adiabatic": run_adiabatic,
    "identity-suite": run_identity_suite,
}


def provenance(cfg: ExperimentConfig) -> dict:
    return {
        "artifact_version": __version__,
        "seed": cfg.seed,
        "model": asdict(cfg.model),
        "lindblad": asdict(cfg.lindblad),
        "tolerances": dict(cfg.tolerances),
        "budget_bytes": cfg.budget_bytes,
        "tasks": [t["name"] for t in cfg.tasks],
    }


def run(cfg: ExperimentConfig, only: str | None = None) -> ReportBundle:
    """Run every task (or just ``only``) after checking all resource estimates up front."""
    tasks = [t for t in cfg.tasks if only is None or t["name"] == only]
    if only is not None and not tasks:
        tasks = [{"name": only}]
    for t in tasks:
        for n in _task_sizes(cfg, t):
            check_budget(n, cfg.model.q, cfg.budget_bytes)
    bundle = ReportBundle(provenance(cfg))
    for t in tasks:
        bundle.tasks.append(RUNNERS[t["name"]](cfg, t))
    return bundle
