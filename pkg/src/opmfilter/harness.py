"""Monte Carlo experiment runner: seeding, RMSE aggregation and CSV output.

Every (filter, N, run) cell is an independent task whose random stream comes
from :func:`derive_run_seed`, so results do not depend on how tasks are spread
over worker processes. All filters at a given run index see the same simulated
trajectory.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FilterDegeneracyError
from .filters import FilterConfig, run_particle_filter, run_possibility_filter
from .possibility import wrap_angle
from .scenarios import make_scenario

MASK64 = (1 << 64) - 1
TRAJECTORY_STREAM = 0xFFFFFFFF
ERROR_COORDS = ("position", "state")

RUNS_FILE = "runs.csv"
AGGREGATE_FILE = "aggregate.csv"
CURVE_FILE = "curve.csv"
TIMINGS_FILE = "timings.csv"


# ---------------------------------------------------------------- filter specs


@dataclass(frozen=True)
class FilterSpec:
    """A named filter variant. ``cfg.n`` is ignored; the budget comes from the experiment."""

    name: str
    model: str  # "probabilistic" or "possibilistic"
    complexity: str = "quadratic"
    cfg: FilterConfig | None = None

    def config(self, n: int) -> FilterConfig:
        return FilterConfig(
            continuous=self.cfg.continuous,
            discrete=self.cfg.discrete,
            complexity=self.cfg.complexity,
            resampling=self.cfg.resampling,
            n=n,
            likelihood_draws=self.cfg.likelihood_draws,
        )


_SHORT = {"scaled": "s", "global": "g", "local": "l", "linear": "lin", "quadratic": "quad"}
_SHORT_RESAMPLING = {"all": "all", "selective": "sel"}


def _build_catalog() -> dict[str, FilterSpec]:
    specs = [
        FilterSpec("pr-lin", "probabilistic", "linear"),
        FilterSpec("pr-quad", "probabilistic", "quadratic"),
    ]
    for cont, disc, comp, res in itertools.product(
        ("scaled", "global"),
        ("scaled", "global", "local"),
        ("linear", "quadratic"),
        ("all", "selective"),
    ):
        name = f"po-{_SHORT[cont]}-{_SHORT[disc]}-{_SHORT[comp]}-{_SHORT_RESAMPLING[res]}"
        cfg = FilterConfig(continuous=cont, discrete=disc, complexity=comp, resampling=res)
        specs.append(FilterSpec(name, "possibilistic", comp, cfg))
    return {s.name: s for s in specs}


CATALOG = _build_catalog()
# the index feeds the seed, so it must not depend on which filters a run selects
FILTER_INDEX = {name: i for i, name in enumerate(CATALOG)}

TABLE_FILTERS = (
    "pr-lin",
    "po-s-s-lin-sel",
    "po-g-g-lin-sel",
    "po-g-g-lin-all",
    "po-g-l-lin-sel",
    "po-g-l-lin-all",
    "pr-quad",
    "po-s-s-quad-sel",
    "po-g-g-quad-sel",
    "po-g-g-quad-all",
    "po-g-l-quad-sel",
    "po-g-l-quad-all",
)


def resolve_filters(names: str | Sequence[str]) -> list[FilterSpec]:
    """Accept ``"all"``, ``"catalog"``, a comma-separated string or a list of names."""
    if isinstance(names, str):
        if names == "all":
            names = TABLE_FILTERS
        elif names == "catalog":
            names = tuple(CATALOG)
        else:
            names = [n.strip() for n in names.split(",") if n.strip()]
    out = []
    for n in names:
        if n not in CATALOG:
            raise KeyError(f"unknown filter {n!r}; known: {', '.join(CATALOG)}")
        out.append(CATALOG[n])
    if not out:
        raise ValueError("no filters selected")
    return out


# ------------------------------------------------------------------- seeding


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _scenario_code(scenario_id) -> int:
    return int.from_bytes(str(scenario_id).encode("utf-8")[:8].ljust(8, b"\0"), "little")


def derive_run_seed(master: int, scenario_id, filter_index: int, n: int, run: int) -> int:
    """64-bit seed for one cell, absorbing each field through a splitmix64 round."""
    h = _splitmix64(int(master) & MASK64)
    for v in (_scenario_code(scenario_id), filter_index, n, run):
        h = _splitmix64(h ^ (int(v) & MASK64))
    return h


def trajectory_seed(master: int, scenario_id, run: int) -> int:
    return derive_run_seed(master, scenario_id, TRAJECTORY_STREAM, 0, run)


# ------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class RunResult:
    estimates: np.ndarray
    truth: np.ndarray
    sq_errors: np.ndarray
    duration_s: float = 0.0


@dataclass(frozen=True)
class AggregateResult:
    total_rmse: float
    curve: np.ndarray
    runs: int
    filter: str = ""
    n: int = 0


def squared_errors(estimates, truth, indices=None, angle_indices=()) -> np.ndarray:
    """Per-step squared error over ``indices`` (all coordinates if None)."""
    diff = np.atleast_2d(np.asarray(estimates, dtype=float)) - np.atleast_2d(
        np.asarray(truth, dtype=float)
    )
    if diff.ndim != 2:
        raise ValueError("estimates must be (T, d)")
    angle_indices = list(angle_indices)
    if angle_indices:
        diff[:, angle_indices] = wrap_angle(diff[:, angle_indices])
    if indices is not None:
        diff = diff[:, list(indices)]
    return np.sum(diff * diff, axis=1)


def make_run_result(estimates, truth, indices=None, angle_indices=(), duration_s=0.0) -> RunResult:
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"estimate shape {est.shape} differs from truth shape {tru.shape}")
    return RunResult(est, tru, squared_errors(est, tru, indices, angle_indices), duration_s)


def rmse_total(results: Sequence[RunResult], indices=None, angle_indices=(), filter="", n=0):
    """Per-step RMSE across runs and its sum over time.

    ``indices`` selects the error coordinates; when given, squared errors are
    recomputed from estimates and truth rather than taken from the results.
    """
    if len(results) == 0:
        raise ValueError("no runs to aggregate")
    if indices is None and not angle_indices:
        rows = [np.asarray(r.sq_errors, dtype=float) for r in results]
    else:
        rows = [squared_errors(r.estimates, r.truth, indices, angle_indices) for r in results]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("runs have different horizons")
    curve = np.sqrt(np.mean(np.vstack(rows), axis=0))
    return AggregateResult(float(curve.sum()), curve, len(rows), filter, n)


# --------------------------------------------------------------- experiments


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "1"
    filters: tuple = TABLE_FILTERS
    n: tuple = (256,)
    runs: int = 100
    seed: int = 0
    out: str | None = None
    workers: int = 1
    error_coords: str = "position"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        filters = self.filters
        if isinstance(filters, str):
            filters = tuple(s.name for s in resolve_filters(filters))
        else:
            filters = tuple(filters)
            resolve_filters(filters)
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "n", tuple(int(v) for v in np.atleast_1d(self.n)))
        object.__setattr__(self, "scenario", str(self.scenario))
        if self.runs < 1:
            raise ValueError("run count must be at least 1")
        if not self.n or min(self.n) < 1:
            raise ValueError("sample budgets must be at least 1")
        if not 0 <= int(self.seed) <= MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.error_coords not in ERROR_COORDS:
            raise ValueError(f"error_coords must be one of {ERROR_COORDS}")
        make_scenario(self.scenario, **self.overrides)


@dataclass(frozen=True)
class CellOutcome:
    filter: str
    n: int
    run: int
    seed: int
    traj_hash: str
    failed: bool
    sq_errors: np.ndarray | None
    duration_s: float


def run_filter(spec: FilterSpec, model, observations, n: int, rng) -> np.ndarray:
    if spec.model == "probabilistic":
        return run_particle_filter(model, observations, n, rng, complexity=spec.complexity)
    return run_possibility_filter(model, observations, spec.config(n), rng)


def run_cell(scenario_id, overrides, filter_name, n, run, master, error_coords="position"):
    """Run one (filter, N, run) cell from scratch; identical inputs give identical output."""
    scenario = make_scenario(scenario_id, **overrides)
    model = scenario.model()
    traj = scenario.simulate(np.random.default_rng(trajectory_seed(master, scenario_id, run)))
    seed = derive_run_seed(master, scenario_id, FILTER_INDEX[filter_name], n, run)
    rng = np.random.default_rng(seed)
    indices = model.position_indices if error_coords == "position" else None
    start = time.perf_counter()
    try:
        est = run_filter(CATALOG[filter_name], model, traj.observations, n, rng)
    except FilterDegeneracyError:
        est = None
    duration = time.perf_counter() - start
    sq = None
    if est is not None:
        sq = squared_errors(est, traj.states, indices, model.angle_indices)
    return CellOutcome(filter_name, n, run, seed, traj.digest(), est is None, sq, duration)


def _run_cell_packed(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, progress=None):
    """Run every cell, aggregate per (filter, N) and write CSVs if ``cfg.out`` is set.

    Returns ``(aggregates, outcomes)``; failed runs are excluded from the
    aggregates and counted separately.
    """
    tasks = [
        (cfg.scenario, dict(cfg.overrides), f, n, r, int(cfg.seed), cfg.error_coords)
        for f in cfg.filters
        for n in cfg.n
        for r in range(cfg.runs)
    ]
    if cfg.workers == 1:
        outcomes = []
        for t in tasks:
            outcomes.append(_run_cell_packed(t))
            if progress:
                progress(len(outcomes), len(tasks))
    else:
        chunk = max(1, len(tasks) // (cfg.workers * 8))
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = []
            # map() yields in submission order whatever the completion order
            for o in pool.map(_run_cell_packed, tasks, chunksize=chunk):
                outcomes.append(o)
                if progress:
                    progress(len(outcomes), len(tasks))
    aggregates = aggregate_outcomes(outcomes)
    if cfg.out is not None:
        write_outputs(cfg, aggregates, outcomes)
    return aggregates, outcomes


def per_run_total(sq_errors) -> float:
    return float(np.sum(np.sqrt(sq_errors)))


@dataclass(frozen=True)
class CellAggregate:
    filter: str
    n: int
    runs: int
    failed: int
    mean_total_rmse: float
    stderr: float
    total_rmse: float
    curve: np.ndarray
    mean_duration_s: float


def aggregate_outcomes(outcomes: Sequence[CellOutcome]) -> list[CellAggregate]:
    groups: dict[tuple, list[CellOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.filter, o.n), []).append(o)
    out = []
    for (f, n), cells in groups.items():
        ok = [c for c in cells if not c.failed]
        durations = np.array([c.duration_s for c in cells])
        if ok:
            totals = np.array([per_run_total(c.sq_errors) for c in ok])
            agg = rmse_total([RunResult(None, None, c.sq_errors) for c in ok])
            mean = float(totals.mean())
            se = float(totals.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan
            total, curve = agg.total_rmse, agg.curve
        else:
            mean = se = total = math.nan
            curve = np.array([])
        out.append(
            CellAggregate(f, n, len(ok), len(cells) - len(ok), mean, se, total, curve, float(durations.mean()))
        )
    return out


# ------------------------------------------------------------------------ CSV


def fmt(x) -> str:
    """Floats at 17 significant digits; empty for NaN."""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_outputs(cfg: ExperimentConfig, aggregates, outcomes) -> None:
    """Write runs, aggregate, curve and timing CSVs.

    Wall-clock durations live only in the timings file so that the other three
    files are byte-for-byte reproducible.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.scenario
    with open(out / RUNS_FILE, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["scenario", "filter", "N", "run", "seed", "traj_hash", "total_rmse", "failed"])
        for o in outcomes:
            total = math.nan if o.failed else per_run_total(o.sq_errors)
            w.writerow([sc, o.filter, o.n, o.run, o.seed, o.traj_hash, fmt(total), int(o.failed)])
    with open(out / AGGREGATE_FILE, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(
            ["scenario", "filter", "N", "runs", "failed", "mean_total_rmse", "stderr", "total_rmse"]
        )
        for a in aggregates:
            w.writerow(
                [sc, a.filter, a.n, a.runs, a.failed, fmt(a.mean_total_rmse), fmt(a.stderr), fmt(a.total_rmse)]
            )
    with open(out / CURVE_FILE, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["scenario", "filter", "N", "step", "rmse"])
        for a in aggregates:
            for t, v in enumerate(a.curve, start=1):
                w.writerow([sc, a.filter, a.n, t, fmt(v)])
    with open(out / TIMINGS_FILE, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["scenario", "filter", "N", "run", "duration_s"])
        for o in outcomes:
            w.writerow([sc, o.filter, o.n, o.run, fmt(o.duration_s)])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _float(s: str) -> float:
    return math.nan if s == "" else float(s)


def load_aggregates(directory) -> list[dict]:
    rows = read_csv(Path(directory) / AGGREGATE_FILE)
    timings = Path(directory) / TIMINGS_FILE
    durations: dict[tuple, list[float]] = {}
    if timings.exists():
        for r in read_csv(timings):
            durations.setdefault((r["filter"], r["N"]), []).append(float(r["duration_s"]))
    for r in rows:
        d = durations.get((r["filter"], r["N"]))
        r["mean_duration_s"] = fmt(np.mean(d)) if d else ""
    return rows


def format_table(rows: list[dict]) -> tuple[str, list[list[str]]]:
    """Grid with one row per filter and one column per budget.

    Cells read ``total (seconds)``. Returns aligned text and the same grid as
    CSV rows (totals and mean durations in separate columns).
    """
    filters = list(dict.fromkeys(r["filter"] for r in rows))
    budgets = sorted({int(r["N"]) for r in rows})
    cell = {(r["filter"], int(r["N"])): r for r in rows}
    header = ["filter"] + [f"N={n}" for n in budgets]
    text_rows = [header]
    csv_rows = [["filter"] + [c for n in budgets for c in (f"total_rmse_N{n}", f"mean_duration_s_N{n}")]]
    for f in filters:
        trow, crow = [f], [f]
        for n in budgets:
            r = cell.get((f, n))
            if r is None:
                trow.append("-")
                crow += ["", ""]
                continue
            total = _float(r["total_rmse"])
            dur = r.get("mean_duration_s", "")
            text = "failed" if math.isnan(total) else f"{total:.2f}"
            if dur:
                text += f" ({float(dur):.2f})"
            if int(r.get("failed", 0) or 0):
                text += f" [{r['failed']} failed]"
            trow.append(text)
            crow += [r["total_rmse"], dur]
        text_rows.append(trow)
        csv_rows.append(crow)
    widths = [max(len(r[i]) for r in text_rows) for i in range(len(header))]
    lines = [
        "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        for r in text_rows
    ]
    return "\n".join(lines), csv_rows


def curve_table(directory) -> list[list[str]]:
    """Per-step RMSE in wide form: one column per ``filter@N``."""
    rows = read_csv(Path(directory) / CURVE_FILE)
    keys = list(dict.fromkeys((r["filter"], r["N"]) for r in rows))
    steps = sorted({int(r["step"]) for r in rows})
    val = {(r["filter"], r["N"], int(r["step"])): r["rmse"] for r in rows}
    out = [["step"] + [f"{f}@{n}" for f, n in keys]]
    for t in steps:
        out.append([str(t)] + [val.get((f, n, t), "") for f, n in keys])
    return out


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        _writer(fh).writerows(rows)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
