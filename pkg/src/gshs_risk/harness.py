"""Sweeps over the awareness ratio, result tables and their serialisation.

Every random quantity in a sweep is keyed by the master seed, the awareness
ratio and the trial (or run) index, so the output does not depend on the
number of workers or on the order in which they finish.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _backend
from .config import ExperimentConfig, from_dict, provenance_block, to_dict
from .lane_change import LaneChangeScenario
from .rng import derive_key
from .splitting import (check_initial_exclusion, estimate_reach_probability,
                        monte_carlo_estimate)
from .toys import (barrier_probability, barrier_schedule, brownian_model, ladder_chain,
                   oracle_chains)

IPS = "ips"
MC = "mc"
METHOD_LABELS = {IPS: "IPS-FAS", MC: "MC"}


class ExperimentError(RuntimeError):
    pass


@dataclass
class ResultRow:
    """Aggregate for one ``(awareness_ratio, method)`` pair.

    For ``ips`` the values are per-trial estimates; for ``mc`` they are the
    per-worker hit fractions and ``hits`` holds the total count.
    """

    awareness_ratio: float
    method: str
    values: list
    count: int
    level_means: tuple = ()
    hits: Optional[int] = None
    wall_time: float = 0.0

    @property
    def mean(self) -> float:
        if self.method == MC:
            return self.hits / self.count
        return math.fsum(self.values) / len(self.values)

    @property
    def std(self) -> float:
        """Trial standard deviation (``ips``) or per-run Bernoulli deviation (``mc``)."""
        m = self.mean
        if self.method == MC:
            return math.sqrt(m * (1.0 - m))
        if len(self.values) < 2:
            return 0.0
        return math.sqrt(math.fsum((v - m) ** 2 for v in self.values) / (len(self.values) - 1))

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.count)


@dataclass
class ResultTable:
    seed: int
    config: dict
    rows: list = field(default_factory=list)
    complete: bool = False

    def add(self, row: ResultRow):
        self.rows.append(row)

    def row(self, awareness_ratio: float, method: str) -> ResultRow:
        for r in self.rows:
            if r.awareness_ratio == awareness_ratio and r.method == method:
                return r
        raise KeyError((awareness_ratio, method))

    def means(self, method: str = IPS) -> list[tuple[float, float]]:
        return [(r.awareness_ratio, r.mean) for r in self.rows if r.method == method]


# -- workers -------------------------------------------------------------------

def _ips_trials(config_data: dict, mu: float, trials: range):
    config = from_dict(config_data)
    scenario = LaneChangeScenario(config.scenario_config(mu))
    model, schedule = scenario.model(), scenario.schedule()
    est = config.estimator
    seed = derive_key(config.seed, IPS, repr(mu))
    out = []
    for n in trials:
        r = estimate_reach_probability(model, schedule, est.particles, seed, dt=est.dt,
                                       trial=n, redraw_budget=est.redraw_budget)
        out.append((r.gamma, r.per_level_gamma))
    return out


def _mc_runs(config_data: dict, mu: float, first: int, n: int) -> int:
    config = from_dict(config_data)
    scenario = LaneChangeScenario(config.scenario_config(mu))
    _, hits = monte_carlo_estimate(scenario.model(), scenario.collision(), config.estimator.horizon,
                                   n, config.seed, dt=config.estimator.dt, stream=repr(mu),
                                   first_run=first, return_hits=True)
    return hits


def _pieces(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    edges = np.linspace(0, total, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


class _Runner:
    """Serial in-process execution or a process pool, behind one interface."""

    def __init__(self, workers: int):
        self.workers = workers
        self.pool = ProcessPoolExecutor(workers) if workers > 1 else None

    def map(self, fn, jobs):
        if self.pool is None:
            return [fn(*job) for job in jobs]
        futures = [self.pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]

    def close(self, cancel: bool = False):
        if self.pool is not None:
            self.pool.shutdown(wait=not cancel, cancel_futures=cancel)


def run_sweep(config: ExperimentConfig, *, methods=None, table: Optional[ResultTable] = None,
              on_row: Optional[Callable[[ResultRow], None]] = None) -> ResultTable:
    """Run the configured estimators for every awareness ratio of the sweep.

    Rows are appended to ``table`` as they finish, so a caller that catches
    ``KeyboardInterrupt`` still holds every completed row.
    """
    est = config.estimator
    methods = tuple(methods or est.methods)
    data = to_dict(config)
    table = table if table is not None else ResultTable(config.seed, data)
    runner = _Runner(config.workers)
    try:
        for mu in est.awareness_ratios:
            scenario = LaneChangeScenario(config.scenario_config(mu))
            inside = check_initial_exclusion(scenario.model(), scenario.schedule(), 64, config.seed)
            if inside > 0:
                raise ExperimentError(f"awareness ratio {mu}: the initial state already lies "
                                      "inside the first level; move the vehicles apart")
            if IPS in methods:
                t0 = time.perf_counter()
                jobs = [(data, mu, range(a, b)) for a, b in _pieces(est.trials, config.workers)]
                results = [r for part in runner.map(_ips_trials, jobs) for r in part]
                gammas = [g for g, _ in results]
                levels = np.array([lv for _, lv in results])
                level_means = tuple(math.fsum(col) / len(col) for col in levels.T)
                row = ResultRow(mu, IPS, gammas, est.trials, level_means,
                                wall_time=time.perf_counter() - t0)
                table.add(row)
                if on_row:
                    on_row(row)
            if MC in methods:
                t0 = time.perf_counter()
                pieces = _pieces(est.mc_runs, config.workers)
                hits = runner.map(_mc_runs, [(data, mu, a, b - a) for a, b in pieces])
                row = ResultRow(mu, MC, [h / (b - a) for h, (a, b) in zip(hits, pieces)],
                                est.mc_runs, hits=int(sum(hits)), wall_time=time.perf_counter() - t0)
                table.add(row)
                if on_row:
                    on_row(row)
    except KeyboardInterrupt:
        runner.close(cancel=True)
        raise
    runner.close()
    table.complete = True
    return table


# -- emission --------------------------------------------------------------------

CSV_FIELDS = ("awareness_ratio", "method", "mean", "std", "stderr", "count", "hits", "level_means")


def _num(v) -> str:
    return repr(float(v))


def results_csv(table: ResultTable) -> str:
    """One row per ``(awareness_ratio, method)``; wall times are left out so
    that repeated runs produce identical bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_FIELDS)
    for r in table.rows:
        w.writerow([_num(r.awareness_ratio), METHOD_LABELS[r.method], _num(r.mean), _num(r.std),
                    _num(r.stderr), r.count, "" if r.hits is None else r.hits,
                    ";".join(_num(v) for v in r.level_means)])
    return buf.getvalue()


def curve_csv(table: ResultTable) -> str:
    """Long format for plotting the mean against the awareness ratio."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("awareness_ratio", "method", "mean", "lower", "upper"))
    for r in sorted(table.rows, key=lambda r: (r.method, r.awareness_ratio)):
        m, se = r.mean, r.stderr
        w.writerow([_num(r.awareness_ratio), METHOD_LABELS[r.method], _num(m),
                    _num(max(0.0, m - 1.96 * se)), _num(m + 1.96 * se)])
    return buf.getvalue()


def _version() -> str:
    try:
        return metadata.version("gshs_risk")
    except metadata.PackageNotFoundError:
        return "unknown"


def results_json(table: ResultTable) -> str:
    doc = {
        "provenance": {
            "package_version": _version(),
            "seed": table.seed,
            "backend": _backend.active(),
            "complete": table.complete,
            "fields": provenance_block(),
        },
        "config": table.config,
        "rows": [
            {"awareness_ratio": r.awareness_ratio, "method": r.method, "mean": r.mean,
             "std": r.std, "count": r.count, "hits": r.hits, "level_means": list(r.level_means),
             "values": list(r.values), "wall_time": r.wall_time}
            for r in table.rows
        ],
    }
    return json.dumps(doc, indent=1)


def load_results(path) -> ResultTable:
    doc = json.loads(Path(path).read_text())
    table = ResultTable(doc["provenance"]["seed"], doc["config"], complete=doc["provenance"]["complete"])
    for r in doc["rows"]:
        table.add(ResultRow(r["awareness_ratio"], r["method"], r["values"], r["count"],
                            tuple(r["level_means"]), r["hits"], r["wall_time"]))
    return table


def emit_results(table: ResultTable, out_dir, formats=("csv", "json")) -> list[Path]:
    """Write ``results.csv``, ``curve.csv`` and/or ``results.json`` under ``out_dir``."""
    if not table.rows:
        raise ValueError("nothing to write: the result table is empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "csv" in formats:
            for name, text in (("results.csv", results_csv(table)), ("curve.csv", curve_csv(table))):
                (out / name).write_bytes(text.encode())
                written.append(out / name)
        if "json" in formats:
            (out / "results.json").write_text(results_json(table) + "\n")
            written.append(out / "results.json")
    except OSError as exc:
        raise ExperimentError(f"cannot write results to {out}: {exc.strerror or exc}") from None
    return written


# -- toy validation ----------------------------------------------------------------

@dataclass(frozen=True)
class OracleCase:
    name: str
    method: str
    exact: float
    estimate: float
    stderr: float

    @property
    def rel_error(self) -> float:
        if self.exact == 0:
            return abs(self.estimate)
        return abs(self.estimate - self.exact) / self.exact

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.estimate == self.exact else math.inf
        return (self.estimate - self.exact) / self.stderr


def _ips_stats(model, schedule, n_particles, seed, trials, dt):
    g = np.array([estimate_reach_probability(model, schedule, n_particles, seed, dt=dt, trial=n).gamma
                  for n in range(trials)])
    return math.fsum(g) / trials, float(g.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0


def toy_oracle_suite(seed: int = 0, *, trials: int = 100, n_particles: int = 100,
                     mc_runs: int = 10_000, barrier_dt: float = 1e-3,
                     include_barrier: bool = True) -> list[OracleCase]:
    """Estimator runs on small instances whose reach probability is known."""
    cases = []
    instances = oracle_chains() + [ladder_chain(1.0, 3), ladder_chain(0.0, 3)]
    for inst in instances:
        mean, se = _ips_stats(inst.model(), inst.schedule(), n_particles, seed, trials, 1.0)
        cases.append(OracleCase(inst.name, IPS, inst.exact(), mean, se))
    if include_barrier:
        model, schedule = brownian_model(), barrier_schedule()
        exact = barrier_probability(schedule.predicates[-1].threshold, schedule.horizon)
        mean, se = _ips_stats(model, schedule, n_particles, seed, trials, barrier_dt)
        cases.append(OracleCase("barrier(a=3, T=1)", IPS, exact, mean, se))
        p = monte_carlo_estimate(model, schedule.terminal, schedule.horizon, mc_runs, seed, dt=barrier_dt)
        cases.append(OracleCase("barrier(a=3, T=1)", MC, exact, p, math.sqrt(p * (1 - p) / mc_runs)))
    return cases


def oracle_report(cases: list[OracleCase]) -> str:
    lines = [f"{'instance':<26}{'method':<8}{'exact':>12}{'estimate':>12}{'rel.err':>9}{'z':>7}"]
    for c in cases:
        lines.append(f"{c.name:<26}{METHOD_LABELS[c.method]:<8}{c.exact:>12.4e}{c.estimate:>12.4e}"
                     f"{c.rel_error:>9.3f}{c.z:>7.2f}")
    return "\n".join(lines)


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
