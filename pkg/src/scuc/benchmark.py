"""Monte-Carlo solve-time trials and cross-environment percent gain/loss reports.

Sign convention (documented deliberately): percent_gain is
``(baseline_mean - env_mean) / baseline_mean * 100``, so positive means the
environment solved faster than the baseline and negative means a loss.

Trial CSV columns:  env,trial,compile_seconds,solve_seconds,objective,rel_gap,nodes,timestamp
Report CSV columns: env,cpu,ram_gb,trials,mean_s,sd_s,percent_gain
Failed trials appear in the CSV with empty numeric fields and are excluded
from all averages (documented; the report notes incomplete trial sets).
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

from .errors import (
    ArgumentError,
    EmptyEnvironmentError,
    MissingBaselineError,
)
from .instance import SolverOptions, UcInstance


@dataclass(frozen=True)
class EnvironmentProfile:
    name: str
    cpu_count: int
    ram_gb: float
    ssd: bool = True
    processor: str = ""

    def __post_init__(self):
        if self.cpu_count < 1:
            raise ArgumentError(f"cpu_count must be >= 1, got {self.cpu_count}")


@dataclass
class TrialRecord:
    environment: str
    trial: int
    compile_seconds: float
    solve_seconds: float
    objective: Optional[float]
    rel_gap_achieved: Optional[float]
    nodes_explored: int
    timestamp: str
    error: Optional[str] = None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class EnvironmentSummary:
    environment: str
    trials: int
    failed: int
    mean_s: float
    sd_s: float
    percent_gain: float
    cpu_count: Optional[int] = None
    ram_gb: Optional[float] = None


@dataclass(frozen=True)
class ComparisonReport:
    baseline: str
    rows: tuple  # EnvironmentSummary, descending percent_gain

    @property
    def incomplete(self) -> bool:
        return any(r.failed > 0 for r in self.rows)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run_trials(
    inst: UcInstance,
    options: SolverOptions,
    n_trials: int,
    env: EnvironmentProfile,
    solver: Optional[Callable] = None,
    note: str = "",
) -> list:
    """Time n_trials strictly sequential compile+solve runs of one instance.

    ``solver`` takes (model, options) and returns a MipResult-like object; by
    default the in-tree branch-and-bound is used. A failing trial is recorded
    with its error message and the run continues.
    """
    if n_trials < 1:
        raise ArgumentError(f"n_trials must be >= 1, got {n_trials}")
    from . import compiler as comp
    from .mip import solve_mip

    if solver is None:
        solver = solve_mip
    records = []
    for k in range(n_trials):
        stamp = _now()
        try:
            t0 = time.perf_counter()
            model = comp.compile(inst)
            t1 = time.perf_counter()
            result = solver(model, options)
            t2 = time.perf_counter()
            records.append(
                TrialRecord(
                    environment=env.name,
                    trial=k,
                    compile_seconds=t1 - t0,
                    solve_seconds=t2 - t1,
                    objective=result.objective,
                    rel_gap_achieved=result.rel_gap_achieved,
                    nodes_explored=result.nodes_explored,
                    timestamp=stamp,
                    note=note,
                )
            )
        except Exception as exc:  # per-trial isolation by design
            records.append(
                TrialRecord(
                    environment=env.name,
                    trial=k,
                    compile_seconds=0.0,
                    solve_seconds=0.0,
                    objective=None,
                    rel_gap_achieved=None,
                    nodes_explored=0,
                    timestamp=stamp,
                    error=f"{type(exc).__name__}: {exc}",
                    note=note,
                )
            )
    return records


def percent_gain(baseline_mean: float, env_mean: float) -> float:
    """Percent change of env_mean versus baseline_mean; positive = faster."""
    if baseline_mean <= 0:
        raise ArgumentError(f"baseline_mean must be positive, got {baseline_mean}")
    return (baseline_mean - env_mean) * 100.0 / baseline_mean


def compare(records, baseline: str, profiles: Optional[dict] = None) -> ComparisonReport:
    """Aggregate trial records per environment against a baseline environment."""
    by_env: dict = {}
    failed: dict = {}
    for r in records:
        if r.ok:
            by_env.setdefault(r.environment, []).append(r.solve_seconds)
        else:
            by_env.setdefault(r.environment, [])
            failed[r.environment] = failed.get(r.environment, 0) + 1
    if baseline not in by_env:
        raise MissingBaselineError(f"baseline environment {baseline!r} has no records")
    for env, times in by_env.items():
        if not times:
            raise EmptyEnvironmentError(f"environment {env!r} has no successful trials")
    base_mean = statistics.fmean(by_env[baseline])
    rows = []
    for env, times in by_env.items():
        prof = (profiles or {}).get(env)
        rows.append(
            EnvironmentSummary(
                environment=env,
                trials=len(times),
                failed=failed.get(env, 0),
                mean_s=statistics.fmean(times),
                sd_s=statistics.stdev(times) if len(times) > 1 else 0.0,
                percent_gain=percent_gain(base_mean, statistics.fmean(times)),
                cpu_count=prof.cpu_count if prof else None,
                ram_gb=prof.ram_gb if prof else None,
            )
        )
    rows.sort(key=lambda r: (-r.percent_gain, r.environment))
    return ComparisonReport(baseline=baseline, rows=tuple(rows))


# ---------------------------------------------------------------------------
# CSV and plot-data serialization

TRIAL_CSV_COLUMNS = [
    "env", "trial", "compile_seconds", "solve_seconds",
    "objective", "rel_gap", "nodes", "timestamp",
]
REPORT_CSV_COLUMNS = ["env", "cpu", "ram_gb", "trials", "mean_s", "sd_s", "percent_gain"]


def _fmt(v) -> str:
    return "" if v is None else format(v, ".17g")


def trials_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(TRIAL_CSV_COLUMNS)
    for r in records:
        w.writerow([
            r.environment,
            r.trial,
            _fmt(r.compile_seconds),
            _fmt(r.solve_seconds),
            _fmt(r.objective),
            _fmt(r.rel_gap_achieved),
            r.nodes_explored,
            r.timestamp,
        ])
    return buf.getvalue()


def trials_from_csv(text: str) -> list:
    rd = csv.reader(io.StringIO(text))
    header = next(rd, None)
    if header != TRIAL_CSV_COLUMNS:
        raise ArgumentError(f"unexpected trial CSV header {header}")
    out = []
    for row in rd:
        if not row:
            continue
        env, trial, cs, ss, obj, gap, nodes, stamp = row
        ok = obj != ""
        out.append(
            TrialRecord(
                environment=env,
                trial=int(trial),
                compile_seconds=float(cs) if cs else 0.0,
                solve_seconds=float(ss) if ss else 0.0,
                objective=float(obj) if obj else None,
                rel_gap_achieved=float(gap) if gap else None,
                nodes_explored=int(nodes),
                timestamp=stamp,
                error=None if ok else "recorded failure",
            )
        )
    return out


def report_to_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(REPORT_CSV_COLUMNS)
    for r in report.rows:
        w.writerow([
            r.environment,
            "" if r.cpu_count is None else r.cpu_count,
            "" if r.ram_gb is None else _fmt(r.ram_gb),
            r.trials,
            _fmt(r.mean_s),
            _fmt(r.sd_s),
            _fmt(r.percent_gain),
        ])
    return buf.getvalue()


def report_plot_data(report: ComparisonReport) -> str:
    """Two-column CSV (env,percent_gain) for external bar charting."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["env", "percent_gain"])
    for r in report.rows:
        w.writerow([r.environment, _fmt(r.percent_gain)])
    return buf.getvalue()
