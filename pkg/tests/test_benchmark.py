import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from scuc import (
    ComparisonReport,
    EnvironmentProfile,
    SolverOptions,
    TrialRecord,
    compare,
    parse_instance,
    percent_gain,
    run_trials,
)
from scuc.benchmark import (
    REPORT_CSV_COLUMNS,
    TRIAL_CSV_COLUMNS,
    report_plot_data,
    report_to_csv,
    trials_from_csv,
    trials_to_csv,
)
from scuc.errors import ArgumentError, EmptyEnvironmentError, MissingBaselineError
from helpers import tiny_text

ENV = EnvironmentProfile(name="local", cpu_count=4, ram_gb=16.0)


def record(env, trial, secs, error=None):
    return TrialRecord(
        environment=env,
        trial=trial,
        compile_seconds=0.001,
        solve_seconds=secs,
        objective=None if error else 1.0,
        rel_gap_achieved=None if error else 0.0,
        nodes_explored=0 if error else 1,
        timestamp="2026-01-01T00:00:00+00:00",
        error=error,
    )


def test_single_trial_real_solver():
    inst = parse_instance(tiny_text())
    records = run_trials(inst, SolverOptions(rel_gap=0.0), 1, ENV)
    assert len(records) == 1
    r = records[0]
    assert r.ok
    assert r.solve_seconds > 0
    assert r.compile_seconds > 0
    assert r.rel_gap_achieved <= 1e-9


def test_hundred_stub_trials():
    inst = parse_instance(tiny_text())

    def stub(model, options):
        time.sleep(0.010)
        return SimpleNamespace(objective=1.0, rel_gap_achieved=0.0, nodes_explored=1)

    records = run_trials(
        inst, SolverOptions(), 100, ENV, solver=stub, note="deterministic-stub"
    )
    assert len(records) == 100
    assert all(r.ok and r.note == "deterministic-stub" for r in records)
    mean = sum(r.solve_seconds for r in records) / 100
    assert 0.009 <= mean <= 0.06  # 10 ms sleep within scheduler tolerance


def test_failing_trials_are_isolated():
    inst = parse_instance(tiny_text())
    calls = {"n": 0}

    def flaky(model, options):
        calls["n"] += 1
        if calls["n"] % 2:
            raise RuntimeError("boom")
        return SimpleNamespace(objective=1.0, rel_gap_achieved=0.0, nodes_explored=1)

    records = run_trials(inst, SolverOptions(), 4, ENV, solver=flaky)
    assert len(records) == 4
    assert [r.ok for r in records] == [False, True, False, True]
    assert "boom" in records[0].error


def test_run_trials_rejects_zero_trials():
    inst = parse_instance(tiny_text())
    with pytest.raises(ArgumentError):
        run_trials(inst, SolverOptions(), 0, ENV)


def test_percent_gain_values():
    assert percent_gain(100.0, 85.5) == 14.5
    assert percent_gain(7.25, 7.25) == 0.0
    assert percent_gain(100.0, 105.0) == -5.0
    with pytest.raises(ArgumentError):
        percent_gain(0.0, 1.0)


def test_compare_two_environments():
    records = [
        record("A", 0, 10.0),
        record("A", 1, 10.0),
        record("B", 0, 8.0),
        record("B", 1, 12.0),
    ]
    report = compare(records, "A")
    by_env = {r.environment: r for r in report.rows}
    assert by_env["B"].mean_s == pytest.approx(10.0)
    assert by_env["B"].percent_gain == pytest.approx(0.0)
    assert by_env["A"].percent_gain == 0.0
    assert not report.incomplete


def test_compare_five_environment_report():
    # shaped like a cross-environment hardware comparison: one gain per
    # environment, baseline pinned at zero, rows sorted fastest-first
    times = {
        "baseline": [10.0, 10.2, 9.8],
        "fast-a": [8.5, 8.7, 8.3],
        "fast-b": [9.0, 9.1, 8.9],
        "slow-a": [10.5, 10.4, 10.6],
        "slow-b": [11.0, 11.2, 10.8],
    }
    records = [
        record(env, i, s) for env, ts in times.items() for i, s in enumerate(ts)
    ]
    profiles = {env: EnvironmentProfile(env, 8, 32.0) for env in times}
    report = compare(records, "baseline", profiles=profiles)
    assert len(report.rows) == 5
    gains = [r.percent_gain for r in report.rows]
    assert gains == sorted(gains, reverse=True)
    by_env = {r.environment: r for r in report.rows}
    assert by_env["baseline"].percent_gain == 0.0
    assert by_env["fast-a"].percent_gain > by_env["fast-b"].percent_gain > 0
    assert by_env["slow-a"].percent_gain < 0
    assert by_env["fast-a"].cpu_count == 8


def test_compare_matches_two_pass_reference():
    rng = np.random.default_rng(12)
    records = []
    for env in ("base", "other"):
        for i, s in enumerate(rng.uniform(0.5, 5.0, size=40)):
            records.append(record(env, i, float(s)))
    report = compare(records, "base")
    for row in report.rows:
        times = [r.solve_seconds for r in records if r.environment == row.environment]
        mean = sum(times) / len(times)
        var = sum((t - mean) ** 2 for t in times) / (len(times) - 1)
        assert abs(row.mean_s - mean) <= 1e-12 * (1 + abs(mean))
        assert abs(row.sd_s - math.sqrt(var)) <= 1e-12 * (1 + row.sd_s)


def test_compare_order_invariance():
    records = [record("A", 0, 3.0), record("A", 1, 5.0), record("B", 0, 2.0)]
    a = compare(records, "A")
    b = compare(records[::-1], "A")
    assert a == b


def test_compare_errors():
    with pytest.raises(MissingBaselineError):
        compare([record("A", 0, 1.0)], "nope")
    with pytest.raises(EmptyEnvironmentError):
        compare([record("A", 0, 1.0), record("B", 0, 0.0, error="x")], "A")


def test_compare_excludes_failed_trials():
    records = [
        record("A", 0, 10.0),
        record("A", 1, 10.0),
        record("B", 0, 5.0),
        record("B", 1, 0.0, error="crash"),
    ]
    report = compare(records, "A")
    by_env = {r.environment: r for r in report.rows}
    assert by_env["B"].mean_s == pytest.approx(5.0)
    assert by_env["B"].trials == 1
    assert by_env["B"].failed == 1
    assert report.incomplete


def test_trial_csv_round_trip():
    records = [record("A", 0, 1.25), record("A", 1, 0.0, error="fail")]
    text = trials_to_csv(records)
    assert text.splitlines()[0] == ",".join(TRIAL_CSV_COLUMNS)
    back = trials_from_csv(text)
    assert len(back) == 2
    assert back[0].solve_seconds == 1.25
    assert back[0].ok
    assert not back[1].ok


def test_trial_csv_rejects_bad_header():
    with pytest.raises(ArgumentError):
        trials_from_csv("a,b,c\n")


def test_report_csv_and_plot_data():
    records = [record("A", 0, 4.0), record("B", 0, 3.0)]
    report = compare(records, "A")
    text = report_to_csv(report)
    lines = text.splitlines()
    assert lines[0] == ",".join(REPORT_CSV_COLUMNS)
    assert len(lines) == 3
    plot = report_plot_data(report)
    assert plot.splitlines()[0] == "env,percent_gain"
    assert plot.splitlines()[1].startswith("B,25")
