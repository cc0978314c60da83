import csv
import io
import json
import math

import pytest

from gshs_risk.config import ExperimentConfig, to_dict
from gshs_risk.harness import (IPS, MC, ExperimentError, ResultRow, ResultTable, curve_csv,
                               emit_results, load_results, oracle_report, results_csv, run_sweep,
                               toy_oracle_suite)


def small(**extra):
    changes = {"estimator.trials": 4, "estimator.particles": 20, "estimator.mc_runs": 300,
               "estimator.awareness_ratios": [1.5825, 1.7375], **extra}
    return ExperimentConfig().replace(**changes)


@pytest.fixture(scope="module")
def table():
    return run_sweep(small())


def test_sweep_rows(table):
    assert table.complete
    assert [(r.awareness_ratio, r.method) for r in table.rows] == [
        (1.5825, IPS), (1.5825, MC), (1.7375, IPS), (1.7375, MC)]
    r = table.row(1.5825, IPS)
    assert len(r.values) == 4 and len(r.level_means) == 6
    assert r.mean == math.fsum(r.values) / 4
    m = table.row(1.7375, MC)
    assert m.count == 300 and m.mean == m.hits / 300


def test_sweep_is_reproducible_and_worker_independent(table):
    again = run_sweep(small(workers=2))
    assert results_csv(again) == results_csv(table)


def test_seed_changes_results(table):
    other = run_sweep(small(seed=7))
    assert [r.values for r in other.rows] != [r.values for r in table.rows]


def test_certain_event_single_particle():
    # without awareness the collision is certain
    cfg = small(**{"estimator.trials": 1, "estimator.particles": 1, "estimator.awareness_ratios": [0.0],
                   "estimator.methods": ["ips"]})
    t = run_sweep(cfg)
    assert t.rows[0].mean == 1.0


def test_csv_layout(table):
    rows = list(csv.reader(io.StringIO(results_csv(table))))
    assert rows[0] == ["awareness_ratio", "method", "mean", "std", "stderr", "count", "hits", "level_means"]
    assert len(rows) == 5
    assert float(rows[1][2]) == table.rows[0].mean
    assert rows[2][1] == "MC" and rows[2][7] == ""


def test_single_row_csv():
    t = ResultTable(1, {}, [ResultRow(1.5, IPS, [0.5, 0.25], 2, (1.0, 0.375))])
    assert results_csv(t).count("\r\n") == 2
    assert "1.0;0.375" in results_csv(t)


def test_curve_csv(table):
    rows = list(csv.DictReader(io.StringIO(curve_csv(table))))
    assert {r["method"] for r in rows} == {"IPS-FAS", "MC"}
    assert all(float(r["lower"]) <= float(r["mean"]) <= float(r["upper"]) for r in rows)


def test_json_round_trip_is_exact(table, tmp_path):
    emit_results(table, tmp_path, ("json",))
    back = load_results(tmp_path / "results.json")
    for a, b in zip(table.rows, back.rows):
        assert a.mean == b.mean and a.values == b.values and a.level_means == b.level_means
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["provenance"]["seed"] == table.seed
    assert doc["provenance"]["fields"]["estimator.particles"] == "reported"
    assert doc["config"] == to_dict(small())


def test_emit_rejects_empty_and_unwritable(tmp_path):
    with pytest.raises(ValueError):
        emit_results(ResultTable(0, {}), tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    t = ResultTable(1, {}, [ResultRow(1.5, IPS, [0.5], 1)])
    with pytest.raises(ExperimentError):
        emit_results(t, blocker / "sub")


def test_overlapping_start_is_refused():
    cfg = small(**{"scenario.el_start": [0.0, 1.0]})
    with pytest.raises(ExperimentError, match="first level"):
        run_sweep(cfg)


def test_partial_rows_survive_interrupt(monkeypatch):
    import gshs_risk.harness as h
    calls = {"n": 0}
    real = h._mc_runs

    def flaky(*args):
        calls["n"] += 1
        if calls["n"] == 2:
            raise KeyboardInterrupt
        return real(*args)

    monkeypatch.setattr(h, "_mc_runs", flaky)
    t = ResultTable(0, {})
    with pytest.raises(KeyboardInterrupt):
        run_sweep(small(), table=t)
    assert [r.method for r in t.rows] == [IPS, MC, IPS]
    assert not t.complete


def test_toy_oracle_suite_quick():
    cases = toy_oracle_suite(3, trials=20, n_particles=50, include_barrier=False)
    by_name = {c.name: c for c in cases}
    assert by_name["ladder(p=1.0, rungs=3)"].estimate == 1.0
    assert by_name["ladder(p=0.0, rungs=3)"].estimate == 0.0
    assert "rel.err" in oracle_report(cases)
