import json
from dataclasses import replace

import pytest

from perchlearn import sweep as sweep_mod
from perchlearn.config import Config
from perchlearn.sweep import (SCHEMA_VERSION, Cell, SweepGrid, SweepRecord, cell_seed,
                              load_records, resolve_workers, run_sweep, success_table,
                              summarize, write_records_csv)

WIDE = Config().design("Wide-Short")


@pytest.fixture(scope="module")
def quick():
    cfg = Config()
    return replace(cfg, ephe=replace(cfg.ephe, max_rollouts=16, evaluation_rollouts=4))


def grid(**kw):
    base = dict(speeds=(1.5, 2.5), angles=(60.0, 90.0), designs=(WIDE,), repeats=1)
    base.update(kw)
    return SweepGrid(**base)


@pytest.fixture(scope="module")
def baseline(quick, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    return out, run_sweep(grid(), quick, out)


def test_grid_shape_and_files(baseline):
    out, recs = baseline
    assert len(recs) == 4
    assert {(r.speed, r.angle) for r in recs} == {(1.5, 60.0), (1.5, 90.0), (2.5, 60.0), (2.5, 90.0)}
    assert all(not r.error for r in recs)
    assert all(r.rollouts_used == 16 for r in recs)
    assert (out / "records_wide_short.csv").exists()
    doc = json.loads((out / "summary.json").read_text())
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["designs"]["Wide-Short"]["records"] == 4
    assert len(list((out / "cells").glob("*.json"))) == 4


def test_records_round_trip(baseline, tmp_path):
    _, recs = baseline
    path = tmp_path / "r.csv"
    write_records_csv(recs, path)
    back = load_records(path)
    assert len(back) == len(recs)
    # rows hold float reprs, so NaN fields compare equal as text
    assert [r.to_row() for r in back] == [r.to_row() for r in recs]


def test_rerun_is_deterministic(baseline, quick, tmp_path):
    out, recs = baseline
    again = run_sweep(grid(), quick, tmp_path)
    assert again == recs
    assert (tmp_path / "records_wide_short.csv").read_bytes() == \
        (out / "records_wide_short.csv").read_bytes()


def test_resume_only_runs_missing_cells(baseline, quick, tmp_path, monkeypatch):
    out, recs = baseline
    first = run_sweep(grid(), quick, tmp_path)
    cached = sorted((tmp_path / "cells").glob("*.json"))
    cached[0].unlink()
    calls = []
    real = sweep_mod.run_cell
    monkeypatch.setattr(sweep_mod, "run_cell", lambda *a: calls.append(a[0]) or real(*a))
    monkeypatch.delenv("PERCH_WORKERS", raising=False)
    resumed = run_sweep(grid(), quick, tmp_path, resume=True)
    assert len(calls) == 1
    assert resumed == first
    assert (tmp_path / "records_wide_short.csv").read_bytes() == \
        (out / "records_wide_short.csv").read_bytes()
    assert (tmp_path / "summary.json").read_bytes() == (out / "summary.json").read_bytes()


def test_order_and_workers_do_not_matter(baseline, quick):
    _, recs = baseline
    shuffled = run_sweep(grid(speeds=(2.5, 1.5), angles=(90.0, 60.0)), quick, workers=2)
    by_cell = {r.cell: r for r in shuffled}
    assert all(by_cell[r.cell] == r for r in recs)


def test_cell_seed_is_keyed_on_coordinates():
    a = Cell(2.5, 90.0, "Wide-Short", 0)
    assert cell_seed(0, a) == cell_seed(0, Cell(2.5, 90.0, "Wide-Short", 0))
    assert cell_seed(0, a) != cell_seed(1, a)
    assert cell_seed(0, a) != cell_seed(0, Cell(2.5, 90.0, "Wide-Short", 1))
    assert 0 <= cell_seed(0, a) < 2 ** 63


def test_workers_env_override(monkeypatch):
    monkeypatch.delenv("PERCH_WORKERS", raising=False)
    assert resolve_workers(3) == 3
    assert resolve_workers(None) == 1
    monkeypatch.setenv("PERCH_WORKERS", "2")
    assert resolve_workers(7) == 2


def test_grid_validation():
    with pytest.raises(ValueError):
        grid(speeds=(5.0,))
    with pytest.raises(ValueError):
        grid(angles=(10.0,))
    with pytest.raises(ValueError):
        grid(repeats=0)
    with pytest.raises(ValueError):
        grid(designs=(WIDE, WIDE))
    assert len(grid(repeats=3).cells()) == 12


def test_failed_cell_is_recorded_not_raised(quick):
    rec = sweep_mod.run_cell(Cell(2.5, 90.0, "Missing", 0), quick)
    assert rec.error.startswith("KeyError")
    assert rec.success_rate == 0.0 and not rec.has_trigger


def test_summary_tables():
    recs = [SweepRecord(1.0, 60.0, "A", r, 0, success_rate=s) for r, s in enumerate([1.0, 0.5])]
    recs.append(SweepRecord(1.0, 60.0, "B", 0, 0, success_rate=0.25, error="x"))
    assert success_table(recs) == {("A", 1.0, 60.0): 0.75, ("B", 1.0, 60.0): 0.25}
    doc = summarize(recs)
    assert doc["designs"]["A"]["mean_success"] == 0.75
    assert doc["designs"]["B"]["errors"] == 1
