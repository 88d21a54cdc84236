"""Learning sweeps over approach conditions and leg designs.

Every (V, phi, design, repeat) cell is an independent learning run whose seed
comes from a stable hash of the cell coordinates, so results do not depend on
execution order or worker count.  Finished cells are cached one JSON file
each, which is what makes a sweep resumable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import Config, LegDesign
from .control import MAX_ANGLE, MAX_SPEED, MIN_ANGLE, MIN_SPEED
from .ephe import EpheConfig, run_learning
from .rollout import Scenario

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WORKERS_ENV = "PERCH_WORKERS"


@dataclass(frozen=True)
class Cell:
    speed: float
    angle: float
    design: str
    repeat: int

    @property
    def key(self) -> str:
        return f"{self.speed!r}|{self.angle!r}|{self.design}|{self.repeat}"


def cell_seed(base_seed: int, cell: Cell) -> int:
    digest = hashlib.sha256(f"{base_seed}|{cell.key}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class SweepGrid:
    speeds: tuple[float, ...]
    angles: tuple[float, ...]
    designs: tuple[LegDesign, ...]
    repeats: int = 5
    base_seed: int = 0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.speeds or not self.angles or not self.designs:
            raise ValueError("grid axes must be non-empty")
        for v in self.speeds:
            if not MIN_SPEED - 1e-9 <= v <= MAX_SPEED + 1e-9:
                raise ValueError(f"speed {v} outside [{MIN_SPEED}, {MAX_SPEED}]")
        for a in self.angles:
            if not MIN_ANGLE - 1e-9 <= a <= MAX_ANGLE + 1e-9:
                raise ValueError(f"angle {a} outside [{MIN_ANGLE}, {MAX_ANGLE}]")
        names = [d.name for d in self.designs]
        if len(set(names)) != len(names):
            raise ValueError("design names must be unique")

    @classmethod
    def from_config(cls, config: Config) -> "SweepGrid":
        g = config.grid
        designs = tuple(config.design(n) for n in g.designs) if g.designs else config.legs
        return cls(tuple(map(float, g.speeds)), tuple(map(float, g.angles)), designs,
                   g.repeats, g.seed)

    def cells(self) -> list[Cell]:
        return [Cell(float(v), float(a), d.name, r)
                for d in self.designs for v in self.speeds for a in self.angles
                for r in range(self.repeats)]


@dataclass
class SweepRecord:
    speed: float
    angle: float
    design: str
    repeat: int
    seed: int
    converged: bool = False
    rrev_trigger: float = math.nan
    flip_moment_nmm: float = math.nan
    sigma_rrev: float = math.nan
    sigma_moment: float = math.nan
    rollouts_used: int = 0
    success_rate: float = 0.0
    trigger_rrev: float = math.nan
    trigger_of_y: float = math.nan
    trigger_d_ceiling: float = math.nan
    trigger_vx: float = math.nan
    trigger_vz: float = math.nan
    error: str = ""

    @property
    def has_trigger(self) -> bool:
        return math.isfinite(self.trigger_d_ceiling)

    @property
    def cell(self) -> Cell:
        return Cell(self.speed, self.angle, self.design, self.repeat)

    def to_row(self) -> dict:
        return {k: (repr(v) if isinstance(v, float) else (int(v) if isinstance(v, bool) else v))
                for k, v in asdict(self).items()}

    @classmethod
    def from_row(cls, row: dict) -> "SweepRecord":
        kw = {}
        for f in fields(cls):
            raw = row[f.name]
            if f.type in ("float", float):
                kw[f.name] = float(raw)
            elif f.type in ("int", int):
                kw[f.name] = int(raw)
            elif f.type in ("bool", bool):
                kw[f.name] = raw in (True, 1, "1", "True", "true")
            else:
                kw[f.name] = raw
        return cls(**kw)


RECORD_FIELDS = tuple(f.name for f in fields(SweepRecord))


def run_cell(cell: Cell, config: Config, base_seed: int = 0) -> SweepRecord:
    """Learn one cell; failures are captured in the record, never raised."""
    seed = cell_seed(base_seed, cell)
    rec = SweepRecord(cell.speed, cell.angle, cell.design, cell.repeat, seed)
    try:
        scenario = Scenario.build(cell.speed, cell.angle, cell.design, config)
        result = run_learning(config=EpheConfig.from_params(config.ephe, seed),
                              sim_config=config, condition=(cell.speed, cell.angle),
                              design=scenario.design)
        rec.converged = result.converged
        rec.rrev_trigger, rec.flip_moment_nmm = result.mean
        rec.sigma_rrev, rec.sigma_moment = result.distribution.sigma
        rec.rollouts_used = result.rollouts_used
        rec.success_rate = result.final_success_rate
        # trigger cues of the converged mean policy
        res, _ = scenario.run(result.policy, seed)
        snap = scenario.outcome(res, result.policy).trigger_snapshot
        if snap is None and result.final_snapshots:
            snap = result.final_snapshots[-1]
        if snap is not None:
            rec.trigger_rrev, rec.trigger_of_y = float(snap.rrev), float(snap.of_y)
            rec.trigger_d_ceiling = float(snap.d_ceiling)
            rec.trigger_vx, rec.trigger_vz = float(snap.v_x), float(snap.v_z)
    except Exception as exc:  # recorded, the sweep carries on
        log.warning("cell %s failed: %s", cell.key, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _cache_path(cache_dir: Path, cell: Cell, base_seed: int) -> Path:
    return cache_dir / f"{cell_seed(base_seed, cell):016x}.json"


def _load_cached(path: Path, cell: Cell) -> SweepRecord | None:
    try:
        rec = SweepRecord.from_row(json.loads(path.read_text()))
    except (OSError, ValueError, KeyError):
        return None
    return rec if rec.cell == cell else None


def _worker(args):
    cell, config, base_seed = args
    return cell, run_cell(cell, config, base_seed)


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        workers = int(env)
    return max(1, workers or 1)


def run_sweep(grid: SweepGrid, config: Config | None = None, out_dir: str | Path | None = None,
              workers: int | None = None, resume: bool = False,
              progress: Callable[[int, int, SweepRecord], None] | None = None
              ) -> list[SweepRecord]:
    """Run every cell of ``grid``; returns records in canonical cell order.

    With ``out_dir`` each finished cell is cached and the per-design CSV
    files plus ``summary.json`` are written at the end.  ``resume`` reuses
    cached cells.  ``PERCH_WORKERS`` overrides ``workers``.
    """
    config = config or Config()
    config = _with_designs(config, grid.designs)
    cells = grid.cells()
    done: dict[Cell, SweepRecord] = {}
    cache_dir = None
    if out_dir is not None:
        cache_dir = Path(out_dir) / "cells"
        cache_dir.mkdir(parents=True, exist_ok=True)
        if resume:
            for cell in cells:
                rec = _load_cached(_cache_path(cache_dir, cell, grid.base_seed), cell)
                if rec is not None:
                    done[cell] = rec
    todo = [c for c in cells if c not in done]
    n_workers = min(resolve_workers(workers), max(1, len(todo)))

    def finish(cell, rec):
        done[cell] = rec
        if cache_dir is not None:
            path = _cache_path(cache_dir, cell, grid.base_seed)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(rec.to_row()))
            tmp.replace(path)
        if progress:
            progress(len(done), len(cells), rec)

    if n_workers == 1:
        for cell in todo:
            finish(cell, run_cell(cell, config, grid.base_seed))
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            futures = [pool.submit(_worker, (c, config, grid.base_seed)) for c in todo]
            for fut in as_completed(futures):
                finish(*fut.result())
    records = [done[c] for c in cells]
    if out_dir is not None:
        write_outputs(records, grid, out_dir)
    return records


def _with_designs(config: Config, designs: Sequence[LegDesign]) -> Config:
    known = {d.name: d for d in config.legs}
    known.update({d.name: d for d in designs})
    from dataclasses import replace
    return replace(config, legs=tuple(known.values()))


def design_slug(name: str) -> str:
    return "".join(ch.lower() if ch.isalnum() else "_" for ch in name).strip("_")


def write_records_csv(records: Iterable[SweepRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_row())


def load_records(paths: str | Path | Sequence[str | Path]) -> list[SweepRecord]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        with open(p, newline="") as fh:
            out.extend(SweepRecord.from_row(row) for row in csv.DictReader(fh))
    return out


def success_table(records: Iterable[SweepRecord]) -> dict[tuple[str, float, float], float]:
    """Mean success over repeats per (design, V, phi)."""
    acc: dict[tuple[str, float, float], list[float]] = {}
    for r in records:
        acc.setdefault((r.design, r.speed, r.angle), []).append(r.success_rate)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def summarize(records: Sequence[SweepRecord], grid: SweepGrid | None = None) -> dict:
    table = success_table(records)
    designs: dict[str, dict] = {}
    for rec in records:
        d = designs.setdefault(rec.design, {"records": 0, "errors": 0, "converged": 0,
                                            "success": []})
        d["records"] += 1
        d["errors"] += bool(rec.error)
        d["converged"] += bool(rec.converged)
        d["success"].append(rec.success_rate)
    for name, d in designs.items():
        d["mean_success"] = float(np.mean(d.pop("success")))
        d["success_map"] = [[v, a, s] for (n, v, a), s in sorted(table.items()) if n == name]
    doc = {"schema_version": SCHEMA_VERSION, "designs": designs}
    if grid is not None:
        doc["grid"] = {"speeds": list(grid.speeds), "angles": list(grid.angles),
                       "designs": [asdict(d) for d in grid.designs],
                       "repeats": grid.repeats, "base_seed": grid.base_seed}
    return doc


def write_outputs(records: Sequence[SweepRecord], grid: SweepGrid, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for d in grid.designs:
        p = out_dir / f"records_{design_slug(d.name)}.csv"
        write_records_csv([r for r in records if r.design == d.name], p)
        paths.append(p)
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps(summarize(records, grid), indent=2, sort_keys=True))
    paths.append(summary)
    return paths
