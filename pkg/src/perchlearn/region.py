"""Trigger-time policy region and a generalized flip policy built from it.

Each learned cell contributes one point: the cues (RREV, OF_y, d_ceiling)
seen when its converged policy fired, labelled by its landing success rate.
Coordinates are standardized per axis.  The generalized policy is a local
lookup: among the k nearest successful points within a radius, the flip
moment is the inverse-distance weighted mean; with no such neighbor the
answer is "outside".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .reward import RolloutOutcome
from .rollout import LOG_COLUMNS, Scenario
from .sweep import SweepRecord

REGION_SCHEMA = 1
AXES = ("rrev", "of_y", "d_ceiling")
_T, _RREV, _OFY, _D = (LOG_COLUMNS.index(c) for c in ("t", "rrev", "of_y", "d_ceiling"))


@dataclass(frozen=True)
class RegionPoint:
    rrev: float
    of_y: float
    d_ceiling: float
    success: float
    flip_moment: float  # N*m
    speed: float = math.nan
    angle: float = math.nan
    design: str = ""

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.rrev, self.of_y, self.d_ceiling)):
            raise ValueError("region coordinates must be finite")
        if not 0.0 <= self.success <= 1.0:
            raise ValueError("success rate must lie in [0, 1]")

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.rrev, self.of_y, self.d_ceiling])

    @classmethod
    def from_record(cls, rec: SweepRecord) -> "RegionPoint":
        return cls(rec.trigger_rrev, rec.trigger_of_y, rec.trigger_d_ceiling,
                   min(1.0, max(0.0, rec.success_rate)), rec.flip_moment_nmm * 1e-3,
                   rec.speed, rec.angle, rec.design)


@dataclass(frozen=True)
class PolicyDecision:
    trigger: bool
    flip_moment: float = math.nan  # N*m
    spread: float = math.nan  # N*m, std of neighborhood moments
    neighbors: int = 0

    @property
    def outside(self) -> bool:
        return not self.trigger


@dataclass
class RegionModel:
    points: list[RegionPoint]
    tau: float = 0.8
    k: int = 5
    radius: float = 1.0
    design: str = ""
    center: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.points:
            raise ValueError("region needs at least one point")
        if self.k < 1 or self.radius <= 0:
            raise ValueError("k must be >= 1 and radius positive")
        raw = self.raw_coords
        if self.center is None:
            self.center = raw.mean(axis=0)
        if self.scale is None:
            s = raw.std(axis=0)
            self.scale = np.where(s > 0, s, 1.0)
        self.center = np.asarray(self.center, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)

    @property
    def raw_coords(self) -> np.ndarray:
        return np.array([p.coords for p in self.points])

    @property
    def coords(self) -> np.ndarray:
        """Standardized coordinates, one row per point."""
        return (self.raw_coords - self.center) / self.scale

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.success >= self.tau for p in self.points])

    @property
    def region_points(self) -> list[RegionPoint]:
        return [p for p, keep in zip(self.points, self.labels) if keep]

    def standardize(self, point: Sequence[float]) -> np.ndarray:
        return (np.asarray(point, dtype=float) - self.center) / self.scale

    def query(self, point: Sequence[float]) -> PolicyDecision:
        return query_policy(self, point)


def build_region(records: Sequence[SweepRecord], tau: float = 0.8, design: str | None = None,
                 k: int = 5, radius: float = 1.0) -> RegionModel:
    """Region model from sweep records that carry a trigger snapshot."""
    if not records:
        raise ValueError("no records")
    use = [r for r in records if (design is None or r.design == design)
           and not r.error and r.has_trigger and math.isfinite(r.flip_moment_nmm)]
    if not use:
        raise ValueError("no usable records (need a trigger snapshot)")
    return RegionModel([RegionPoint.from_record(r) for r in use], tau, k, radius, design or "")


def query_policy(model: RegionModel, point: Sequence[float]) -> PolicyDecision:
    """Trigger decision and flip moment for cues (RREV, OF_y, d_ceiling)."""
    q = model.standardize(point)
    if not np.all(np.isfinite(q)):
        return PolicyDecision(False)
    mask = model.labels
    if not mask.any():
        return PolicyDecision(False)
    pts = model.coords[mask]
    moments = np.array([p.flip_moment for p, m in zip(model.points, mask) if m])
    dist = np.linalg.norm(pts - q, axis=1)
    order = np.argsort(dist, kind="stable")[:model.k]
    order = order[dist[order] <= model.radius]
    if order.size == 0:
        return PolicyDecision(False)
    d, m = dist[order], moments[order]
    spread = float(m.std()) if m.size > 1 else 0.0
    exact = d < 1e-12
    if exact.any():
        value = float(m[exact].mean())
    else:
        w = 1.0 / d
        value = float(w @ m / w.sum())
    return PolicyDecision(True, value, spread, int(order.size))


def loo_knn_accuracy(coords: np.ndarray, labels: np.ndarray, k: int = 5) -> float:
    """Leave-one-out k-NN accuracy (majority vote, ties go to 'success')."""
    X = np.asarray(coords, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n = len(X)
    if n < 2:
        raise ValueError("need at least two points")
    k = min(k, n - 1)
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    np.fill_diagonal(D, np.inf)
    correct = 0
    for i in range(n):
        nn = np.argsort(D[i], kind="stable")[:k]
        vote = y[nn].sum() * 2 >= k
        correct += vote == y[i]
    return correct / n


def separability(model: RegionModel, k: int = 5) -> tuple[float, float]:
    """LOO k-NN accuracy with d_ceiling (3-D) and without it (RREV, OF_y)."""
    X, y = model.coords, model.labels
    return loo_knn_accuracy(X, y, k), loo_knn_accuracy(X[:, :2], y, k)


def export_region(model: RegionModel) -> dict:
    return {
        "schema_version": REGION_SCHEMA,
        "design": model.design,
        "tau": model.tau, "k": model.k, "radius": model.radius,
        "axes": list(AXES),
        "center": model.center.tolist(), "scale": model.scale.tolist(),
        "points": [asdict(p) for p in model.points],
    }


def import_region(doc: dict) -> RegionModel:
    if doc.get("schema_version") != REGION_SCHEMA:
        raise ValueError(f"unsupported region schema {doc.get('schema_version')!r}")
    points = [RegionPoint(**p) for p in doc["points"]]
    return RegionModel(points, doc["tau"], doc["k"], doc["radius"], doc.get("design", ""),
                       np.array(doc["center"]), np.array(doc["scale"]))


def save_region(model: RegionModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(export_region(model), indent=2))


def load_region(path: str | Path) -> RegionModel:
    return import_region(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class GeneralizedRun:
    outcome: RolloutOutcome | None
    decision: PolicyDecision
    trigger_tick: int | None


def fly_generalized(scenario: Scenario, model: RegionModel, seed: int = 0) -> GeneralizedRun:
    """Approach, query the region at every controller tick, flip on the first hit.

    The approach is open loop with respect to the flip policy, so the cue
    sequence up to the trigger is the same with or without a policy.  The
    approach is therefore flown once without triggering, the first tick whose
    cues land in the region is found, and the rollout is replayed with the
    flip forced at that tick and the looked-up moment.
    """
    ramp = scenario.condition.ramp_duration
    _, cues = scenario.run(None, seed, forced_tick=2 ** 62, moment=0.0, log=True,
                           horizon=scenario.approach_duration)
    for tick, row in enumerate(cues):
        if row[_T] < ramp - 1e-12 or row[_D] <= 0:
            continue
        decision = query_policy(model, (row[_RREV], row[_OFY], row[_D]))
        if decision.trigger:
            res, _ = scenario.run(None, seed, forced_tick=tick, moment=decision.flip_moment)
            return GeneralizedRun(scenario.outcome(res, None), decision, tick)
    return GeneralizedRun(None, PolicyDecision(False), None)
