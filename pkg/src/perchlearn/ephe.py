"""Episodic reward-weighted Gaussian search over flip policies.

Each episode samples N policies from a diagonal Gaussian, runs one rollout
per policy, keeps the K best returns and refits the mean and spread with the
returns as weights.  The distribution lives in display units (RREV in 1/s,
moment in N*mm) so both components have comparable scales.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import Config, EpheParams, LegDesign
from .control import ApproachTrajectory
from .reward import RewardBreakdown, RolloutOutcome, compute_reward
from .rollout import PolicyParams, Scenario

__all__ = ["PolicyParams", "PolicyDistribution", "EpheConfig", "RolloutRecord",
           "LearningResult", "sample", "update", "run_learning", "evaluate_policy",
           "physics_evaluator", "write_learning_log", "write_learning_summary"]

MAX_RESAMPLE = 100
STAGNATION_INFLATE = 1.2
# clamp value when a component keeps drawing <= 0
MIN_COMPONENT = 1e-3

Evaluator = Callable[[PolicyParams, int], tuple[RewardBreakdown, RolloutOutcome | None]]


@dataclass(frozen=True)
class PolicyDistribution:
    """Diagonal Gaussian over (RREV threshold [1/s], flip moment [N*mm])."""

    mean: tuple[float, float]
    sigma: tuple[float, float]

    def __post_init__(self):
        if len(self.mean) != 2 or len(self.sigma) != 2:
            raise ValueError("mean and sigma must have two components")
        if any(s < 0 or not math.isfinite(s) for s in self.sigma):
            raise ValueError("sigma must be finite and non-negative")

    @classmethod
    def initial(cls, params: EpheParams | None = None) -> "PolicyDistribution":
        params = params or EpheParams()
        return cls(tuple(map(float, params.initial_mean)), tuple(map(float, params.initial_sigma)))

    @property
    def policy(self) -> PolicyParams:
        """The mean as a concrete policy."""
        return PolicyParams.from_display(max(self.mean[0], MIN_COMPONENT),
                                         max(self.mean[1], MIN_COMPONENT))


@dataclass(frozen=True)
class EpheConfig:
    rollouts_per_episode: int = 8
    elite_count: int = 3
    max_rollouts: int = 160
    sigma_floor: float = 0.02
    convergence_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.elite_count <= self.rollouts_per_episode:
            raise ValueError("need 1 <= K <= N")
        if self.max_rollouts < self.rollouts_per_episode:
            raise ValueError("max_rollouts must cover at least one episode")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")

    @classmethod
    def from_params(cls, params: EpheParams, seed: int = 0) -> "EpheConfig":
        return cls(params.rollouts_per_episode, params.elite_count, params.max_rollouts,
                   params.sigma_floor, params.convergence_sigma, seed)


def _draw(dist: PolicyDistribution, rng: np.random.Generator) -> np.ndarray:
    theta = np.empty(2)
    for i in range(2):
        for _ in range(MAX_RESAMPLE):
            x = rng.normal(dist.mean[i], dist.sigma[i])
            if x > 0:
                break
        else:
            x = MIN_COMPONENT
        theta[i] = x
    return theta


def sample(dist: PolicyDistribution, rng: np.random.Generator) -> PolicyParams:
    """One policy; components that come out <= 0 are redrawn."""
    rrev, moment = _draw(dist, rng)
    return PolicyParams.from_display(rrev, moment)


def _as_theta(policy) -> np.ndarray:
    if isinstance(policy, PolicyParams):
        return np.array([policy.rrev_trigger, policy.flip_moment_nmm])
    return np.asarray(policy, dtype=float).reshape(2)


def elite_indices(rewards: Sequence[float], k: int) -> list[int]:
    """Indices of the k largest rewards; ties go to the earlier index."""
    order = sorted(range(len(rewards)), key=lambda i: (-rewards[i], i))
    return order[:k]


def update(dist: PolicyDistribution, episode: Sequence[tuple], elite_count: int = 3,
           sigma_floor: float = 0.02) -> PolicyDistribution:
    """Refit the distribution to the reward-weighted elite of one episode.

    ``episode`` holds (policy, reward) pairs where policy is a PolicyParams or a
    display-unit pair.  The variance is taken about the new mean.
    """
    if not episode:
        raise ValueError("empty episode")
    rewards = [float(r) for _, r in episode]
    if not all(math.isfinite(r) for r in rewards):
        raise ValueError("episode rewards must be finite")
    if any(r < 0 for r in rewards):
        raise ValueError("reward weighting needs non-negative rewards")
    k = min(elite_count, len(episode))
    idx = elite_indices(rewards, k)
    w = np.array([rewards[i] for i in idx])
    if w.sum() <= 0:
        sigma = tuple(max(s * STAGNATION_INFLATE, sigma_floor) for s in dist.sigma)
        return PolicyDistribution(dist.mean, sigma)
    thetas = np.array([_as_theta(episode[i][0]) for i in idx])
    w = w / w.sum()
    mean = w @ thetas
    var = w @ (thetas - mean) ** 2
    sigma = np.maximum(np.sqrt(var), sigma_floor)
    return PolicyDistribution(tuple(map(float, mean)), tuple(map(float, sigma)))


@dataclass
class RolloutRecord:
    episode: int
    index: int
    rrev_trigger: float
    flip_moment_nmm: float
    reward: RewardBreakdown
    outcome: RolloutOutcome | None = None
    seed: int = 0

    @property
    def success(self) -> bool:
        return bool(self.outcome is not None and self.outcome.success_four_leg)

    def row(self) -> dict:
        o = self.outcome
        snap = o.trigger_snapshot if o is not None else None
        return {
            "episode": self.episode, "index": self.index, "seed": self.seed,
            "rrev_trigger": self.rrev_trigger, "flip_moment_nmm": self.flip_moment_nmm,
            "r_d_ceil": self.reward.r_d_ceil, "r_theta": self.reward.r_theta,
            "r_legs": self.reward.r_legs, "reward": self.reward.total,
            "n_legs": "" if o is None else o.n_legs_attached,
            "body_contact": "" if o is None else int(o.body_or_rotor_contact),
            "impact_angle": "" if o is None else o.impact_angle,
            "min_d_ceiling": "" if o is None else o.min_d_ceiling,
            "success": int(self.success),
            "trigger_rrev": "" if snap is None else snap.rrev,
            "trigger_of_y": "" if snap is None else snap.of_y,
            "trigger_d_ceiling": "" if snap is None else snap.d_ceiling,
        }


@dataclass
class LearningResult:
    converged: bool
    distribution: PolicyDistribution
    history: list[list[RolloutRecord]]
    distributions: list[PolicyDistribution]
    rollouts_used: int
    final_records: list[RolloutRecord] = field(default_factory=list)

    @property
    def mean(self) -> tuple[float, float]:
        return self.distribution.mean

    @property
    def policy(self) -> PolicyParams:
        return self.distribution.policy

    @property
    def final_success_rate(self) -> float:
        if not self.final_records:
            return float("nan")
        return sum(r.success for r in self.final_records) / len(self.final_records)

    @property
    def final_snapshots(self) -> list:
        return [r.outcome.trigger_snapshot for r in self.final_records
                if r.outcome is not None and r.outcome.trigger_snapshot is not None]

    def summary(self) -> dict:
        snaps = self.final_snapshots
        cues = {}
        if snaps:
            cues = {name: float(np.mean([getattr(s, name) for s in snaps]))
                    for name in ("rrev", "of_y", "d_ceiling")}
        return {
            "converged": self.converged,
            "mean": list(self.mean),
            "sigma": list(self.distribution.sigma),
            "rollouts_used": self.rollouts_used,
            "episodes": len(self.history),
            "final_success_rate": self.final_success_rate,
            "final_rollouts": len(self.final_records),
            "final_trigger_cues": cues,
        }


def physics_evaluator(scenario: Scenario) -> Evaluator:
    def evaluate(policy: PolicyParams, seed: int):
        res, _ = scenario.run(policy, seed)
        outcome = scenario.outcome(res, policy)
        return compute_reward(outcome), outcome
    return evaluate


def run_learning(condition: ApproachTrajectory | tuple[float, float] | None = None,
                 design: LegDesign | str | None = None,
                 config: EpheConfig | None = None,
                 initial: PolicyDistribution | None = None, *,
                 sim_config: Config | None = None,
                 evaluator: Evaluator | None = None,
                 final_episodes: int = 3) -> LearningResult:
    """Iterate sample -> simulate -> reward -> update until sigma is small.

    Pass ``evaluator`` to learn against something other than the simulator
    (it maps a policy and a rollout seed to a reward breakdown and outcome).
    """
    sim_config = sim_config or Config()
    config = config or EpheConfig.from_params(sim_config.ephe)
    dist = initial or PolicyDistribution.initial(sim_config.ephe)
    if evaluator is None:
        if condition is None or design is None:
            raise ValueError("need a condition and design to simulate")
        if isinstance(condition, ApproachTrajectory):
            condition = (condition.speed, condition.angle)
        evaluator = physics_evaluator(Scenario.build(*condition, design, sim_config))

    rng = np.random.default_rng(config.seed)
    history: list[list[RolloutRecord]] = []
    dists = [dist]
    used = 0
    converged = False
    while used + config.rollouts_per_episode <= config.max_rollouts:
        episode = []
        for i in range(config.rollouts_per_episode):
            theta = _draw(dist, rng)
            seed = int(rng.integers(2 ** 31))
            policy = PolicyParams.from_display(*theta)
            reward, outcome = evaluator(policy, seed)
            episode.append(RolloutRecord(len(history), i, float(theta[0]), float(theta[1]),
                                         reward, outcome, seed))
        used += len(episode)
        history.append(episode)
        dist = update(dist, [((r.rrev_trigger, r.flip_moment_nmm), r.reward.total)
                             for r in episode], config.elite_count, config.sigma_floor)
        dists.append(dist)
        if max(dist.sigma) < config.convergence_sigma:
            converged = True
            break
    final = [r for ep in history[-final_episodes:] for r in ep]
    return LearningResult(converged, dist, history, dists, used, final)


def evaluate_policy(dist: PolicyDistribution, evaluator: Evaluator, n: int = 16,
                    seed: int = 0) -> list[RolloutRecord]:
    """Run ``n`` rollouts with policies drawn from ``dist``."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        theta = _draw(dist, rng)
        s = int(rng.integers(2 ** 31))
        reward, outcome = evaluator(PolicyParams.from_display(*theta), s)
        out.append(RolloutRecord(-1, i, float(theta[0]), float(theta[1]), reward, outcome, s))
    return out


LOG_FIELDS = ("episode", "index", "seed", "rrev_trigger", "flip_moment_nmm", "r_d_ceil",
              "r_theta", "r_legs", "reward", "n_legs", "body_contact", "impact_angle",
              "min_d_ceiling", "success", "trigger_rrev", "trigger_of_y", "trigger_d_ceiling")


def write_learning_log(result: LearningResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for episode in result.history:
            for rec in episode:
                writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v)
                                 for k, v in rec.row().items()})


def write_learning_summary(result: LearningResult, path: str | Path, **context) -> None:
    doc = dict(context)
    doc.update(result.summary())
    doc["trace"] = [{"mean": list(d.mean), "sigma": list(d.sigma)} for d in result.distributions]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
