"""Composite rollout reward: closeness + inversion angle + attached legs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

D_FLOOR = 0.02  # m; keeps 1/min_d finite when the COM reaches the ceiling
LEG_TIERS = {0: 0.0, 1: 50.0, 2: 50.0, 3: 150.0, 4: 150.0}


@dataclass(frozen=True)
class RolloutOutcome:
    min_d_ceiling: float
    impact_angle: float  # degrees of body inversion at first contact
    n_legs_attached: int
    body_or_rotor_contact: bool
    trigger_snapshot: Any = None
    policy_used: Any = None
    triggered: bool = False
    failed: bool = False  # integration blow-up
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.min_d_ceiling < 0:
            raise ValueError("min_d_ceiling must be >= 0")
        if not 0.0 <= self.impact_angle <= 180.0:
            raise ValueError("impact_angle must lie in [0, 180] degrees")
        if self.n_legs_attached not in LEG_TIERS:
            raise ValueError("n_legs_attached must be in 0..4")

    @property
    def success_four_leg(self) -> bool:
        return self.n_legs_attached >= 4 and not self.body_or_rotor_contact and not self.failed


@dataclass(frozen=True)
class RewardBreakdown:
    r_d_ceil: float
    r_theta: float
    r_legs: float

    @property
    def total(self) -> float:
        return self.r_d_ceil + self.r_theta + self.r_legs


def compute_reward(outcome: RolloutOutcome, d_floor: float = D_FLOOR) -> RewardBreakdown:
    if outcome.failed:
        return RewardBreakdown(0.0, 0.0, 0.0)
    r_d = 1.0 / max(outcome.min_d_ceiling, d_floor)
    theta = abs(outcome.impact_angle)
    r_theta = 10.0 * theta / 90.0 if theta < 90.0 else 10.0
    r_legs = LEG_TIERS[outcome.n_legs_attached]
    if outcome.body_or_rotor_contact:
        r_legs /= 2.0
    return RewardBreakdown(r_d, r_theta, r_legs)
