"""Configuration sections and JSON loading.

Every tunable number in the simulator lives in one of the dataclasses below.
A configuration file is a JSON object whose top-level keys match the section
names of :class:`Config`; missing keys fall back to the defaults here.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class VehicleParams:
    """Rigid-body and actuator properties of the quadrotor (SI units)."""

    mass: float = 0.037
    inertia: tuple[float, float, float] = (1.65e-5, 1.66e-5, 2.93e-5)
    arm_length: float = 0.033
    max_motor_thrust: float = 0.15
    rotor_torque_coefficient: float = 0.006
    gravity: float = 9.81
    # each leg is a thin rod; its mass is part of ``mass`` and adds inertia
    leg_mass: float = 0.0005
    hip_radius: float = 0.02
    hip_depth: float = 0.01
    body_radius: float = 0.025
    rotor_radius: float = 0.023

    def __post_init__(self):
        values = [self.mass, *self.inertia, self.arm_length, self.max_motor_thrust,
                  self.rotor_torque_coefficient, self.gravity]
        if any(not v > 0 for v in values):
            raise ValueError("vehicle parameters must be strictly positive")
        if 4 * self.leg_mass >= self.mass:
            raise ValueError("legs cannot outweigh the vehicle")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


@dataclass(frozen=True)
class WorldConfig:
    ceiling_height: float = 2.0
    timestep: float = 2e-4

    def __post_init__(self):
        if not self.ceiling_height > 0:
            raise ValueError("ceiling_height must be positive")
        if not 0 < self.timestep <= 2e-3:
            raise ValueError("timestep must lie in (0, 2e-3]")


@dataclass(frozen=True)
class ContactParams:
    anchor_stiffness: float = 5000.0
    anchor_damping: float = 10.0
    # unilateral push-back used for body sphere and rotor disks
    surface_stiffness: float = 5000.0
    surface_damping: float = 10.0
    tolerance: float = 1e-3


@dataclass(frozen=True)
class ControllerParams:
    rate_hz: float = 500.0
    kx: float = 3.0
    kv: float = 0.8
    kR: tuple[float, float, float] = (0.05, 0.05, 0.01)
    kOmega: tuple[float, float, float] = (0.002, 0.002, 0.001)
    ramp_min_duration: float = 0.8
    ramp_max_accel: float = 3.0
    constant_segment: float = 0.4
    # False: keep mean motor thrust at hover when feasible (rear floor 0 otherwise)
    flip_rear_off: bool = False
    cut_motors_on_latch: bool = True


@dataclass(frozen=True)
class PerceptionParams:
    noise_std: float = 0.0
    window: int = 5
    singularity_delta: float = 0.05


@dataclass(frozen=True)
class RolloutParams:
    timeout_after_trigger: float = 1.5
    settle_time: float = 0.05
    # smallest RREV threshold the start distance is sized for
    rrev_min_plausible: float = 1.5
    min_trigger_distance: float = 0.3


@dataclass(frozen=True)
class EpheParams:
    rollouts_per_episode: int = 8
    elite_count: int = 3
    max_rollouts: int = 160
    sigma_floor: float = 0.02
    convergence_sigma: float = 0.05
    initial_mean: tuple[float, float] = (4.0, 5.0)
    initial_sigma: tuple[float, float] = (1.5, 1.5)
    evaluation_rollouts: int = 16


@dataclass(frozen=True)
class GridParams:
    speeds: tuple[float, ...] = tuple(0.25 * k for k in range(1, 17))
    angles: tuple[float, ...] = tuple(float(a) for a in range(20, 91, 10))
    designs: tuple[str, ...] = ()
    repeats: int = 5
    seed: int = 0


@dataclass(frozen=True)
class LegDesign:
    """Landing-gear geometry: rigid legs splayed ``psi`` degrees off body -z."""

    name: str
    length: float
    splay_angle: float
    hip_spring: float = 0.002
    hip_damping: float = 5e-5

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("leg length must be positive")
        if not 0.0 <= self.splay_angle < 90.0:
            raise ValueError("splay angle must lie in [0, 90) degrees")
        if self.hip_spring < 0 or self.hip_damping < 0:
            raise ValueError("hip compliance must be non-negative")


TABLE_DESIGNS = (
    LegDesign("Extra Narrow-Short", 0.05, 0.0),
    LegDesign("Narrow-Short", 0.05, 30.0),
    LegDesign("Wide-Short", 0.05, 60.0),
    LegDesign("Extra Narrow-Long", 0.10, 0.0),
    LegDesign("Narrow-Long", 0.10, 30.0),
    LegDesign("Wide-Long", 0.10, 60.0),
)


def _build(cls, data: dict[str, Any] | None):
    if not data:
        return cls()
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**kwargs)


@dataclass(frozen=True)
class Config:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    world: WorldConfig = field(default_factory=WorldConfig)
    contact: ContactParams = field(default_factory=ContactParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    rollout: RolloutParams = field(default_factory=RolloutParams)
    ephe: EpheParams = field(default_factory=EpheParams)
    grid: GridParams = field(default_factory=GridParams)
    legs: tuple[LegDesign, ...] = TABLE_DESIGNS

    def design(self, name: str) -> LegDesign:
        for leg in self.legs:
            if leg.name.lower() == name.lower():
                return leg
        raise KeyError(f"no leg design named {name!r}; have {[l.name for l in self.legs]}")

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["legs"] = [asdict(leg) for leg in self.legs]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Config":
        sections = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, klass in [("vehicle", VehicleParams), ("world", WorldConfig),
                            ("contact", ContactParams), ("controller", ControllerParams),
                            ("perception", PerceptionParams), ("rollout", RolloutParams),
                            ("ephe", EpheParams), ("grid", GridParams)]:
            if name in data:
                kwargs[name] = _build(klass, data[name])
        if "legs" in data:
            kwargs["legs"] = tuple(LegDesign(**leg) for leg in data["legs"])
        return cls(**kwargs)


def load_config(path: str | Path | None = None) -> Config:
    if path is None:
        return Config()
    with open(path) as fh:
        return Config.from_dict(json.load(fh))


def save_config(config: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
