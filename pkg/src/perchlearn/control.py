"""Approach tracking, RREV trigger and the open-loop flip.

Before the trigger the vehicle follows a constant-velocity approach with a
geometric (SE(3)) tracking controller.  Once RREV reaches the policy
threshold the controller latches into a constant differential-thrust command
that pitches the nose up about body y and never looks at the state again.
The rollout cuts the motors when the first foot latches, since any thrust
from an inverted body pushes it away from the ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import ControllerParams, RolloutParams, VehicleParams
from .dynamics import QuadState, vee

MIN_SPEED, MAX_SPEED = 0.25, 4.0
MIN_ANGLE, MAX_ANGLE = 20.0, 90.0


@dataclass(frozen=True)
class ApproachTrajectory:
    """Hover start, minimum-jerk velocity ramp, then constant velocity.

    ``speed`` is in m/s and ``angle`` in degrees above horizontal; motion is
    in the world x-z plane.
    """

    speed: float
    angle: float
    ramp_duration: float = 0.8
    start_position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not MIN_SPEED - 1e-9 <= self.speed <= MAX_SPEED + 1e-9:
            raise ValueError(f"speed {self.speed} outside [{MIN_SPEED}, {MAX_SPEED}] m/s")
        if not MIN_ANGLE - 1e-9 <= self.angle <= MAX_ANGLE + 1e-9:
            raise ValueError(f"angle {self.angle} outside [{MIN_ANGLE}, {MAX_ANGLE}] deg")
        if not self.ramp_duration > 0:
            raise ValueError("ramp_duration must be positive")

    @classmethod
    def for_condition(cls, speed: float, angle: float,
                      gains: ControllerParams | None = None) -> "ApproachTrajectory":
        """Ramp long enough to keep the peak acceleration under ``ramp_max_accel``."""
        gains = gains or ControllerParams()
        ramp = max(gains.ramp_min_duration, 1.875 * speed / gains.ramp_max_accel)
        return cls(speed, angle, ramp)

    @property
    def final_velocity(self) -> np.ndarray:
        phi = math.radians(self.angle)
        return self.speed * np.array([math.cos(phi), 0.0, math.sin(phi)])

    def reference(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Desired position, velocity and acceleration at time ``t``."""
        return reference_kernel(t, np.asarray(self.start_position, dtype=float),
                                self.final_velocity, self.ramp_duration)

    def start_distance(self, gains: ControllerParams | None = None,
                       rollout: RolloutParams | None = None) -> float:
        """Hover distance below the ceiling for this condition.

        Covers the ramp, a constant-velocity segment of
        ``constant_segment`` seconds, and the distance at which an RREV
        threshold of ``rrev_min_plausible`` would fire.
        """
        gains = gains or ControllerParams()
        rollout = rollout or RolloutParams()
        vz = self.final_velocity[2]
        trigger_zone = max(vz / rollout.rrev_min_plausible, rollout.min_trigger_distance)
        return vz * (0.5 * self.ramp_duration + gains.constant_segment) + trigger_zone


@njit(cache=True)
def reference_kernel(t, start, v_final, ramp):
    if t <= 0.0:
        return start.copy(), np.zeros(3), np.zeros(3)
    if t >= ramp:
        p = start + v_final * (0.5 * ramp + (t - ramp))
        return p, v_final.copy(), np.zeros(3)
    s = t / ramp
    blend = 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5
    dblend = (30 * s ** 2 - 60 * s ** 3 + 30 * s ** 4) / ramp
    integral = ramp * (2.5 * s ** 4 - 3 * s ** 5 + s ** 6)
    return start + v_final * integral, v_final * blend, v_final * dblend


@njit(cache=True)
def tracking_kernel(pos, vel, R, omega, p_d, v_d, a_d, mass, g, inertia, kx, kv, kR, kO):
    e_x = pos - p_d
    e_v = vel - v_d
    F = -kx * e_x - kv * e_v + mass * a_d
    F[2] += mass * g
    collective = F[0] * R[0, 2] + F[1] * R[1, 2] + F[2] * R[2, 2]
    nF = math.sqrt(F @ F)
    if nF < 1e-9:
        b3 = R[:, 2].copy()
    else:
        b3 = F / nF
    b1d = np.array([1.0, 0.0, 0.0])
    b2 = np.cross(b3, b1d)
    b2 /= math.sqrt(b2 @ b2)
    b1 = np.cross(b2, b3)
    Rd = np.empty((3, 3))
    Rd[:, 0] = b1
    Rd[:, 1] = b2
    Rd[:, 2] = b3
    e_R = 0.5 * vee(Rd.T @ R - R.T @ Rd)
    moments = -kR * e_R - kO * omega + np.cross(omega, inertia * omega)
    return collective, moments


@njit(cache=True)
def flip_kernel(moment_mag, weight, arm, tmax, rear_off):
    """Collective and pitch moment for a nose-up flip of ``moment_mag``.

    The per-motor front/rear difference is ``moment_mag / (2 arm)``.  With
    ``rear_off`` the rear pair idles at zero and the front pair carries the
    whole difference; otherwise the mean motor thrust stays at hover when that
    fits in [0, tmax] and is shifted just enough to keep both pairs feasible.
    A zero moment always holds hover.
    """
    diff = moment_mag / (2.0 * arm)
    saturated = False
    if diff > tmax:
        diff = tmax
        saturated = True
    if moment_mag == 0.0:
        return weight, 0.0, saturated
    if rear_off:
        return 2.0 * diff, -2.0 * arm * diff, saturated
    center = min(max(weight / 4.0, 0.5 * diff), tmax - 0.5 * diff)
    return 4.0 * center, -2.0 * arm * diff, saturated


@dataclass(frozen=True)
class FlipCommand:
    triggered: bool
    trigger_time: float
    commanded_moment: float  # N*m about body y; negative pitches nose up

    def __post_init__(self):
        if self.commanded_moment > 0:
            raise ValueError("flip moment about body y must be <= 0")


@dataclass(frozen=True)
class ControlOutput:
    collective_thrust: float
    body_moments: np.ndarray
    saturated: bool = False


def tracking_control(state: QuadState, reference: ApproachTrajectory,
                     params: VehicleParams | None = None,
                     gains: ControllerParams | None = None,
                     inertia=None) -> ControlOutput:
    params = params or VehicleParams()
    gains = gains or ControllerParams()
    J = np.asarray(params.inertia if inertia is None else inertia, dtype=float)
    p_d, v_d, a_d = reference.reference(state.time)
    f, M = tracking_kernel(state.position, state.velocity, state.orientation,
                           state.angular_rate, p_d, v_d, a_d, params.mass, params.gravity,
                           J, gains.kx, gains.kv, np.asarray(gains.kR, dtype=float),
                           np.asarray(gains.kOmega, dtype=float))
    return ControlOutput(float(f), M)


def check_trigger(perception, policy) -> bool:
    """True once RREV has reached the policy threshold (boundary inclusive)."""
    return bool(perception.rrev >= policy.rrev_trigger)


def max_flip_moment(params: VehicleParams) -> float:
    """Largest nose-up moment: front pair at T_max, rear pair off."""
    return 2.0 * params.max_motor_thrust * params.arm_length


def flip_control(command: FlipCommand, params: VehicleParams | None = None,
                 rear_off: bool = False) -> ControlOutput:
    params = params or VehicleParams()
    if not command.triggered:
        raise ValueError("flip_control called before the trigger fired")
    f, my, sat = flip_kernel(abs(command.commanded_moment), params.weight,
                             params.arm_length, params.max_motor_thrust, rear_off)
    return ControlOutput(float(f), np.array([0.0, my, 0.0]), bool(sat))
