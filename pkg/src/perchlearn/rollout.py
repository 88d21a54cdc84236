"""Single landing rollout: hover, ramp, approach, trigger, flip, contact.

The whole loop runs inside one numba kernel.  Physics advances at
``world.timestep``; the controller and the emulated cues update every
``round(1 / (rate_hz * timestep))`` physics steps with a zero-order hold in
between.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .config import Config, LegDesign
from .contact import contact_kernel, design_inertia, leg_geometry, rotor_positions
from .control import ApproachTrajectory, flip_kernel, reference_kernel, tracking_kernel
from .dynamics import mix_kernel, rotation_to_quaternion, step_kernel
from .perception import DistanceEstimator, PerceptionState
from .reward import RolloutOutcome

MODE_THRESHOLD, MODE_FORCED = 0, 1

# result vector layout
(R_MIN_D, R_IMPACT, R_LEGS, R_BODY, R_TRIGGERED, R_FAILED, R_T_TRIGGER, R_D, R_RREV, R_OFY,
 R_VX, R_VZ, R_ZACC, R_T_END, R_TICKS, R_MOMENT_APPLIED, R_SAT, R_END_REASON) = range(18)
N_RESULT = 18

END_SUCCESS, END_TIMEOUT, END_FALL, END_NO_TRIGGER, END_BLOWUP = range(5)
END_REASONS = ("landed", "timeout", "fell", "no_trigger", "blowup")

LOG_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "r00", "r01", "r02", "r10", "r11", "r12",
               "r20", "r21", "r22", "wx", "wy", "wz", "T1", "T2", "T3", "T4", "collective",
               "Mx", "My", "Mz", "flip", "d_ceiling", "rrev", "of_y", "z_accel", "n_latched")


@njit(cache=True)
def _inversion_deg(R):
    c = min(1.0, max(-1.0, R[2, 2]))
    return math.degrees(math.acos(c))


@njit(cache=True)
def rollout_kernel(mass, inertia, g, arm, kq, tmax,
                   ceiling, dt, ctrl_every,
                   k_a, c_a, k_s, c_s, tol, k_hip, c_hip, body_radius, rotor_radius,
                   hips_body, feet_body, rotors_body,
                   kx, kv, kR, kO, start, v_final, ramp, rear_off, cut_on_latch,
                   mode, rrev_c, forced_tick, moment_mag,
                   t_max_total, timeout_after_trigger, settle_time,
                   noise_std, seed, log, max_ticks):
    res = np.zeros(N_RESULT)
    logbuf = np.zeros((max_ticks if log else 1, 33))
    if noise_std > 0.0:
        np.random.seed(seed)

    pos = start.copy()
    vel = np.zeros(3)
    R = np.eye(3)
    omega = np.zeros(3)
    weight = mass * g
    thrusts = np.full(4, weight / 4.0)
    acc = np.zeros(3)
    collective = weight
    moments = np.zeros(3)

    latched = np.zeros(4, dtype=np.bool_)
    anchors = np.zeros((4, 3))
    latch_R = np.zeros((4, 3, 3))

    triggered = False
    t_trigger = 0.0
    min_d = ceiling - pos[2]
    angle_at_min = 0.0
    impact_angle = -1.0
    touched = False
    settle_start = -1.0
    rrev = 0.0
    of_y = 0.0
    d_last = min_d
    tick = 0
    t = 0.0
    end_reason = END_NO_TRIGGER
    failed = False
    n_steps = int(math.ceil(t_max_total / dt)) + 1

    for n in range(n_steps):
        if n % ctrl_every == 0:
            d = ceiling - pos[2]
            if d > 0.0:
                d_last = d
                rrev = vel[2] / d
                of_y = -vel[0] / d
                if noise_std > 0.0:
                    rrev += np.random.normal(0.0, noise_std)
                    of_y += np.random.normal(0.0, noise_std)
            if not triggered and t >= ramp - 1e-12:
                fire = False
                if mode == MODE_THRESHOLD:
                    fire = rrev >= rrev_c
                else:
                    fire = tick >= forced_tick
                if fire:
                    triggered = True
                    t_trigger = t
                    res[R_T_TRIGGER] = t
                    res[R_D] = d_last
                    res[R_RREV] = rrev
                    res[R_OFY] = of_y
                    res[R_VX] = vel[0]
                    res[R_VZ] = vel[2]
                    res[R_ZACC] = acc[2]
                    collective, my, sat = flip_kernel(moment_mag, weight, arm, tmax, rear_off)
                    moments = np.array([0.0, my, 0.0])
                    thrusts, sat2 = mix_kernel(collective, moments, arm, kq, tmax)
                    res[R_MOMENT_APPLIED] = -my
                    res[R_SAT] = 1.0 if (sat or sat2) else 0.0
            if not triggered:
                p_d, v_d, a_d = reference_kernel(t, start, v_final, ramp)
                collective, moments = tracking_kernel(pos, vel, R, omega, p_d, v_d, a_d,
                                                      mass, g, inertia, kx, kv, kR, kO)
                thrusts, _ = mix_kernel(collective, moments, arm, kq, tmax)
            if log and tick < max_ticks:
                row = logbuf[tick]
                row[0] = t
                row[1:4] = pos
                row[4:7] = vel
                for a in range(3):
                    for b in range(3):
                        row[7 + 3 * a + b] = R[a, b]
                row[16:19] = omega
                row[19:23] = thrusts
                row[23] = collective
                row[24:27] = moments
                row[27] = 1.0 if triggered else 0.0
                row[28] = d_last
                row[29] = rrev
                row[30] = of_y
                row[31] = acc[2]
                nl = 0
                for i in range(4):
                    if latched[i]:
                        nl += 1
                row[32] = nl
            tick += 1

        had_latch = touched
        f_c, m_c, D_c, feet, body_hit, rotor_hit = contact_kernel(
            pos, vel, R, omega, feet_body, rotors_body, latched, anchors, latch_R,
            ceiling, tol, k_a, c_a, k_hip, c_hip, k_s, c_s, body_radius, rotor_radius)
        if body_hit or rotor_hit:
            res[R_BODY] = 1.0
        n_latched = 0
        for i in range(4):
            if latched[i]:
                n_latched += 1
        if n_latched > 0 and not had_latch:
            touched = True
            impact_angle = _inversion_deg(R)
            if cut_on_latch and triggered:
                thrusts = np.zeros(4)

        d = ceiling - pos[2]
        if d < min_d:
            min_d = d
            angle_at_min = _inversion_deg(R)

        pos, vel, R, omega, acc = step_kernel(pos, vel, R, omega, thrusts, f_c, m_c, D_c,
                                              mass, inertia, g, dt, arm, kq)
        t += dt
        ok = True
        for a in range(3):
            if not (math.isfinite(pos[a]) and math.isfinite(vel[a]) and math.isfinite(omega[a])):
                ok = False
        if not ok:
            failed = True
            end_reason = END_BLOWUP
            break

        if n_latched == 4:
            if settle_start < 0.0:
                settle_start = t
            elif t - settle_start >= settle_time:
                end_reason = END_SUCCESS
                break
        if triggered:
            if t - t_trigger >= timeout_after_trigger:
                end_reason = END_TIMEOUT
                break
            if pos[2] < start[2]:
                end_reason = END_FALL
                break
        if t >= t_max_total:
            end_reason = END_TIMEOUT if triggered else END_NO_TRIGGER
            break

    n_final = 0
    for i in range(4):
        if latched[i]:
            n_final += 1
    res[R_MIN_D] = max(min_d, 0.0)
    res[R_IMPACT] = impact_angle if touched else angle_at_min
    res[R_LEGS] = n_final
    res[R_TRIGGERED] = 1.0 if triggered else 0.0
    res[R_FAILED] = 1.0 if failed else 0.0
    res[R_T_END] = t
    res[R_TICKS] = tick
    res[R_END_REASON] = end_reason
    return res, logbuf[:min(tick, max_ticks) if log else 0]


@dataclass(frozen=True)
class PolicyParams:
    """Concrete flip policy: RREV threshold (1/s) and moment magnitude (N*m)."""

    rrev_trigger: float
    flip_moment: float

    def __post_init__(self):
        if not self.rrev_trigger > 0:
            raise ValueError("rrev_trigger must be positive")
        if self.flip_moment < 0:
            raise ValueError("flip_moment is a magnitude and must be >= 0")

    @property
    def flip_moment_nmm(self) -> float:
        return self.flip_moment * 1e3

    @classmethod
    def from_display(cls, rrev: float, moment_nmm: float) -> "PolicyParams":
        return cls(float(rrev), float(moment_nmm) * 1e-3)


@dataclass(frozen=True)
class Scenario:
    """Everything fixed for one (condition, design) pair."""

    config: Config
    condition: ApproachTrajectory
    design: LegDesign

    @classmethod
    def build(cls, speed: float, angle: float, design: LegDesign | str,
              config: Config | None = None) -> "Scenario":
        config = config or Config()
        if isinstance(design, str):
            design = config.design(design)
        condition = ApproachTrajectory.for_condition(speed, angle, config.controller)
        return cls(config, condition, design)

    @property
    def ceiling_height(self) -> float:
        return self.condition.start_distance(self.config.controller, self.config.rollout)

    @property
    def ctrl_every(self) -> int:
        return max(1, int(round(1.0 / (self.config.controller.rate_hz * self.config.world.timestep))))

    @property
    def controller_period(self) -> float:
        return self.ctrl_every * self.config.world.timestep

    @property
    def approach_duration(self) -> float:
        """Time for the reference to reach the ceiling."""
        cond = self.condition
        vz = cond.final_velocity[2]
        return cond.ramp_duration + (self.ceiling_height - 0.5 * vz * cond.ramp_duration) / vz

    def run(self, policy: PolicyParams | None = None, seed: int = 0, *,
            forced_tick: int | None = None, moment: float | None = None,
            log: bool = False, horizon: float | None = None):
        """Low-level call; returns the raw result vector and the tick log."""
        cfg = self.config
        v, c, r = cfg.vehicle, cfg.contact, cfg.rollout
        hips, feet = leg_geometry(self.design, v)
        if forced_tick is None:
            if policy is None:
                raise ValueError("threshold mode needs a policy")
            mode, rrev_c, tick, m = MODE_THRESHOLD, policy.rrev_trigger, 0, policy.flip_moment
        else:
            mode, rrev_c, tick = MODE_FORCED, 0.0, int(forced_tick)
            m = moment if moment is not None else (policy.flip_moment if policy else 0.0)
        t_total = self.approach_duration + r.timeout_after_trigger if horizon is None else horizon
        max_ticks = int(t_total / self.controller_period) + 4
        return rollout_kernel(
            v.mass, design_inertia(self.design, v), v.gravity, v.arm_length,
            v.rotor_torque_coefficient, v.max_motor_thrust,
            self.ceiling_height, cfg.world.timestep, self.ctrl_every,
            c.anchor_stiffness, c.anchor_damping, c.surface_stiffness, c.surface_damping,
            c.tolerance, self.design.hip_spring, self.design.hip_damping, v.body_radius,
            v.rotor_radius, hips, feet, rotor_positions(v),
            cfg.controller.kx, cfg.controller.kv, np.asarray(cfg.controller.kR, dtype=float),
            np.asarray(cfg.controller.kOmega, dtype=float),
            np.asarray(self.condition.start_position, dtype=float),
            self.condition.final_velocity, self.condition.ramp_duration,
            cfg.controller.flip_rear_off, cfg.controller.cut_motors_on_latch,
            mode, float(rrev_c), tick, float(m),
            float(t_total), r.timeout_after_trigger, r.settle_time,
            cfg.perception.noise_std, int(seed) % (2 ** 32), log, max_ticks)

    def outcome(self, res: np.ndarray, policy: PolicyParams | None) -> RolloutOutcome:
        snapshot = None
        if res[R_TRIGGERED]:
            snapshot = PerceptionState(res[R_D], res[R_RREV], res[R_OFY], float("nan"),
                                       res[R_ZACC], res[R_T_TRIGGER], res[R_VX], res[R_VZ])
        return RolloutOutcome(
            min_d_ceiling=float(res[R_MIN_D]),
            impact_angle=float(min(180.0, max(0.0, res[R_IMPACT]))),
            n_legs_attached=int(res[R_LEGS]),
            body_or_rotor_contact=bool(res[R_BODY]),
            trigger_snapshot=snapshot,
            policy_used=policy,
            triggered=bool(res[R_TRIGGERED]),
            failed=bool(res[R_FAILED]),
            extras={"end_reason": END_REASONS[int(res[R_END_REASON])],
                    "t_end": float(res[R_T_END]),
                    "moment_applied": float(res[R_MOMENT_APPLIED]),
                    "flip_saturated": bool(res[R_SAT])},
        )


def run_rollout(condition: ApproachTrajectory | tuple[float, float], design: LegDesign | str,
                policy: PolicyParams, seed: int = 0, config: Config | None = None) -> RolloutOutcome:
    """Simulate one landing attempt and summarise it."""
    config = config or Config()
    if isinstance(condition, ApproachTrajectory):
        speed, angle = condition.speed, condition.angle
    else:
        speed, angle = condition
    scenario = Scenario.build(speed, angle, design, config)
    res, _ = scenario.run(policy, seed)
    return scenario.outcome(res, policy)


def trajectory_records(scenario: Scenario, logbuf: np.ndarray) -> list[dict]:
    """Controller-rate trajectory rows with quaternion and perception columns."""
    est = DistanceEstimator(scenario.config.perception)
    rows = []
    for raw in logbuf:
        rec = dict(zip(LOG_COLUMNS, raw.tolist()))
        R = raw[7:16].reshape(3, 3)
        qw, qx, qy, qz = rotation_to_quaternion(R)
        sample = PerceptionState(rec["d_ceiling"], rec["rrev"], rec["of_y"], float("nan"),
                                 rec["z_accel"], rec["t"], rec["vx"], rec["vz"])
        sample, d_hat = est.update(sample)
        out = {k: rec[k] for k in ("t", "x", "y", "z", "vx", "vy", "vz")}
        out.update(qw=qw, qx=qx, qy=qy, qz=qz)
        out.update({k: rec[k] for k in ("wx", "wy", "wz", "T1", "T2", "T3", "T4",
                                        "collective", "Mx", "My", "Mz")})
        out["flip"] = int(rec["flip"])
        out["n_latched"] = int(rec["n_latched"])
        out.update(d_ceiling=rec["d_ceiling"], rrev=rec["rrev"], of_y=rec["of_y"],
                   rrev_rate=sample.rrev_rate, z_accel=rec["z_accel"],
                   d_estimate="" if d_hat is None else d_hat)
        rows.append(out)
    return rows


def write_trajectory_csv(rows: list[dict], path: str | Path) -> None:
    if not rows:
        raise ValueError("empty trajectory")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})
