"""Fixed-step rigid-body quadrotor dynamics.

World frame is z-up.  Motors sit in an X layout at ``(+-arm, +-arm, 0)`` in
the body frame and are numbered like the Crazyflie: 1 front-right,
2 rear-right, 3 rear-left, 4 front-left.  Raising the front pair (1, 4)
produces a negative moment about body y, i.e. a nose-up pitch.

The numerical kernels are numba-compiled so the rollout loop can call them
directly; the dataclass functions at the bottom are the public interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import VehicleParams, WorldConfig


class IntegrationError(RuntimeError):
    """Raised when a step produces a non-finite state."""


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def hat(w):
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


@njit(cache=True)
def vee(M):
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


@njit(cache=True)
def expm_so3(phi):
    """Rodrigues formula for exp(hat(phi))."""
    theta = math.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    K = hat(phi)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


@njit(cache=True)
def logm_so3(R):
    """Rotation vector of R (inverse of :func:`expm_so3`)."""
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    c = min(1.0, max(-1.0, c))
    theta = math.acos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * w
    s = math.sin(theta)
    if s > 1e-6:
        return w * (theta / (2.0 * s))
    # theta near pi: recover the axis from the symmetric part
    B = 0.5 * (R + np.eye(3))
    k = 0
    for i in range(3):
        if B[i, i] > B[k, k]:
            k = i
    axis = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
    return theta * axis


@njit(cache=True)
def orthonormalize(R):
    """Gram-Schmidt on the columns; keeps det = +1."""
    x = R[:, 0].copy()
    x /= math.sqrt(x @ x)
    y = R[:, 1] - (x @ R[:, 1]) * x
    y /= math.sqrt(y @ y)
    z = np.cross(x, y)
    out = np.empty((3, 3))
    out[:, 0] = x
    out[:, 1] = y
    out[:, 2] = z
    return out


@njit(cache=True)
def allocation_matrix(arm, kq):
    """Map motor thrusts (1..4) to (collective, Mx, My, Mz)."""
    return np.array([[1.0, 1.0, 1.0, 1.0],
                     [-arm, -arm, arm, arm],
                     [-arm, arm, arm, -arm],
                     [-kq, kq, -kq, kq]])


@njit(cache=True)
def mix_kernel(collective, moments, arm, kq, tmax):
    A_inv = np.linalg.inv(allocation_matrix(arm, kq))
    u = np.array([collective, moments[0], moments[1], moments[2]])
    raw = A_inv @ u
    out = np.empty(4)
    saturated = False
    for i in range(4):
        v = raw[i]
        if v < 0.0:
            v = 0.0
            saturated = True
        elif v > tmax:
            v = tmax
            saturated = True
        out[i] = v
    return out, saturated


@njit(cache=True)
def thrust_wrench(thrusts, arm, kq):
    """Collective thrust and body moments produced by the four motors."""
    u = allocation_matrix(arm, kq) @ thrusts
    return u[0], u[1:]


@njit(cache=True)
def step_kernel(pos, vel, R, omega, thrusts, f_ext, m_ext, damping, mass, inertia, g, dt,
                arm, kq):
    """One step.  ``f_ext`` and ``m_ext`` are world-frame, about the COM.

    Velocities advance with the start-of-step acceleration; positions and
    attitude use the mean of old and new velocity, which is exact for
    constant accelerations (free fall, constant moment).  ``damping`` is a
    6x6 matrix D mapping (world velocity, body rate) to the generalized
    force -D nu; it is applied implicitly at the new velocities so stiff
    contact damping stays stable.  A zero matrix skips the solve.
    """
    collective, m_rot = thrust_wrench(thrusts, arm, kq)
    force = R[:, 2] * collective + f_ext
    force[2] -= mass * g
    m_body = m_rot + R.T @ m_ext
    Iw = inertia * omega
    m_body = m_body - np.cross(omega, Iw)

    if np.any(damping != 0.0):
        A = damping * dt
        rhs = np.empty(6)
        for i in range(3):
            A[i, i] += mass
            A[i + 3, i + 3] += inertia[i]
            rhs[i] = mass * vel[i] + dt * force[i]
            rhs[i + 3] = Iw[i] + dt * m_body[i]
        nu = np.linalg.solve(A, rhs)
        vel_new = nu[:3].copy()
        omega_new = nu[3:].copy()
        acc = (vel_new - vel) / dt
    else:
        acc = force / mass
        vel_new = vel + dt * acc
        omega_new = omega + dt * m_body / inertia
    pos_new = pos + 0.5 * dt * (vel + vel_new)
    R_new = orthonormalize(R @ expm_so3(0.5 * dt * (omega + omega_new)))
    return pos_new, vel_new, R_new, omega_new, acc


# ---------------------------------------------------------------- public API


def _vec(x, n=3):
    return np.asarray(x, dtype=float).reshape(n).copy()


@dataclass
class QuadState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    angular_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    motor_thrusts: np.ndarray = field(default_factory=lambda: np.zeros(4))
    time: float = 0.0

    def __post_init__(self):
        self.position = _vec(self.position)
        self.velocity = _vec(self.velocity)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(3, 3).copy()
        self.angular_rate = _vec(self.angular_rate)
        self.motor_thrusts = _vec(self.motor_thrusts, 4)

    @classmethod
    def hover(cls, position, params: VehicleParams) -> "QuadState":
        return cls(position=position, motor_thrusts=np.full(4, params.weight / 4))

    def quaternion(self) -> np.ndarray:
        """Orientation as (w, x, y, z)."""
        return rotation_to_quaternion(self.orientation)


@dataclass(frozen=True)
class ContactWrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class MixResult:
    thrusts: np.ndarray
    saturated: bool


def rotation_to_quaternion(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * math.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = [0.0] * 4
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q = np.array(q)
    return q if q[0] >= 0 else -q


def rotation_about(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return expm_so3(axis / np.linalg.norm(axis) * angle)


def motor_mix(collective_thrust: float, body_moments, params: VehicleParams) -> MixResult:
    """Cross-configuration allocation followed by per-motor clamping to [0, T_max]."""
    thrusts, saturated = mix_kernel(float(collective_thrust), _vec(body_moments),
                                    params.arm_length, params.rotor_torque_coefficient,
                                    params.max_motor_thrust)
    return MixResult(thrusts, bool(saturated))


def step(state: QuadState, motor_thrusts, external: ContactWrench | None,
         params: VehicleParams, world: WorldConfig, inertia=None,
         damping=None) -> QuadState:
    """Advance ``state`` by ``world.timestep``.

    ``inertia`` overrides ``params.inertia`` (used for design-specific leg
    inertia).  ``damping`` is an optional 6x6 matrix applied implicitly (see
    :func:`step_kernel`); ``external`` must then exclude those damping
    forces.  Raises :class:`IntegrationError` on a non-finite result.
    """
    thrusts = np.clip(_vec(motor_thrusts, 4), 0.0, params.max_motor_thrust)
    external = external or ContactWrench()
    J = _vec(params.inertia if inertia is None else inertia)
    pos, vel, R, omega, _ = step_kernel(
        state.position, state.velocity, state.orientation, state.angular_rate, thrusts,
        _vec(external.force), _vec(external.moment),
        np.zeros((6, 6)) if damping is None else np.asarray(damping, dtype=float),
        params.mass, J, params.gravity,
        world.timestep, params.arm_length, params.rotor_torque_coefficient)
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))
            and np.all(np.isfinite(R)) and np.all(np.isfinite(omega))):
        raise IntegrationError(f"non-finite state at t={state.time + world.timestep:.4f}")
    return QuadState(pos, vel, R, omega, thrusts, state.time + world.timestep)


def mechanical_energy(state: QuadState, params: VehicleParams, inertia=None) -> float:
    """Kinetic (translational + rotational) plus gravitational energy."""
    J = np.asarray(params.inertia if inertia is None else inertia, dtype=float)
    w = state.angular_rate
    return (0.5 * params.mass * state.velocity @ state.velocity
            + 0.5 * float(w @ (J * w))
            + params.mass * params.gravity * state.position[2])

