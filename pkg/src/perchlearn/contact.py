"""Landing gear, ceiling contact and adhesive foot latching.

Legs are rigid sticks hanging from four hips under the body, each splayed
outward along its body diagonal.  A foot that reaches the ceiling plane
latches for good: from then on a stiff spring-damper pins it to the latch
point and a torsional spring-damper at the hip resists rotation of the body
away from its latch-time attitude.  The body (a sphere at the COM) and the
rotor disks are not adhesive; they get a one-sided push-back from the
ceiling and raise contact flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import ContactParams, LegDesign, VehicleParams, WorldConfig
from .dynamics import ContactWrench, QuadState, hat, logm_so3

# leg i shares its corner with motor i+1: FR, RR, RL, FL
CORNER_SIGNS = np.array([[1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])


def leg_geometry(design: LegDesign, params: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Hip and foot positions in the body frame, each shape (4, 3)."""
    psi = math.radians(design.splay_angle)
    diag = np.zeros((4, 3))
    diag[:, :2] = CORNER_SIGNS / math.sqrt(2.0)
    hips = params.hip_radius * diag
    hips[:, 2] = -params.hip_depth
    direction = math.sin(psi) * diag
    direction[:, 2] = -math.cos(psi)
    return hips, hips + design.length * direction


def rotor_positions(params: VehicleParams) -> np.ndarray:
    out = np.zeros((4, 3))
    out[:, :2] = params.arm_length * CORNER_SIGNS
    return out


def design_inertia(design: LegDesign, params: VehicleParams) -> np.ndarray:
    """Body inertia plus four thin-rod legs (diagonal, about the body origin)."""
    hips, feet = leg_geometry(design, params)
    J = np.diag(params.inertia).astype(float)
    m = params.leg_mass
    for a, b in zip(hips, feet):
        c = 0.5 * (a + b)
        u = (b - a) / design.length
        J += m * ((c @ c) * np.eye(3) - np.outer(c, c))
        J += m * design.length ** 2 / 12.0 * (np.eye(3) - np.outer(u, u))
    return np.diag(J).copy()


@njit(cache=True)
def contact_kernel(pos, vel, R, omega, feet_body, rotors_body, latched, anchors,
                   latch_R, ceiling, tol, k_a, c_a, k_hip, c_hip, k_s, c_s, body_radius,
                   rotor_radius):
    """Contact forces for the current state.

    A latched foot is pinned to its latch point by a stiff spring-damper and
    the hip spring resists body rotation away from the latch-time attitude.
    Mutates ``latched``, ``anchors`` and ``latch_R`` when a foot first touches.

    Returns the world-frame force and moment (about the COM) from everything
    except the pin and hip dampers, the 6x6 damping matrix D for those (the
    generalized force is -D @ [world velocity, body rate]), the world foot
    positions and the body/rotor contact flags.
    """
    force = np.zeros(3)
    moment = np.zeros(3)
    D = np.zeros((6, 6))
    w_world = R @ omega
    feet = np.empty((4, 3))
    A = np.zeros((3, 6))
    for i in range(4):
        feet[i] = pos + R @ feet_body[i]
        if not latched[i] and feet[i, 2] >= ceiling - tol:
            latched[i] = True
            anchors[i] = feet[i]
            latch_R[i] = R
        if latched[i]:
            r = R @ feet_body[i]
            f = -k_a * (feet[i] - anchors[i])
            force += f
            moment += np.cross(r, f)
            phi = logm_so3(latch_R[i].T @ R)
            moment += R @ (-k_hip * phi)
            # foot velocity = v - R [rho]x omega
            A[:, :3] = np.eye(3)
            A[:, 3:] = -R @ hat(feet_body[i])
            D += c_a * (A.T @ A)
            for j in range(3, 6):
                D[j, j] += c_hip

    body_contact = False
    top = pos[2] + body_radius
    if top >= ceiling - tol:
        body_contact = True
        depth = top - ceiling
        if depth > 0.0:
            fz = -(k_s * depth + c_s * vel[2])
            if fz < 0.0:
                force[2] += fz

    rotor_contact = False
    bz = R[:, 2]
    lateral = math.sqrt(max(0.0, 1.0 - bz[2] * bz[2]))
    for i in range(4):
        r = R @ rotors_body[i]
        if lateral > 1e-9:
            u = np.array([-bz[0] * bz[2], -bz[1] * bz[2], 1.0 - bz[2] * bz[2]]) / lateral
            r = r + rotor_radius * u
        p = pos + r
        if p[2] >= ceiling - tol:
            rotor_contact = True
            depth = p[2] - ceiling
            if depth > 0.0:
                v = vel + np.cross(w_world, r)
                fz = -(k_s * depth + c_s * v[2])
                if fz < 0.0:
                    f = np.array([0.0, 0.0, fz])
                    force += f
                    moment += np.cross(r, f)
    return force, moment, D, feet, body_contact, rotor_contact


@dataclass
class ContactSet:
    latched: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.bool_))
    foot_positions: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    body_contact: bool = False
    rotor_contact: bool = False
    # everything except the pin and hip dampers, which the stepper treats implicitly
    wrench: ContactWrench = field(default_factory=ContactWrench)
    # pin and hip damping, generalized force -damping @ [v_world, omega_body]
    damping: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    latch_orientations: np.ndarray = field(default_factory=lambda: np.tile(np.eye(3), (4, 1, 1)))

    @property
    def n_latched(self) -> int:
        return int(np.count_nonzero(self.latched))

    def total_wrench(self, state: QuadState) -> ContactWrench:
        """``wrench`` plus the damper forces at the given state."""
        gen = -self.damping @ np.concatenate([state.velocity, state.angular_rate])
        return ContactWrench(self.wrench.force + gen[:3],
                             self.wrench.moment + state.orientation @ gen[3:])


def foot_positions(state: QuadState, design: LegDesign,
                   params: VehicleParams | None = None) -> np.ndarray:
    """World positions of the four feet, rows ordered FR, RR, RL, FL."""
    _, feet = leg_geometry(design, params or VehicleParams())
    return state.position + feet @ state.orientation.T


def update_contacts(state: QuadState, design: LegDesign, world: WorldConfig,
                    previous: ContactSet | None = None, params: VehicleParams | None = None,
                    contact: ContactParams | None = None) -> ContactSet:
    params = params or VehicleParams()
    contact = contact or ContactParams()
    previous = previous or ContactSet()
    _, feet_body = leg_geometry(design, params)
    latched = previous.latched.copy()
    anchors = previous.anchors.copy()
    latch_R = previous.latch_orientations.copy()
    force, moment, D, feet, body, rotor = contact_kernel(
        state.position, state.velocity, state.orientation, state.angular_rate, feet_body,
        rotor_positions(params), latched, anchors, latch_R, world.ceiling_height,
        contact.tolerance, contact.anchor_stiffness, contact.anchor_damping,
        design.hip_spring, design.hip_damping, contact.surface_stiffness,
        contact.surface_damping, params.body_radius, params.rotor_radius)
    return ContactSet(latched, feet, bool(body), bool(rotor), ContactWrench(force, moment),
                      D, anchors, latch_R)


def contact_potential(state: QuadState, design: LegDesign, contacts: ContactSet,
                      world: WorldConfig, params: VehicleParams | None = None,
                      contact: ContactParams | None = None) -> float:
    """Elastic energy stored in anchor springs, hip springs and surface penetration."""
    params = params or VehicleParams()
    contact = contact or ContactParams()
    feet = foot_positions(state, design, params)
    energy = 0.0
    for i in np.flatnonzero(contacts.latched):
        d = feet[i] - contacts.anchors[i]
        phi = logm_so3(contacts.latch_orientations[i].T @ state.orientation)
        energy += 0.5 * contact.anchor_stiffness * d @ d + 0.5 * design.hip_spring * phi @ phi
    depth = state.position[2] + params.body_radius - world.ceiling_height
    if depth > 0:
        energy += 0.5 * contact.surface_stiffness * depth ** 2
    return float(energy)
