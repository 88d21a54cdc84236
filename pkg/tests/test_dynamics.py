import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perchlearn.config import VehicleParams, WorldConfig
from perchlearn.dynamics import (ContactWrench, IntegrationError, QuadState, expm_so3, logm_so3,
                                 mechanical_energy, motor_mix, rotation_about,
                                 rotation_to_quaternion, step)

P = VehicleParams()
W = WorldConfig(ceiling_height=50.0, timestep=1e-3)


def fly(state, thrusts, n, world=W, wrench=None, damping=None):
    for _ in range(n):
        state = step(state, thrusts, wrench, P, world, damping=damping)
    return state


def test_hover_mix_is_symmetric():
    res = motor_mix(P.weight, [0, 0, 0], P)
    assert np.allclose(res.thrusts, P.weight / 4, rtol=0, atol=1e-15)
    assert not res.saturated


def test_zero_mix():
    res = motor_mix(0.0, [0, 0, 0], P)
    assert np.all(res.thrusts == 0.0) and not res.saturated


def test_large_nose_up_moment_saturates():
    # raw per-motor split: mg/4 -+ M/(4 arm); M = 20 N*mm puts the front pair
    # above T_max (0.0907 + 0.1515 N) and the rear pair below zero
    res = motor_mix(P.weight, [0, -0.02, 0], P)
    assert res.saturated
    assert res.thrusts[0] == res.thrusts[3] == P.max_motor_thrust
    assert res.thrusts[1] == res.thrusts[2] == 0.0


def test_mix_matches_hand_allocation():
    # motor i at (x_i, y_i): Mx = sum(y_i T_i), My = -sum(x_i T_i), Mz = kq * (-T1 + T2 - T3 + T4)
    t = np.array([0.08, 0.09, 0.1, 0.11])
    a, kq = P.arm_length, P.rotor_torque_coefficient
    xy = np.array([[a, -a], [-a, -a], [-a, a], [a, a]])
    mx, my = xy[:, 1] @ t, -(xy[:, 0] @ t)
    mz = kq * (-t[0] + t[1] - t[2] + t[3])
    res = motor_mix(t.sum(), [mx, my, mz], P)
    assert np.allclose(res.thrusts, t, atol=1e-14)


def test_free_fall_velocity():
    s = fly(QuadState(position=[0, 0, 10.0]), np.zeros(4), 100)
    assert s.velocity[2] == pytest.approx(-0.981, abs=1e-6)


def test_ballistic_oracle():
    p0, v0 = np.array([0.1, -0.2, 10.0]), np.array([1.0, 0.5, 3.0])
    s = fly(QuadState(position=p0, velocity=v0), np.zeros(4), 1000)
    t = 1.0
    expected = p0 + v0 * t + 0.5 * np.array([0, 0, -P.gravity]) * t * t
    assert np.max(np.abs(s.position - expected)) < 1e-5
    assert s.time == pytest.approx(1.0)


def test_hover_is_balanced():
    s = QuadState.hover([0, 0, 1.0], P)
    s2 = step(s, np.full(4, P.weight / 4), None, P, W)
    assert np.max(np.abs(s2.velocity - s.velocity)) < 1e-9


def test_pitch_moment_spins_up_linearly():
    # thrust pair difference d on the front/rear pairs gives My = -2 arm d about body y
    d = 0.01
    t = P.weight / 4 + np.array([d, -d, -d, d]) / 2
    m_y = -2 * P.arm_length * d
    s = QuadState(position=[0, 0, 10.0])
    hist = []
    for _ in range(50):
        s = step(s, t, None, P, W)
        hist.append(P.inertia[1] * s.angular_rate[1])
    rate = np.diff(hist) / W.timestep
    assert np.allclose(rate, m_y, rtol=1e-9)
    assert hist[-1] == pytest.approx(m_y * 0.05, rel=1e-9)


def test_torque_free_energy_drift():
    s = QuadState(position=[0, 0, 10.0], velocity=[0.3, 0.1, 0.0], angular_rate=[3.0, -2.0, 5.0])
    e0 = mechanical_energy(s, P)
    s = fly(s, np.zeros(4), 1000)
    assert abs(mechanical_energy(s, P) - e0) / abs(e0) < 1e-3


def test_orthonormality_and_determinism():
    s0 = QuadState(position=[0, 0, 10.0], angular_rate=[20.0, -13.0, 7.0])
    a = fly(s0, np.array([0.1, 0.02, 0.13, 0.05]), 2000)
    b = fly(s0, np.array([0.1, 0.02, 0.13, 0.05]), 2000)
    R = a.orientation
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-8
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    for f in ("position", "velocity", "orientation", "angular_rate"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_external_wrench_enters_both_equations():
    s = QuadState(position=[0, 0, 10.0])
    w = ContactWrench(np.array([0.0, 0.0, P.weight]), np.array([0.0, 1e-4, 0.0]))
    s1 = step(s, np.zeros(4), w, P, W)
    assert np.allclose(s1.velocity, 0.0, atol=1e-15)
    assert s1.angular_rate[1] == pytest.approx(1e-4 / P.inertia[1] * W.timestep)


def test_implicit_damping_matches_explicit_when_soft():
    D = np.diag([0.01, 0.0, 0.0, 0.0, 0.0, 0.0])
    s = QuadState(position=[0, 0, 10.0], velocity=[1.0, 0.0, 0.0])
    a = fly(s, np.full(4, P.weight / 4), 100, damping=D)
    # backward-Euler decay of m v' = -c v
    expected = (P.mass / (P.mass + 0.01 * W.timestep)) ** 100
    assert a.velocity[0] == pytest.approx(expected, rel=1e-10)


def test_implicit_damping_is_stable_when_stiff():
    # dt * c / m is 270 here; an explicit step would blow up
    D = np.eye(6) * 10.0
    s = QuadState(position=[0, 0, 10.0], velocity=[1.0, -2.0, 0.5], angular_rate=[5, 1, -3])
    s = fly(s, np.zeros(4), 200, damping=D)
    assert np.linalg.norm(s.angular_rate) < 1e-3
    assert np.all(np.isfinite(s.velocity))


def test_non_finite_state_raises():
    s = QuadState(position=[0, 0, 10.0])
    with pytest.raises(IntegrationError):
        step(s, np.zeros(4), ContactWrench(np.array([np.inf, 0, 0])), P, W)


def test_thrusts_clamped_on_step():
    s = step(QuadState(), np.array([-1.0, 0.0, 1.0, 0.1]), None, P, W)
    assert np.array_equal(s.motor_thrusts, [0.0, 0.0, P.max_motor_thrust, 0.1])


rot = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3)


@given(rot)
def test_exp_log_roundtrip(phi):
    phi = np.array(phi)
    if np.linalg.norm(phi) > np.pi - 1e-3:
        return
    assert np.allclose(logm_so3(expm_so3(phi)), phi, atol=1e-9)


@given(rot)
def test_quaternion_matches_rotation(phi):
    R = expm_so3(np.array(phi))
    w, x, y, z = rotation_to_quaternion(R)
    assert w >= 0
    assert w * w + x * x + y * y + z * z == pytest.approx(1.0, abs=1e-12)
    Rq = np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                   [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                   [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])
    assert np.allclose(Rq, R, atol=1e-12)


@settings(max_examples=50)
@given(st.floats(0, 0.3), st.lists(st.floats(-0.005, 0.005), min_size=3, max_size=3))
def test_mix_output_bounds(collective, moments):
    res = motor_mix(collective, moments, P)
    assert np.all(res.thrusts >= 0) and np.all(res.thrusts <= P.max_motor_thrust)


def test_rotation_about_y():
    R = rotation_about([0, 1, 0], np.pi / 2)
    assert np.allclose(R @ [0, 0, 1], [1, 0, 0], atol=1e-15)
