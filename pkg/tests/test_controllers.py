import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aircrab.controllers import (
    AttitudeControllerState,
    aerial_position_controller,
    attitude_rate_setpoint,
    ground_setpoint,
    rate_pid,
    torque_span,
    wheel_torque,
)
from aircrab.core import ControllerGains, Mode, RobotState, euler_from_R, rotation_x, rotation_z

from conftest import random_rotation


@pytest.fixture
def gains():
    return ControllerGains()


class TestRateSetpoint:
    def test_zero_error(self, gains, rng):
        R = random_rotation(rng)
        assert np.abs(attitude_rate_setpoint(R, R, gains)).max() < 1e-15

    def test_small_angle(self):
        k = 7.0
        g = ControllerGains(K_p_att=[k, k, k])
        eps = 1e-4
        w = attitude_rate_setpoint(np.eye(3), rotation_x(eps), g)
        assert w[0] == pytest.approx(-k * eps, rel=1e-7)
        assert abs(w[1]) < 1e-15 and abs(w[2]) < 1e-15

    def test_antisymmetry(self, gains, rng):
        for _ in range(100):
            A, B = random_rotation(rng), random_rotation(rng)
            assert np.allclose(attitude_rate_setpoint(A, B, gains), -attitude_rate_setpoint(B, A, gains),
                               atol=1e-14)

    def test_continuity_along_path(self, gains):
        # rotate about a fixed axis up to 170 degrees; consecutive outputs stay close
        prev = None
        for ang in np.linspace(0, math.radians(170), 2000):
            w = attitude_rate_setpoint(np.eye(3), rotation_z(ang), gains)
            if prev is not None:
                assert np.linalg.norm(w - prev) < 0.01
            prev = w


class TestRatePID:
    def test_pure_compensation(self, gains):
        ctrl = AttitudeControllerState()
        tau_c = np.array([0.1, -0.2, 0.3])
        for _ in range(5):
            tau = rate_pid(np.zeros(3), np.zeros(3), ctrl, gains, tau_c, 0.0025)
        assert np.array_equal(tau, tau_c)

    def test_discrete_sum(self):
        g = ControllerGains(k_p=[0.8, 0.6, 0.3], k_i=[0.5, 0.4, 0.1], k_d=[0, 0, 0])
        ctrl = AttitudeControllerState()
        e = np.array([0.2, -0.1, 0.05])
        tau_c = np.array([0.01, 0.0, -0.01])
        dt, n = 0.0025, 37
        for _ in range(n):
            tau = rate_pid(e, np.zeros(3), ctrl, g, tau_c, dt)
        assert np.allclose(tau, g.k_p * e + g.k_i * n * dt * e + tau_c, rtol=1e-12)

    def test_first_derivative_zero(self):
        g = ControllerGains(k_p=[0, 0, 0], k_i=[0, 0, 0], k_d=[1, 1, 1])
        ctrl = AttitudeControllerState()
        assert np.array_equal(rate_pid([1, 2, 3], np.zeros(3), ctrl, g, np.zeros(3), 0.01), np.zeros(3))
        tau = rate_pid([2, 2, 2], np.zeros(3), ctrl, g, np.zeros(3), 0.01)
        assert np.allclose(tau, [100, 0, -100])

    def test_integral_clamp(self, gains):
        ctrl = AttitudeControllerState()
        limit = 0.3 * torque_span_default()
        for _ in range(20_000):
            rate_pid([50, -50, 50], np.zeros(3), ctrl, gains, np.zeros(3), 0.0025, limit)
        assert np.all(np.abs(gains.k_i * ctrl.integral) <= limit + 1e-12)
        assert np.allclose(np.abs(gains.k_i * ctrl.integral), limit)

    def test_rejects_bad_dt(self, gains):
        with pytest.raises(ValueError):
            rate_pid(np.zeros(3), np.zeros(3), AttitudeControllerState(), gains, np.zeros(3), 0.0)

    def test_reset(self, gains):
        ctrl = AttitudeControllerState()
        rate_pid([1, 1, 1], np.zeros(3), ctrl, gains, np.zeros(3), 0.01)
        ctrl.reset()
        assert not ctrl.integral.any() and ctrl.prev_error is None


def torque_span_default():
    from aircrab.core import RobotParams
    return torque_span(RobotParams())


class TestWheel:
    def test_examples(self):
        g = ControllerGains(K_wheel=0.5)
        assert wheel_torque(0.0, g) == 0.0
        assert wheel_torque(2.0, g) == 1.0

    @given(st.floats(-100, 100), st.floats(-100, 100))
    def test_linear(self, a, b):
        g = ControllerGains(K_wheel=0.5)
        assert wheel_torque(a + b, g) == pytest.approx(wheel_torque(a, g) + wheel_torque(b, g), abs=1e-9)

    def test_open_loop_ignores_measurement(self):
        g = ControllerGains(K_wheel=0.5)
        assert wheel_torque(2.0, g, omega_w=5.0) == 1.0

    def test_closed_loop(self):
        g = ControllerGains(K_wheel=0.5, wheel_closed_loop=True)
        assert wheel_torque(2.0, g, omega_w=1.0) == 0.5
        assert wheel_torque(2.0, g, omega_w=2.0) == 0.0


class TestGroundSetpoint:
    def test_identity(self):
        assert np.array_equal(ground_setpoint(0.0).R_d, np.eye(3))

    def test_half_turn(self):
        assert np.allclose(ground_setpoint(math.pi).R_d, np.diag([-1.0, -1.0, 1.0]), atol=1e-15)

    @given(st.floats(-3.1, 3.1))
    def test_level(self, gamma):
        r, p, y = euler_from_R(ground_setpoint(gamma).R_d)
        assert abs(r) < 1e-12 and abs(p) < 1e-12 and y == pytest.approx(gamma, abs=1e-12)


class TestPositionController:
    def hover_state(self, p=(0, 0, 1), gamma=0.0):
        return RobotState(p=np.array(p, float), R=rotation_z(gamma), mode=Mode.AERIAL)

    def test_hover(self, gains, params):
        T, R_d = aerial_position_controller([0, 0, 1], np.zeros(3), self.hover_state(gamma=0.4),
                                            gains, params, gamma_d=0.4)
        assert T == pytest.approx(params.weight, rel=1e-12)
        assert np.allclose(R_d, rotation_z(0.4), atol=1e-12)

    def test_vertical_error(self, gains, params):
        dz = 0.3
        T, R_d = aerial_position_controller([0, 0, 1 + dz], np.zeros(3), self.hover_state(),
                                            gains, params)
        assert T == pytest.approx(params.m * (params.g + gains.Kp_pos[2] * dz), rel=1e-12)
        assert np.allclose(R_d, np.eye(3), atol=1e-12)

    def test_orthonormal_random(self, gains, params, rng):
        for _ in range(1000):
            s = RobotState(p=rng.standard_normal(3), vel=rng.standard_normal(3),
                           R=random_rotation(rng), mode=Mode.AERIAL)
            T, R_d = aerial_position_controller(rng.standard_normal(3) * 3, np.zeros(3), s, gains, params,
                                                gamma_d=rng.uniform(-3, 3))
            assert np.abs(R_d.T @ R_d - np.eye(3)).max() < 1e-9
            assert np.linalg.det(R_d) == pytest.approx(1.0, abs=1e-9)
            assert T >= 0.0

    def test_lateral_error_tilts_toward_target(self, gains, params):
        _, R_d = aerial_position_controller([1, 0, 1], np.zeros(3), self.hover_state(), gains, params)
        assert R_d[0, 2] > 0  # thrust axis leans toward +x

    def test_free_fall_command_keeps_previous_attitude(self, params):
        g = ControllerGains(Kp_pos=[0, 0, 1], Kd_pos=[0, 0, 0])
        prev = rotation_z(0.7)
        s = self.hover_state(p=(0, 0, 1 + params.g))
        T, R_d = aerial_position_controller([0, 0, 1], np.zeros(3), s, g, params, prev_R_d=prev)
        assert T == pytest.approx(0.0, abs=1e-12)
        assert R_d is prev
