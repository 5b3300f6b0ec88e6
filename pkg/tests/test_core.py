import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aircrab.core import (
    ConfigError,
    ControlInput,
    ControllerGains,
    DisturbanceModel,
    Mode,
    R_from_euler,
    RobotParams,
    RobotState,
    euler_from_R,
    format_params,
    hat,
    load_gains,
    load_params,
    orthonormalize,
    resting_state,
    rotation_z,
    vee,
    write_params,
)

from conftest import random_rotation

angles = st.floats(-10.0, 10.0, allow_nan=False)


class TestRotationZ:
    def test_zero_is_identity(self):
        assert np.array_equal(rotation_z(0.0), np.eye(3))

    def test_quarter_turn(self):
        assert np.allclose(rotation_z(math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    @given(angles, angles)
    def test_group_property(self, a, b):
        assert np.allclose(rotation_z(a) @ rotation_z(b), rotation_z(a + b), atol=1e-12)

    @given(angles)
    def test_orthonormal(self, a):
        R = rotation_z(a)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-14)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            rotation_z(float("nan"))


class TestEuler:
    def test_identity(self):
        assert euler_from_R(np.eye(3)) == (0.0, 0.0, 0.0)

    def test_yaw_only(self):
        r, p, y = euler_from_R(rotation_z(0.3))
        assert (r, p) == (0.0, 0.0) or (abs(r) < 1e-15 and abs(p) < 1e-15)
        assert y == pytest.approx(0.3, abs=1e-15)

    def test_round_trip(self, rng):
        n = 0
        while n < 1000:
            R = random_rotation(rng)
            if abs(R[2, 0]) > 0.999:
                continue
            R2 = R_from_euler(*euler_from_R(R))
            assert np.abs(R2 - R).max() < 1e-9
            n += 1

    @pytest.mark.parametrize("pitch", [math.pi / 2, -math.pi / 2])
    def test_gimbal_lock_reports_pitch_and_zero_roll(self, pitch):
        R = R_from_euler(0.4, pitch, 0.1)
        roll, p, yaw = euler_from_R(R)
        assert p == pitch
        assert roll == 0.0
        assert np.allclose(R_from_euler(roll, p, yaw), R, atol=1e-9)


class TestHatVee:
    def test_zero(self):
        assert np.array_equal(hat([0, 0, 0]), np.zeros((3, 3)))

    def test_cross_product(self):
        assert np.array_equal(hat([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])

    def test_inverse_pair(self, rng):
        for _ in range(100):
            v = rng.standard_normal(3)
            assert np.array_equal(vee(hat(v)), v)
            w = rng.standard_normal(3)
            assert np.allclose(hat(v) @ w, np.cross(v, w), atol=1e-14)

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError):
            vee(np.eye(3))


def test_orthonormalize_recovers_rotation(rng):
    R = random_rotation(rng)
    noisy = R + 1e-4 * rng.standard_normal((3, 3))
    Q = orthonormalize(noisy)
    assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.linalg.det(Q) == pytest.approx(1.0)
    assert np.abs(Q - R).max() < 1e-3


class TestParams:
    def test_published_defaults(self, params):
        assert params.m == 2.655
        assert params.l == 0.225
        assert params.J_w == pytest.approx(0.5 * 0.305 * 0.04**2)

    def test_hover_at_half_thrust(self, params):
        # 2:1 thrust-to-weight
        assert params.T_max / 2 == pytest.approx(params.weight, rel=1e-4)

    def test_derived(self, params):
        assert params.T_max == pytest.approx(4 * params.C_t * params.v_max**2)
        assert np.array_equal(params.d_w, [0, 0, -params.l_z])

    @pytest.mark.parametrize("change", [
        {"m": 0.0}, {"C_t": -1.0}, {"C_d": 0.0}, {"l": 0.0}, {"r": -0.1}, {"l_z": 0.0},
        {"v_min": 1000.0}, {"v_min": -1.0}, {"T_ground_frac": 1.0}, {"T_ground_frac": -0.1},
        {"J": [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]]}, {"J": [1.0, -1.0, 1.0]},
    ])
    def test_rejects_invalid(self, params, change):
        with pytest.raises(ConfigError):
            params.with_(**change)

    def test_J_forms(self):
        a = RobotParams(J=[0.1, 0.2, 0.3])
        b = RobotParams(J=np.diag([0.1, 0.2, 0.3]).ravel())
        assert np.array_equal(a.J, b.J)


class TestGains:
    def test_diagonal_matrix_input(self):
        g = ControllerGains(k_p=np.diag([1.0, 2.0, 3.0]))
        assert np.array_equal(g.k_p, [1, 2, 3])

    def test_rejects_negative(self):
        with pytest.raises(ConfigError):
            ControllerGains(k_i=[0.1, -0.1, 0.1])


def test_control_input_vector_round_trip():
    u = ControlInput.from_vector([1.0, 2.0, 3.0, 4.0])
    assert u.T == 1.0
    assert np.array_equal(u.as_vector(), [1, 2, 3, 4])


def test_resting_state_puts_contact_on_ground(params):
    s = resting_state(params, roll=0.1, pitch=-0.2, yaw=1.0, xy=(1.0, 2.0), ground=0.3)
    assert s.contact_point(params)[2] == pytest.approx(0.3, abs=1e-15)
    assert s.mode == Mode.GROUND


def test_wheel_x_is_contact_along_heading(params):
    s = RobotState(p=[2.0, 0.0, 0.2], R=rotation_z(0.0))
    assert s.wheel_x(params) == pytest.approx(2.0)


class TestDisturbance:
    def test_pure_function_of_time(self):
        d1, d2 = DisturbanceModel(seed=3), DisturbanceModel(seed=3)
        for t in (0.0, 0.37, 5.0):
            assert np.array_equal(d1(t)[0], d2(t)[0])
            assert np.array_equal(d1(t)[1], d2(t)[1])

    def test_seed_changes_signal(self):
        assert not np.array_equal(DisturbanceModel(seed=1)(0.5)[0], DisturbanceModel(seed=2)(0.5)[0])

    def test_standard_deviation(self):
        d = DisturbanceModel(seed=0, force_sigma=0.1, torque_sigma=0.01)
        samples = np.array([np.concatenate(d(t)) for t in np.arange(0, 200, 0.01)])
        std = samples.std(axis=0)
        assert np.allclose(std[:3], 0.1, rtol=0.2)
        assert np.allclose(std[3:], 0.01, rtol=0.2)

    def test_none_is_zero(self):
        f, tau = DisturbanceModel.none()(1.3)
        assert not f.any() and not tau.any()

    def test_bump(self):
        d = DisturbanceModel(force_sigma=0.0, torque_sigma=0.0, bump_amplitude=2.0, bump_period=1.0)
        assert d(0.25)[0][2] == pytest.approx(2.0)


class TestConfigFiles:
    def test_round_trip(self, tmp_path, params):
        p = params.with_(m=3.1, J=[0.04, 0.05, 0.06], d_cg=[0.01, 0.0, -0.02])
        path = tmp_path / "p.ini"
        write_params(p, path)
        q = load_params(path)
        assert q.m == 3.1
        assert np.array_equal(q.J, p.J)
        assert np.array_equal(q.d_cg, p.d_cg)
        assert format_params(q) == format_params(p)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "p.ini"
        path.write_text("[params]\nmass = 3\n")
        with pytest.raises(ConfigError, match="mass"):
            load_params(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "p.ini"
        path.write_text("[params]\nm = -3\n")
        with pytest.raises(ConfigError):
            load_params(path)

    def test_gains_file(self, tmp_path):
        path = tmp_path / "g.ini"
        path.write_text("[gains]\nk_p = 1, 2, 3\nwheel_closed_loop = true\n")
        g = load_gains(path)
        assert np.array_equal(g.k_p, [1, 2, 3]) and g.wheel_closed_loop is True

    def test_shipped_examples_load(self):
        from pathlib import Path
        root = Path(__file__).resolve().parents[1] / "configs"
        p = load_params(root / "params.ini")
        assert p.m == RobotParams().m and p.C_t == RobotParams().C_t
        g = load_gains(root / "gains.ini")
        assert np.array_equal(g.k_p, ControllerGains().k_p)
