"""Cascade attitude control on SO(3), wheel torque law and an aerial position loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import E3, cross, ControllerGains, RobotParams, RobotState, rotation_z, vee


@dataclass
class AttitudeControllerState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: Optional[np.ndarray] = None
    prev_time: Optional[float] = None

    def reset(self) -> None:
        self.integral = np.zeros(3)
        self.prev_error = None
        self.prev_time = None


@dataclass(frozen=True)
class Setpoint:
    R_d: np.ndarray = field(default_factory=lambda: np.eye(3))
    T_d: Optional[float] = None
    omega_wd: float = 0.0
    gamma_d: float = 0.0


def attitude_rate_setpoint(R_d, R, gains: ControllerGains) -> np.ndarray:
    """Desired body rates driving the rotation error ``(R_d^T R - R^T R_d)^vee / 2`` to zero.

    The error is positive along the axis by which ``R`` is rotated past
    ``R_d``, so the commanded rate opposes it.
    """
    E = 0.5 * (R_d.T @ R - R.T @ R_d)
    return -gains.K_p_att * vee(E)


def torque_span(params: RobotParams) -> np.ndarray:
    """Per-axis torque reachable with a single axis active (N*m)."""
    span = params.v_max**2 - params.v_min**2
    return np.array([
        math.sqrt(2) * params.C_t * params.l * span,
        math.sqrt(2) * params.C_t * params.l * span,
        2.0 * params.C_d * span,
    ])


def rate_pid(omega_d, omega, ctrl: AttitudeControllerState, gains: ControllerGains,
             tau_c, dt: float, integral_limit: Optional[np.ndarray] = None,
             t: Optional[float] = None) -> np.ndarray:
    """PID on the body-rate error; updates ``ctrl`` in place.

    ``integral_limit`` bounds the integral *contribution* ``k_i * integral``
    per axis. The derivative is a backward difference and is zero on the
    first call.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = np.asarray(omega_d, dtype=float) - np.asarray(omega, dtype=float)
    ctrl.integral = ctrl.integral + err * dt
    if integral_limit is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = np.where(gains.k_i > 0, integral_limit / gains.k_i, np.inf)
        ctrl.integral = np.clip(ctrl.integral, -cap, cap)
    deriv = np.zeros(3) if ctrl.prev_error is None else (err - ctrl.prev_error) / dt
    ctrl.prev_error = err
    if t is not None:
        ctrl.prev_time = t
    return gains.k_p * err + gains.k_i * ctrl.integral + gains.k_d * deriv + np.asarray(tau_c)


def wheel_torque(omega_wd: float, gains: ControllerGains, omega_w: float = 0.0) -> float:
    """Wheel servo torque; open loop on the desired rate unless configured otherwise."""
    if gains.wheel_closed_loop:
        return gains.K_wheel * (omega_wd - omega_w)
    return gains.K_wheel * omega_wd


def ground_setpoint(gamma_d: float, omega_wd: float = 0.0) -> Setpoint:
    return Setpoint(R_d=rotation_z(gamma_d), T_d=None, omega_wd=omega_wd, gamma_d=gamma_d)


def attitude_from_thrust_direction(b3, gamma_d: float) -> np.ndarray:
    b3 = np.asarray(b3, dtype=float)
    b3 = b3 / np.linalg.norm(b3)
    b1c = np.array([math.cos(gamma_d), math.sin(gamma_d), 0.0])
    b2 = cross(b3, b1c)
    n = np.linalg.norm(b2)
    if n < 1e-9:
        # heading parallel to thrust axis: fall back to an arbitrary perpendicular
        b2 = cross(b3, np.array([0.0, 1.0, 0.0]) if abs(b3[1]) < 0.9 else np.array([1.0, 0.0, 0.0]))
        n = np.linalg.norm(b2)
    b2 = b2 / n
    b1 = cross(b2, b3)
    return np.column_stack((b1, b2, b3))


def aerial_position_controller(p_d, v_d, state: RobotState, gains: ControllerGains,
                               params: RobotParams, gamma_d: float = 0.0,
                               prev_R_d: Optional[np.ndarray] = None,
                               p_meas: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """PD position loop returning desired thrust and attitude.

    ``p_meas`` replaces the true position (used to inject estimate drift).
    """
    p = state.p if p_meas is None else np.asarray(p_meas)
    a_cmd = (gains.Kp_pos * (np.asarray(p_d) - p) + gains.Kd_pos * (np.asarray(v_d) - state.vel)
             + params.g * E3)
    norm = np.linalg.norm(a_cmd)
    if norm < 0.1 * params.g:
        R_d = prev_R_d if prev_R_d is not None else rotation_z(gamma_d)
        return params.m * norm, R_d
    R_d = attitude_from_thrust_direction(a_cmd, gamma_d)
    T_d = params.m * float(a_cmd @ (state.R @ E3))
    return max(T_d, 0.0), R_d
