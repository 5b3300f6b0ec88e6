"""Rigid-body plant with a single-wheel ground contact.

Translational and rotational dynamics::

    m p''            = f_g + R (f + f_d) + F_w
    J w' + w x J w   = tau - tau_w e2 + tau_d + d_w x (R^T F_w) + r_cg x (R^T f_g)

with ``F_w`` the contact force in the inertial frame. On the ground the
contact point ``p + R d_w`` is held on the surface (height constraint), it may
not slip sideways (nonholonomic constraint) and its velocity along the wheel
heading equals ``omega_w * r`` (rolling). The three constraint forces are
solved from the acceleration-level constraint equations at every derivative
evaluation and checked against a Coulomb cone; outside the cone the tangential
force saturates at ``mu * N`` and only the height constraint is kept.
After each step positions and velocities are projected back onto the
constraint manifold with an impulse, so drift never accumulates.

Wheel: ``J_w omega_w' = tau_w - r f_wx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .allocation import AllocationResult, Mixer
from .arm import ArmGeometry, end_effector_world, link_points_body
from .core import E3, Mode, cross, MotorSpeeds, RobotParams, RobotState, euler_from_R, hat

TELEMETRY_COLUMNS = (
    "t", "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "wx", "wy", "wz",
    "omega_w", "q1", "q2", "q3", "ee_x", "ee_y", "ee_z", "T_applied", "taux", "tauy", "tauz",
    "tau_w", "v1", "v2", "v3", "v4", "alpha", "beta", "Nc", "mode", "power_W",
)


class SimulationDiverged(RuntimeError):
    pass


def flat_ground(x: float, y: float) -> float:
    return 0.0


@dataclass(frozen=True)
class Plateau:
    """Axis-aligned raised region (e.g. a table top)."""

    x0: float
    x1: float
    y0: float
    y1: float
    height: float

    def contains(self, x, y) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class Terrain:
    plateaus: tuple = ()

    def __call__(self, x: float, y: float) -> float:
        h = 0.0
        for pl in self.plateaus:
            if pl.contains(x, y):
                h = max(h, pl.height)
        return h


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.0025
    integrator: str = "rk4"
    seed: int = 0
    motor_lag: float = 0.02
    arm: ArmGeometry = field(default_factory=ArmGeometry)
    arm_time_const: float = 0.08
    arm_rate_limit: float = 3.0
    # servo angular resolution; commanded joint angles snap to this grid
    arm_resolution: float = 0.0
    # per-rotor thrust shortfall at low speed: factor 1 - loss * exp(-v / knee)
    low_speed_loss: float = 0.0
    low_speed_knee: float = 150.0
    terrain: Callable[[float, float], float] = flat_ground
    touchdown_speed: float = 0.5
    liftoff_steps: int = 3
    # on the ground the frame/arm supports stop the body at this tilt (rad)
    support_tilt: Optional[float] = math.radians(12.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.integrator not in ("rk4", "semi_implicit"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass(frozen=True)
class ContactState:
    in_contact: bool = False
    f_w: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body frame
    d_g: np.ndarray = field(default_factory=lambda: np.zeros(3))  # contact -> origin, inertial
    N_c: float = 0.0
    sliding: bool = False
    supported: bool = False


@dataclass
class TelemetryRecord:
    """One logged row. End-effector position and power are derived on demand."""

    t: float
    state: RobotState
    contact: ContactState
    rotor: np.ndarray
    T_applied: float = 0.0
    tau: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau_w: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    hard_landing: bool = False
    branch: str = ""
    params: Optional[RobotParams] = None
    arm: Optional[ArmGeometry] = None

    @property
    def ee(self) -> np.ndarray:
        return end_effector_world(self.state, self.arm or ArmGeometry())

    @property
    def power_W(self) -> float:
        return rotor_power(self.rotor, self.params) if self.params is not None else 0.0

    def row(self) -> list:
        s = self.state
        roll, pitch, yaw = euler_from_R(s.R)
        return [self.t, *s.p, *s.vel, roll, pitch, yaw, *s.omega, s.omega_w, *s.q_arm,
                *self.ee, self.T_applied, *self.tau, self.tau_w, *self.rotor, self.alpha,
                self.beta, self.contact.N_c, s.mode.value, self.power_W]


# ---------------------------------------------------------------------------
# rotor model


def rotor_power(speeds, params: RobotParams) -> float:
    v = np.asarray(speeds, dtype=float)
    return float(params.c_p * np.sum(v**3))


def rotor_wrench(mixer: Mixer, speeds: np.ndarray, cfg: SimConfig) -> np.ndarray:
    w = speeds * speeds
    if cfg.low_speed_loss:
        w = w * (1.0 - cfg.low_speed_loss * np.exp(-speeds / cfg.low_speed_knee))
    return mixer.M @ w


# ---------------------------------------------------------------------------
# contact geometry


def _heading_frame(R: np.ndarray, omega: np.ndarray):
    """Horizontal wheel heading t_x, lateral t_y and their time derivatives."""
    h = np.array([R[0, 0], R[1, 0], 0.0])
    n = math.hypot(h[0], h[1])
    if n < 1e-9:
        raise SimulationDiverged("wheel heading undefined (body x axis vertical)")
    tx = h / n
    rx = R @ np.array([0.0, -omega[2], omega[1]])  # R (omega x e1)
    hdot = np.array([rx[0], rx[1], 0.0])
    txdot = (hdot - tx * (tx @ hdot)) / n
    ty = np.array([-tx[1], tx[0], 0.0])
    tydot = np.array([-txdot[1], txdot[0], 0.0])
    return tx, ty, txdot, tydot


@dataclass
class _Inputs:
    wrench: np.ndarray      # [T, tau_x, tau_y, tau_z] from rotors
    tau_w: float
    f_d: np.ndarray
    tau_d: np.ndarray
    contact: bool           # contact constraints active


class Plant:
    """Continuous dynamics for one fixed parameter set.

    The state vector is ``[p(3), v(3), R(9, row-major), omega(3), omega_w]``.
    """

    def __init__(self, params: RobotParams, cfg: SimConfig):
        self.params = params
        self.cfg = cfg
        self.mixer = Mixer.from_params(params)
        self.J = params.J
        self.J_inv = np.linalg.inv(params.J)
        self.D = hat(params.d_w)
        self.r_cg = -params.d_cg
        self.I_m = np.eye(3) / params.m

    # -- helpers ----------------------------------------------------------
    @staticmethod
    def unpack(x):
        return x[0:3], x[3:6], x[6:15].reshape(3, 3), x[15:18], x[18]

    @staticmethod
    def pack(p, v, R, w, ww) -> np.ndarray:
        return np.concatenate((p, v, R.ravel(), w, [ww]))

    def _free(self, x, u: _Inputs):
        p, v, R, w, ww = self.unpack(x)
        P = self.params
        f_body = np.array([0.0, 0.0, u.wrench[0]]) + u.f_d
        fg = np.array([0.0, 0.0, -P.m * P.g])
        acc = (fg + R @ f_body) / P.m
        tau = u.wrench[1:4] + u.tau_d
        tau = tau - np.array([0.0, u.tau_w, 0.0]) if u.contact else tau
        if P.d_cg.any():
            tau = tau + cross(self.r_cg, R.T @ fg)
        wdot = self.J_inv @ (tau - cross(w, self.J @ w))
        wwdot = u.tau_w / P.J_w if u.contact else 0.0
        return acc, wdot, wwdot

    def contact_system(self, x, u: _Inputs, free=None, frame=None):
        """Affine map ``r = A f + b`` from contact force components to constraint residuals.

        ``f = [f_x, f_y, N]`` along (heading, lateral, vertical).
        """
        p, v, R, w, ww = self.unpack(x)
        P = self.params
        acc0, wdot0, wwdot0 = free if free is not None else self._free(x, u)
        d = P.d_w
        tx, ty, txdot, tydot = frame if frame is not None else _heading_frame(R, w)
        C = np.array((tx, ty, E3))
        vc = v + R @ cross(w, d)
        ac0 = acc0 + R @ (cross(wdot0, d) + cross(w, cross(w, d)))
        RD = R @ self.D
        # contact-point acceleration per unit contact force
        W = self.I_m + RD @ self.J_inv @ RD.T
        A = C @ W @ C.T
        A[0, 0] += P.r**2 / P.J_w
        b = C @ ac0 + np.array([vc @ txdot - P.r * wwdot0, vc @ tydot, 0.0])
        return A, b, C, vc

    def solve_contact(self, x, u: _Inputs, free=None, frame=None):
        """Contact force (inertial) plus normal force and sliding flag."""
        A, b, C, vc = self.contact_system(x, u, free, frame)
        f = np.linalg.solve(A, -b)
        N = f[2]
        if N <= 0.0:
            return np.zeros(3), 0.0, False, False
        mu = self.params.mu
        ft = math.hypot(f[0], f[1])
        if ft <= mu * N:
            return C.T @ f, N, False, True
        slip = np.array([vc @ C[0] - self.params.r * x[18], vc @ C[1]])
        s = math.hypot(slip[0], slip[1])
        direction = -slip / s if s > 1e-9 else f[:2] / ft
        # normal row with the tangential force tied to N
        denom = A[2, 2] + mu * (A[2, 0] * direction[0] + A[2, 1] * direction[1])
        N = -b[2] / denom if denom > 0 else 0.0
        if N <= 0.0:
            return np.zeros(3), 0.0, True, False
        f = np.array([mu * N * direction[0], mu * N * direction[1], N])
        return C.T @ f, N, True, True

    def derivative(self, x, u: _Inputs):
        p, v, R, w, ww = self.unpack(x)
        P = self.params
        acc, wdot, wwdot = self._free(x, u)
        F = np.zeros(3)
        N, sliding, touching = 0.0, False, False
        if u.contact:
            frame = _heading_frame(R, w)
            F, N, sliding, touching = self.solve_contact(x, u, (acc, wdot, wwdot), frame)
            if touching:
                Fb = R.T @ F
                acc = acc + F / P.m
                wdot = wdot + self.J_inv @ cross(P.d_w, Fb)
                wwdot = wwdot - P.r * (frame[0] @ F) / P.J_w
        Rdot = R @ hat(w)
        dx = np.concatenate((v, acc, Rdot.ravel(), wdot, [wwdot]))
        return dx, (F, N, sliding, touching)

    # -- post-step projection --------------------------------------------
    def project(self, x, full: bool, ground_h: float, budget: float = 0.0):
        """Put the contact point on the surface and remove constraint-violating velocity.

        ``full`` also removes lateral and rolling slip (static contact);
        otherwise only the normal velocity is removed. ``budget`` is the
        normal impulse already delivered during the step (N * dt), which
        adds to the friction available to the correction.
        """
        p, v, R, w, ww = self.unpack(x)
        P = self.params
        p = p.copy()
        p[2] += ground_h - (p + R @ P.d_w)[2]
        u0 = _Inputs(np.zeros(4), 0.0, np.zeros(3), np.zeros(3), True)
        A, _, C, vc = self.contact_system(self.pack(p, v, R, w, ww), u0)
        err = np.array([vc @ C[0] - P.r * ww, vc @ C[1], vc @ C[2]])
        if full:
            imp = np.linalg.solve(A, -err)
            if imp[2] < 0.0:
                imp = np.zeros(3)
            else:
                ft = math.hypot(imp[0], imp[1])
                if ft > P.mu * (imp[2] + budget) and ft > 0.0:
                    # impulsive sliding: tangential part capped by the friction cone
                    imp[2] = max(0.0, -err[2] / A[2, 2])
                    imp[:2] *= P.mu * (imp[2] + budget) / ft
        else:
            imp = np.array([0.0, 0.0, max(0.0, -err[2] / A[2, 2])])
        Fimp = C.T @ imp
        v = v + Fimp / P.m
        w = w + self.J_inv @ cross(P.d_w, R.T @ Fimp)
        ww = ww - P.r * (C[0] @ Fimp) / P.J_w
        return self.pack(p, v, R, w, ww)

    def slip(self, x) -> np.ndarray:
        """[rolling residual, lateral, normal] contact-point velocity errors."""
        p, v, R, w, ww = self.unpack(x)
        tx, ty, _, _ = _heading_frame(R, w)
        vc = v + R @ cross(w, self.params.d_w)
        return np.array([vc @ tx - self.params.r * ww, vc @ ty, vc[2]])


# ---------------------------------------------------------------------------
# public step


def reorthonormalize(R: np.ndarray) -> np.ndarray:
    """Newton step toward the polar factor; R must already be near-orthonormal."""
    R = R @ (1.5 * np.eye(3) - 0.5 * (R.T @ R))
    return R @ (1.5 * np.eye(3) - 0.5 * (R.T @ R))


def state_to_vector(state: RobotState) -> np.ndarray:
    return Plant.pack(state.p, state.vel, state.R, state.omega, state.omega_w)


def _integrate(plant: Plant, x, u: _Inputs, dt: float, integrator: str):
    if integrator == "rk4":
        k1, aux = plant.derivative(x, u)
        k2, _ = plant.derivative(x + 0.5 * dt * k1, u)
        k3, _ = plant.derivative(x + 0.5 * dt * k2, u)
        k4, _ = plant.derivative(x + dt * k3, u)
        return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), aux
    dx, aux = plant.derivative(x, u)
    xn = x.copy()
    xn[3:6] += dt * dx[3:6]
    xn[15:19] += dt * dx[15:19]
    xn[0:3] += dt * xn[3:6]
    p, v, R, w, ww = Plant.unpack(xn)
    xn[6:15] = (R @ _expm_so3(w * dt)).ravel()
    return xn, aux


def _expm_so3(phi) -> np.ndarray:
    th = float(np.linalg.norm(phi))
    K = hat(phi)
    if th < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + math.sin(th) / th * K + (1 - math.cos(th)) / th**2 * (K @ K)


def _axis_angle(k, a) -> np.ndarray:
    K = hat(k)
    return np.eye(3) + math.sin(a) * K + (1 - math.cos(a)) * (K @ K)


def _support_stop(x, params: RobotParams, max_tilt: float):
    """Hold the body at ``max_tilt`` when it leans onto its passive supports.

    The body is rotated back about the wheel contact point and the angular
    velocity component that would tilt it further is removed; the contact
    point keeps its velocity.
    """
    p, v, R, w, ww = Plant.unpack(x)
    b3 = R[:, 2]
    tilt = math.acos(max(-1.0, min(1.0, b3[2])))
    if tilt <= max_tilt:
        return x, False
    k = cross(b3, E3)
    k = k / np.linalg.norm(k)
    Q = _axis_angle(k, tilt - max_tilt)
    d = R @ params.d_w
    c = p + d
    vc = v + R @ cross(w, params.d_w)
    R = Q @ R
    p = c - Q @ d
    wI = R @ w
    along = wI @ k
    if along < 0.0:
        wI = wI - along * k
    w = R.T @ wI
    v = vc - R @ cross(w, params.d_w)
    return Plant.pack(p, v, R, w, ww), True


def advance_arm(state: RobotState, arm_cmd, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Rate-limited first-order joint tracking; returns (q, dq)."""
    cmd = cfg.arm.clip(arm_cmd)
    if cfg.arm_resolution > 0:
        cmd = np.round(cmd / cfg.arm_resolution) * cfg.arm_resolution
    rate = (cmd - state.q_arm) / max(cfg.arm_time_const, cfg.dt)
    rate = np.clip(rate, -cfg.arm_rate_limit, cfg.arm_rate_limit)
    q = state.q_arm + rate * cfg.dt
    settled = np.abs(cmd - q) < 1e-7
    if settled.any():
        q = np.where(settled, cmd, q)
        rate = np.where(settled, 0.0, rate)
    return q, rate


def arm_reaction_torque(state: RobotState, q_new, dq_new, cfg: SimConfig) -> np.ndarray:
    """Reaction torque on the body from accelerating the arm's link masses."""
    if not (dq_new.any() or state.dq_arm.any()):
        return np.zeros(3)
    dt = cfg.dt
    geom = cfg.arm
    ddq = (dq_new - state.dq_arm) / dt
    pts = link_points_body(q_new, geom)
    pts_prev = link_points_body(q_new - dq_new * dt, geom)
    pts_next = link_points_body(q_new + (dq_new + ddq * dt) * dt, geom)
    tau = np.zeros(3)
    for m_i, r, rp, rn in zip(geom.link_masses, pts, pts_prev, pts_next):
        acc = (rn - 2 * r + rp) / dt**2
        tau -= m_i * cross(r, acc)
    return tau


def step(state: RobotState, motor, tau_w: float, arm_cmd, dist, params: RobotParams,
         cfg: SimConfig, t: float, commanded_mode: Optional[Mode] = None,
         plant: Optional[Plant] = None, alloc: Optional[AllocationResult] = None,
         airborne_steps: int = 0):
    """Advance the plant by ``cfg.dt``.

    ``motor`` holds commanded rotor speeds (``MotorSpeeds`` or an
    ``AllocationResult``); realized speeds follow through a first-order lag.
    Returns ``(new_state, contact, telemetry, airborne_steps)``.
    """
    plant = plant or Plant(params, cfg)
    if isinstance(motor, AllocationResult):
        alloc = alloc or motor
        motor = motor.speeds
    cmd = motor.v if isinstance(motor, MotorSpeeds) else np.asarray(motor, dtype=float)
    commanded_mode = state.mode if commanded_mode is None else Mode(commanded_mode)
    dt = cfg.dt

    rotor = cmd.copy() if state.rotor is None else state.rotor
    if cfg.motor_lag > 0:
        rotor = cmd + (rotor - cmd) * math.exp(-dt / cfg.motor_lag)
    else:
        rotor = cmd.copy()
    wrench = rotor_wrench(plant.mixer, rotor, cfg)

    q_new, dq_new = advance_arm(state, arm_cmd, cfg)
    f_d, tau_d = dist(t) if dist is not None else (np.zeros(3), np.zeros(3))
    tau_d = tau_d + arm_reaction_torque(state, q_new, dq_new, cfg)

    ground = state.mode == Mode.GROUND
    u = _Inputs(wrench, float(tau_w), f_d, tau_d, ground)
    x = state_to_vector(state)
    xn, (F, N, sliding, touching) = _integrate(plant, x, u, dt, cfg.integrator)
    p, v, R, w, ww = Plant.unpack(xn)
    xn[6:15] = reorthonormalize(R).ravel()

    mode = state.mode
    hard = False
    h = cfg.terrain(*(xn[0:2] + (Plant.unpack(xn)[2] @ params.d_w)[:2]))
    cz = (xn[0:3] + Plant.unpack(xn)[2] @ params.d_w)[2]
    supported = False
    if ground:
        airborne_steps = 0 if touching else airborne_steps + 1
        if cfg.support_tilt is not None:
            xn, supported = _support_stop(xn, params, cfg.support_tilt)
        if touching or cz < h:
            xn = plant.project(xn, full=not sliding, ground_h=h, budget=max(N, 0.0) * dt)
        if commanded_mode == Mode.AERIAL and airborne_steps >= cfg.liftoff_steps:
            mode = Mode.AERIAL
    else:
        airborne_steps = 0
        vz = xn[5]
        if cz <= h:
            mode = Mode.GROUND
            hard = -vz >= cfg.touchdown_speed
            # wheel spins up to the contact-point heading speed
            p_, v_, R_, w_, _ = Plant.unpack(xn)
            tx = _heading_frame(R_, w_)[0]
            vc = v_ + R_ @ cross(w_, params.d_w)
            xn[18] = (vc @ tx) / params.r
            xn = plant.project(xn, full=True, ground_h=h)

    if not np.all(np.isfinite(xn)):
        raise SimulationDiverged(f"non-finite state at t={t + dt:.4f}")
    p, v, R, w, ww = Plant.unpack(xn)
    new_state = RobotState(p=p.copy(), vel=v.copy(), R=R.copy(), omega=w.copy(), omega_w=float(ww),
                           q_arm=q_new, mode=mode, dq_arm=dq_new, rotor=rotor)
    contact = ContactState(in_contact=touching and ground, supported=supported,
                           f_w=R.T @ F if ground else np.zeros(3), d_g=-(R @ params.d_w), N_c=float(N) if ground else 0.0,
                           sliding=sliding)
    rec = TelemetryRecord(t=t + dt, state=new_state, contact=contact, rotor=rotor,
                          tau_w=float(tau_w), hard_landing=hard, params=params, arm=cfg.arm)
    if alloc is not None:
        rec.T_applied = alloc.T_applied
        rec.tau = np.asarray(forward_tau(plant.mixer, alloc))
        rec.alpha, rec.beta, rec.branch = alloc.alpha, alloc.beta, alloc.branch
    return new_state, contact, rec, airborne_steps


def forward_tau(mixer: Mixer, alloc: AllocationResult) -> np.ndarray:
    return (mixer.M @ alloc.squared)[1:4]


def contact_forces(state: RobotState, params: RobotParams, applied_thrust_T: float,
                   cfg: Optional[SimConfig] = None, tau=None, tau_w: float = 0.0,
                   f_d=None, tau_d=None) -> ContactState:
    """Contact force for the given state and a thrust along body z."""
    cfg = cfg or SimConfig()
    plant = Plant(params, cfg)
    wrench = np.concatenate(([applied_thrust_T], np.zeros(3) if tau is None else tau))
    u = _Inputs(wrench, tau_w, np.zeros(3) if f_d is None else np.asarray(f_d),
                np.zeros(3) if tau_d is None else np.asarray(tau_d), True)
    F, N, sliding, touching = plant.solve_contact(state_to_vector(state), u)
    return ContactState(in_contact=touching, f_w=state.R.T @ F, d_g=-(state.R @ params.d_w),
                        N_c=float(N), sliding=sliding)


def planar_prediction(state: RobotState, f_w_xy, f_d_xy, gamma: float,
                      params: RobotParams) -> np.ndarray:
    """Level-attitude approximation of the horizontal acceleration.

    Forces are components along the horizontal heading and lateral axes
    (the yawed frame). Passing body-frame components instead lets the
    normal force leak in through the tilt. Valid only near level.
    """
    roll, pitch, _ = euler_from_R(state.R)
    if max(abs(roll), abs(pitch)) > math.radians(5.0):
        raise ValueError("planar prediction requires |roll|, |pitch| <= 5 deg")
    c, s = math.cos(gamma), math.sin(gamma)
    Rz = np.array([[c, -s], [s, c]])
    return Rz @ (np.asarray(f_w_xy, dtype=float) + np.asarray(f_d_xy, dtype=float)) / params.m


def mode_transition(state: RobotState, contact: ContactState, commanded_mode: Mode,
                    params: RobotParams, cfg: Optional[SimConfig] = None,
                    airborne_steps: int = 0) -> tuple[Mode, bool]:
    """Rule-based mode switch; returns (mode, hard_landing).

    ``airborne_steps`` counts consecutive steps with zero normal force
    including the current one.
    """
    cfg = cfg or SimConfig()
    commanded_mode = Mode(commanded_mode)
    if state.mode == Mode.GROUND:
        if commanded_mode == Mode.AERIAL and contact.N_c <= 0.0 and airborne_steps >= cfg.liftoff_steps:
            return Mode.AERIAL, False
        return Mode.GROUND, False
    cp = state.contact_point(params)
    if cp[2] <= cfg.terrain(cp[0], cp[1]) and state.vel[2] <= 0.0:
        return Mode.GROUND, -state.vel[2] >= cfg.touchdown_speed
    return Mode.AERIAL, False
