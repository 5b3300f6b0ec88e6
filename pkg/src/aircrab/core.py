"""Shared domain types, default parameters and rotation utilities.

Frames: inertial z points up, gravity is ``-g e3``. ``R`` maps body vectors
into the inertial frame. Euler angles use the Z-Y-X (yaw-pitch-roll)
convention throughout the package.
"""

from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])


class ConfigError(ValueError):
    """Raised for invalid parameter values or malformed config files."""


class Mode(str, enum.Enum):
    AERIAL = "Aerial"
    GROUND = "Ground"


# ---------------------------------------------------------------------------
# rotation utilities


def hat(v) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross(a, b) -> np.ndarray:
    """3-vector cross product; much cheaper than ``np.cross`` for single vectors."""
    a0, a1, a2 = a
    b0, b1, b2 = b
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def vee(M, tol: float = 1e-9) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if np.linalg.norm(M + M.T) >= tol:
        raise ValueError("vee() requires a skew-symmetric matrix")
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def rotation_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(gamma: float) -> np.ndarray:
    if not math.isfinite(gamma):
        raise ValueError("gamma must be finite")
    c, s = math.cos(gamma), math.sin(gamma)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def R_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rotation_z(yaw) @ rotation_y(pitch) @ rotation_x(roll)


def euler_from_R(R) -> tuple[float, float, float]:
    """Return (roll, pitch, yaw) for ``R = Rz(yaw) Ry(pitch) Rx(roll)``.

    At gimbal lock (|pitch| = pi/2) only the sum/difference of roll and yaw
    is observable; roll is then reported as 0 and yaw absorbs the rest.
    """
    R = np.asarray(R, dtype=float)
    s = -R[2, 0]
    s = min(1.0, max(-1.0, s))
    pitch = math.asin(s)
    if abs(abs(s) - 1.0) < 1e-12:
        pitch = math.copysign(math.pi / 2, s)
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
        return roll, pitch, yaw
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


# ---------------------------------------------------------------------------
# parameters


def _wheel_inertia(mass: float = 0.305, radius: float = 0.04) -> float:
    # solid disc about its axle
    return 0.5 * mass * radius**2


@dataclass(frozen=True)
class RobotParams:
    """Physical and actuator constants.

    Defaults follow the built robot where it is documented (mass, frame size,
    wheel assembly mass). Rotor coefficients are chosen so that hover needs
    half of the maximum collective thrust; inertia, wheel geometry and the
    power coefficient are order-of-magnitude values for a 450 mm quadrotor.
    """

    m: float = 2.655
    J: np.ndarray = field(default_factory=lambda: np.diag([0.03, 0.03, 0.05]))
    l: float = 0.225
    C_t: float = 1.3023e-5
    C_d: float = 1.3023e-6
    v_min: float = 100.0
    v_max: float = 1000.0
    J_w: float = _wheel_inertia()
    r: float = 0.04
    l_z: float = 0.2
    d_cg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau_c: np.ndarray = field(default_factory=lambda: np.zeros(3))
    T_ground_frac: float = 0.075
    mu: float = 0.8
    c_p: float = 1.768e-7
    g: float = 9.81

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.shape == (3,):
            J = np.diag(J)
        elif J.shape == (9,):
            J = J.reshape(3, 3)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "d_cg", np.array(self.d_cg, dtype=float).reshape(3))
        object.__setattr__(self, "tau_c", np.array(self.tau_c, dtype=float).reshape(3))
        self.validate()

    def validate(self) -> None:
        for name in ("m", "C_t", "C_d", "l", "r", "l_z", "J_w", "g"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.J.shape != (3, 3) or not np.allclose(self.J, self.J.T):
            raise ConfigError("J must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(self.J) <= 0):
            raise ConfigError("J must be positive definite")
        if not 0 <= self.v_min < self.v_max:
            raise ConfigError("need 0 <= v_min < v_max")
        if not 0 <= self.T_ground_frac < 1:
            raise ConfigError("need 0 <= T_ground_frac < 1")
        if self.mu < 0 or self.c_p < 0:
            raise ConfigError("mu and c_p must be nonnegative")

    @property
    def T_max(self) -> float:
        return 4.0 * self.C_t * self.v_max**2

    @property
    def T_min(self) -> float:
        return 4.0 * self.C_t * self.v_min**2

    @property
    def d_w(self) -> np.ndarray:
        """Contact point relative to the body origin, body frame."""
        return np.array([0.0, 0.0, -self.l_z])

    @property
    def weight(self) -> float:
        return self.m * self.g

    def with_(self, **changes) -> "RobotParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ControllerGains:
    K_p_att: np.ndarray = field(default_factory=lambda: np.array([15.0, 15.0, 5.0]))
    k_p: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8, 0.3]))
    k_i: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.1]))
    k_d: np.ndarray = field(default_factory=lambda: np.array([0.01, 0.01, 0.0]))
    K_wheel: float = 0.02
    Kp_pos: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 4.0]))
    Kd_pos: np.ndarray = field(default_factory=lambda: np.array([2.5, 2.5, 4.0]))
    # anti-windup: |k_i * integral| <= frac * per-axis torque span
    integral_frac: float = 0.3
    wheel_closed_loop: bool = False

    def __post_init__(self):
        for f in ("K_p_att", "k_p", "k_i", "k_d", "Kp_pos", "Kd_pos"):
            v = np.array(getattr(self, f), dtype=float)
            if v.shape == (3, 3):
                v = np.diag(v).copy()
            v = v.reshape(3)
            if np.any(v < 0):
                raise ConfigError(f"gain {f} must be nonnegative")
            object.__setattr__(self, f, v)
        if self.K_wheel < 0 or not 0 <= self.integral_frac:
            raise ConfigError("K_wheel and integral_frac must be nonnegative")


# ---------------------------------------------------------------------------
# state and signals


@dataclass(frozen=True)
class ControlInput:
    T: float
    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", np.array(self.tau, dtype=float).reshape(3))

    @classmethod
    def from_vector(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), u[1:4])

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.T], self.tau))


@dataclass(frozen=True)
class MotorSpeeds:
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(4))


@dataclass(frozen=True)
class RobotState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_w: float = 0.0
    q_arm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mode: Mode = Mode.GROUND
    # simulator-internal: arm joint rates and realized rotor speeds
    dq_arm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotor: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("p", "vel", "omega", "q_arm", "dq_arm"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(3))
        object.__setattr__(self, "R", np.array(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.rotor is not None:
            object.__setattr__(self, "rotor", np.array(self.rotor, dtype=float).reshape(4))

    def contact_point(self, params: RobotParams) -> np.ndarray:
        return self.p + self.R @ params.d_w

    def wheel_x(self, params: RobotParams) -> float:
        """Contact point position along the current body x axis."""
        return float(self.contact_point(params) @ (self.R @ np.array([1.0, 0.0, 0.0])))

    def euler(self) -> tuple[float, float, float]:
        return euler_from_R(self.R)

    def with_(self, **changes) -> "RobotState":
        return replace(self, **changes)


def resting_state(params: RobotParams, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0,
                  xy=(0.0, 0.0), ground: float = 0.0, mode: Mode = Mode.GROUND, **kw) -> RobotState:
    """State with the wheel contact point exactly at ``ground`` height."""
    R = R_from_euler(roll, pitch, yaw)
    p = np.array([xy[0], xy[1], 0.0])
    p[2] = ground - (R @ params.d_w)[2]
    return RobotState(p=p, R=R, mode=mode, **kw)


@dataclass(frozen=True)
class DisturbanceModel:
    """Band-limited force/torque disturbances as pure functions of time.

    Each channel is a sum of sinusoids whose frequencies and phases are drawn
    once from ``seed``; amplitudes are normalised to the requested standard
    deviation. An optional periodic vertical bump force emulates a textured
    surface.
    """

    seed: int = 0
    force_sigma: float = 0.1
    torque_sigma: float = 0.01
    band_hz: tuple = (0.2, 5.0)
    n_components: int = 12
    bump_amplitude: float = 0.0
    bump_period: float = 0.5
    extra: Optional[Callable[[float], tuple]] = None
    _table: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        n = self.n_components
        freqs = rng.uniform(self.band_hz[0], self.band_hz[1], size=(6, n)) * 2 * np.pi
        phases = rng.uniform(0, 2 * np.pi, size=(6, n))
        # std of a sum of n unit sinusoids is sqrt(n/2)
        amp = np.sqrt(2.0 / n) * np.array([self.force_sigma] * 3 + [self.torque_sigma] * 3)
        object.__setattr__(self, "_table", (freqs, phases, amp))

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        freqs, phases, amp = self._table
        x = amp * np.sin(freqs * t + phases).sum(axis=1)
        f_d, tau_d = x[:3].copy(), x[3:].copy()
        if self.bump_amplitude:
            f_d[2] += self.bump_amplitude * math.sin(2 * math.pi * t / self.bump_period)
        if self.extra is not None:
            ef, et = self.extra(t)
            f_d = f_d + ef
            tau_d = tau_d + et
        return f_d, tau_d

    @classmethod
    def none(cls) -> "DisturbanceModel":
        return cls(force_sigma=0.0, torque_sigma=0.0)


# ---------------------------------------------------------------------------
# config files

_VECTOR_FIELDS = {"J", "d_cg", "tau_c", "K_p_att", "k_p", "k_i", "k_d", "Kp_pos", "Kd_pos"}


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in text:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    try:
        return float(text)
    except ValueError:
        return text


def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return cp


def _section_to_kwargs(cp, section: str, cls) -> dict:
    known = {f.name for f in fields(cls) if f.init}
    out = {}
    if not cp.has_section(section):
        return out
    for key, raw in cp.items(section):
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        val = parse_value(raw)
        if key in _VECTOR_FIELDS and not isinstance(val, np.ndarray):
            raise ConfigError(f"{key} expects a comma-separated vector")
        out[key] = val
    return out


def load_params(path=None, base: Optional[RobotParams] = None) -> RobotParams:
    """Read a ``[params]`` section. Every field is addressable by name."""
    base = base or RobotParams()
    if path is None:
        return base
    cp = _read_ini(path)
    extra = set(cp.sections()) - {"params"}
    if extra:
        raise ConfigError(f"unexpected sections in {path}: {sorted(extra)}")
    kw = _section_to_kwargs(cp, "params", RobotParams)
    try:
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_gains(path=None, base: Optional[ControllerGains] = None) -> ControllerGains:
    base = base or ControllerGains()
    if path is None:
        return base
    cp = _read_ini(path)
    extra = set(cp.sections()) - {"gains"}
    if extra:
        raise ConfigError(f"unexpected sections in {path}: {sorted(extra)}")
    kw = _section_to_kwargs(cp, "gains", ControllerGains)
    try:
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def format_params(params: RobotParams) -> str:
    lines = ["[params]"]
    for f in fields(params):
        v = getattr(params, f.name)
        if f.name == "J":
            v = np.asarray(v).ravel()
        if isinstance(v, np.ndarray):
            v = ", ".join(repr(float(x)) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def write_params(params: RobotParams, path) -> None:
    Path(path).write_text(format_params(params))
