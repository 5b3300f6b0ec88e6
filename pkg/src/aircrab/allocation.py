"""Motor mixing and prioritized control allocation for an X-frame quadrotor.

The mixer maps squared rotor speeds ``w = v**2`` to ``[T, tau_x, tau_y, tau_z]``.
Eliminating ``T`` (and ``tau_z``) from the box ``v_min**2 <= w_i <= v_max**2``
gives two small polytopes that the allocator uses to scale torque demands:

* tilt set: ``|tau_x +/- tau_y| <= c_B`` with ``c_B = sqrt(2) C_t l (v_max**2 - v_min**2)``
* tilt+yaw set, in scaled coordinates ``a = tau_xy / (sqrt(2) C_t l)``,
  ``b = tau_z / (2 C_d)``: ``|a_x +/- b| <= c_A``, ``|a_y +/- b| <= c_A`` with
  ``c_A = v_max**2 - v_min**2``.

Together they are exactly the projection of the rotor box along the thrust
direction, so any torque triple inside both sets admits a thrust interval
``[T_lo, T_hi]`` with every rotor inside its limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ControlInput, MotorSpeeds, RobotParams

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Mixer:
    M: np.ndarray
    M_inv: np.ndarray

    @classmethod
    def from_params(cls, params: RobotParams) -> "Mixer":
        ct, cd, l = params.C_t, params.C_d, params.l
        s = SQRT2 / 2 * ct * l
        M = np.array([
            [ct, ct, ct, ct],
            [-s, -s, s, s],
            [-s, s, -s, s],
            [-cd, cd, cd, -cd],
        ])
        # rows of M are mutually orthogonal, so the inverse is closed form
        M_inv = M.T / np.sum(M * M, axis=1)
        return cls(M, M_inv)


@dataclass(frozen=True)
class FeasibleSets:
    b_bound: float
    a_bound: float

    @classmethod
    def from_params(cls, params: RobotParams) -> "FeasibleSets":
        span = params.v_max**2 - params.v_min**2
        return cls(SQRT2 * params.C_t * params.l * span, span)


@dataclass(frozen=True)
class AllocationResult:
    speeds: MotorSpeeds
    alpha: float
    beta: float
    T_applied: float
    saturated_tilt: bool = False
    saturated_yaw: bool = False
    thrust_floored: bool = False
    thrust_ceiling: bool = False
    branch: str = ""

    @property
    def squared(self) -> np.ndarray:
        return self.speeds.v**2


def forward_mix(mixer: Mixer, speeds) -> ControlInput:
    v = speeds.v if isinstance(speeds, MotorSpeeds) else np.asarray(speeds, dtype=float)
    return ControlInput.from_vector(mixer.M @ (v * v))


def inverse_mix(mixer: Mixer, u) -> np.ndarray:
    """Squared speeds ``M^-1 u``; no clamping."""
    if isinstance(u, ControlInput):
        u = u.as_vector()
    return mixer.M_inv @ np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# scale factors


def tilt_violation(tau_x: float, tau_y: float) -> float:
    return max(abs(tau_x + tau_y), abs(tau_x - tau_y))


def in_tilt_set(tau_x: float, tau_y: float, sets: FeasibleSets, tol: float = 0.0) -> bool:
    return tilt_violation(tau_x, tau_y) <= sets.b_bound + tol


def yaw_coords(tau_x, tau_y, tau_z, params: RobotParams) -> tuple[float, float, float]:
    k = SQRT2 / (2 * params.C_t * params.l)
    return k * tau_x, k * tau_y, tau_z / (2 * params.C_d)


def in_yaw_set(tau_x, tau_y, tau_z, sets: FeasibleSets, params: RobotParams,
               tol: float = 0.0) -> bool:
    ax, ay, b = yaw_coords(tau_x, tau_y, tau_z, params)
    c = sets.a_bound + tol
    return all(abs(a + sgn * b) <= c for a in (ax, ay) for sgn in (1.0, -1.0))


def clamp_tilt(tau_x: float, tau_y: float, sets: FeasibleSets) -> float:
    worst = tilt_violation(tau_x, tau_y)
    if worst <= sets.b_bound:
        return 1.0
    return sets.b_bound / worst


def clamp_yaw(alpha_tau_x: float, alpha_tau_y: float, tau_z: float,
              sets: FeasibleSets, params: RobotParams) -> float:
    """Largest ``beta <= 1`` keeping ``[a_x, a_y, beta*b]`` inside the yaw set.

    Can return 0 when a tilt coordinate already sits on the set boundary.
    """
    if tau_z == 0.0:
        return 1.0
    ax, ay, b = yaw_coords(alpha_tau_x, alpha_tau_y, tau_z, params)
    headroom = sets.a_bound - max(abs(ax), abs(ay))
    beta = headroom / abs(b)
    return float(min(1.0, max(0.0, beta)))


def _torque_columns(mixer: Mixer, tau) -> np.ndarray:
    # per-rotor squared-speed contribution of a pure torque
    return mixer.M_inv[:, 1:] @ np.asarray(tau, dtype=float)


def thrust_bounds(alpha_tau_x: float, alpha_tau_y: float, beta_tau_z: float,
                  params: RobotParams, mixer: Mixer | None = None) -> tuple[float, float]:
    """Thrust interval keeping every rotor in limits for the given torques.

    Rotor ``i`` receives ``T / (4 C_t) + c_i``; requiring
    ``v_min**2 <= w_i <= v_max**2`` for every rotor yields
    ``T_lo = 4 C_t (v_min**2 - min c_i)`` and ``T_hi = 4 C_t (v_max**2 - max c_i)``.
    """
    mixer = mixer or Mixer.from_params(params)
    c = _torque_columns(mixer, (alpha_tau_x, alpha_tau_y, beta_tau_z))
    k = 4.0 * params.C_t
    return k * (params.v_min**2 - c.min()), k * (params.v_max**2 - c.max())


def _max_scale(base: np.ndarray, delta: np.ndarray, lo: float, hi: float) -> float:
    """Largest ``s in [0, 1]`` with ``lo <= base + s*delta <= hi`` componentwise.

    ``base`` must itself satisfy the bounds.
    """
    s = 1.0
    for b, d in zip(base, delta):
        if d > 0.0:
            s = min(s, (hi - b) / d)
        elif d < 0.0:
            s = min(s, (lo - b) / d)
    return float(max(0.0, s))


def _finish(mixer: Mixer, params: RobotParams, T: float, tau, **flags) -> AllocationResult:
    w = inverse_mix(mixer, np.concatenate(([T], tau)))
    # only round-off can leave the box here
    w = np.clip(w, params.v_min**2, params.v_max**2)
    for key in ("alpha", "beta"):
        flags[key] = float(flags[key])
    for key in ("saturated_tilt", "saturated_yaw", "thrust_floored", "thrust_ceiling"):
        if key in flags:
            flags[key] = bool(flags[key])
    return AllocationResult(speeds=MotorSpeeds(np.sqrt(w)), T_applied=float(T), **flags)


# ---------------------------------------------------------------------------
# allocators


def allocate_prioritized(u: ControlInput, params: RobotParams, mixer: Mixer,
                         sets: FeasibleSets) -> AllocationResult:
    """Ground-mode allocation: tilt first, then yaw, then minimum thrust.

    The commanded thrust ``u.T`` is ignored; thrust is set to the lowest
    feasible value plus the ``T_ground_frac * T_max`` bias, capped at the
    highest feasible value.
    """
    tx, ty, tz = (float(x) for x in u.tau)
    alpha = clamp_tilt(tx, ty, sets)
    atx, aty = alpha * tx, alpha * ty
    beta = clamp_yaw(atx, aty, tz, sets, params)
    btz = beta * tz
    T_lo, T_hi = thrust_bounds(atx, aty, btz, params, mixer)
    T = T_lo + params.T_ground_frac * params.T_max
    ceiling = T > T_hi
    if ceiling:
        T = T_hi
    return _finish(mixer, params, T, (atx, aty, btz), alpha=alpha, beta=beta,
                   saturated_tilt=alpha < 1.0, saturated_yaw=beta < 1.0,
                   thrust_floored=not ceiling, thrust_ceiling=ceiling, branch="prioritized")


def allocate_thrust_tracking(u: ControlInput, params: RobotParams, mixer: Mixer,
                             sets: FeasibleSets | None = None) -> AllocationResult:
    """Aerial-mode allocation: honour thrust, then fit tilt, then yaw around it."""
    T = min(max(u.T, params.T_min), params.T_max)
    floored = u.T < params.T_min
    lo, hi = params.v_min**2, params.v_max**2
    base = np.full(4, T / (4.0 * params.C_t))
    tx, ty, tz = (float(x) for x in u.tau)
    d_tilt = _torque_columns(mixer, (tx, ty, 0.0))
    alpha = _max_scale(base, d_tilt, lo, hi)
    base = base + alpha * d_tilt
    d_yaw = _torque_columns(mixer, (0.0, 0.0, tz))
    beta = _max_scale(base, d_yaw, lo, hi)
    return _finish(mixer, params, T, (alpha * tx, alpha * ty, beta * tz), alpha=alpha,
                   beta=beta, saturated_tilt=alpha < 1.0, saturated_yaw=beta < 1.0,
                   thrust_floored=floored, thrust_ceiling=u.T > params.T_max,
                   branch="tracking")


def allocate_baseline_thrust_priority(u: ControlInput, hover_throttle_frac: float,
                                      params: RobotParams, mixer: Mixer) -> AllocationResult:
    """Thrust-priority comparison allocator.

    Thrust is pinned at ``hover_throttle_frac * T_max`` and the whole torque
    vector is shrunk by one common factor until every rotor fits.
    """
    if not 0.0 < hover_throttle_frac < 1.0:
        raise ValueError("hover_throttle_frac must lie in (0, 1)")
    T = min(max(hover_throttle_frac * params.T_max, params.T_min), params.T_max)
    base = np.full(4, T / (4.0 * params.C_t))
    d = _torque_columns(mixer, u.tau)
    k = _max_scale(base, d, params.v_min**2, params.v_max**2)
    return _finish(mixer, params, T, k * u.tau, alpha=k, beta=k,
                   saturated_tilt=k < 1.0, saturated_yaw=k < 1.0 and u.tau[2] != 0.0,
                   thrust_floored=False, branch="baseline")


class Allocator:
    """Bundles params with a precomputed mixer and feasible sets."""

    def __init__(self, params: RobotParams):
        self.params = params
        self.mixer = Mixer.from_params(params)
        self.sets = FeasibleSets.from_params(params)

    def prioritized(self, u: ControlInput) -> AllocationResult:
        return allocate_prioritized(u, self.params, self.mixer, self.sets)

    def tracking(self, u: ControlInput) -> AllocationResult:
        return allocate_thrust_tracking(u, self.params, self.mixer, self.sets)

    def baseline(self, u: ControlInput, hover_frac: float) -> AllocationResult:
        return allocate_baseline_thrust_priority(u, hover_frac, self.params, self.mixer)
