"""Kinematics of the 3-joint arm: two parallel pitch joints and a wrist roll.

Joint 1 and 2 move the end effector in the arm's x-z plane; joint 3 only
rotates the tool. In the arm base frame (axes parallel to the body frame)::

    x =  L1 cos q1 + L2 cos(q1 + q2)
    z = -(L1 sin q1 + L2 sin(q1 + q2))

so positive joint angles swing the links downwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class IKError(ValueError):
    pass


class UnreachableError(IKError):
    def __init__(self, distance: float):
        super().__init__(f"target unreachable; {distance:.4g} m outside the workspace")
        self.distance = distance


class JointLimitError(IKError):
    pass


@dataclass(frozen=True)
class ArmGeometry:
    base_offset: np.ndarray = field(default_factory=lambda: np.array([0.08, 0.0, -0.05]))
    L1: float = 0.15
    L2: float = 0.15
    limits: np.ndarray = field(default_factory=lambda: np.array([
        [-math.pi / 2, math.pi / 2],
        [-2.8, 2.8],
        [-math.pi, math.pi],
    ]))
    mount_R: np.ndarray = field(default_factory=lambda: np.eye(3))
    link_masses: tuple = (0.05, 0.05)

    def __post_init__(self):
        object.__setattr__(self, "base_offset", np.asarray(self.base_offset, dtype=float).reshape(3))
        object.__setattr__(self, "limits", np.asarray(self.limits, dtype=float).reshape(3, 2))
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError("link lengths must be positive")
        if np.any(self.limits[:, 0] > self.limits[:, 1]):
            raise ValueError("joint limits must be ordered (lo, hi)")

    def within_limits(self, q, tol: float = 1e-12) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.limits[:, 0] - tol) and np.all(q <= self.limits[:, 1] + tol))

    def clip(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.limits[:, 0], self.limits[:, 1])


def _planar(q1: float, q2: float, geom: ArmGeometry) -> tuple[float, float]:
    x = geom.L1 * math.cos(q1) + geom.L2 * math.cos(q1 + q2)
    z = -(geom.L1 * math.sin(q1) + geom.L2 * math.sin(q1 + q2))
    return x, z


def fk(q, geom: ArmGeometry, check: bool = True) -> tuple[np.ndarray, float]:
    """End-effector position in the arm base frame and wrist angle."""
    q = np.asarray(q, dtype=float)
    if check and not geom.within_limits(q):
        raise JointLimitError(f"joint angles {q} outside limits")
    x, z = _planar(q[0], q[1], geom)
    return np.array([x, 0.0, z]), float(q[2])


def elbow_position(q, geom: ArmGeometry) -> np.ndarray:
    return np.array([geom.L1 * math.cos(q[0]), 0.0, -geom.L1 * math.sin(q[0])])


def jacobian(q, geom: ArmGeometry) -> np.ndarray:
    """d(x, z)/d(q1, q2) of the planar position."""
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    return np.array([
        [-geom.L1 * s1 - geom.L2 * s12, -geom.L2 * s12],
        [-geom.L1 * c1 - geom.L2 * c12, -geom.L2 * c12],
    ])


def ik(target, wrist: float, geom: ArmGeometry, tol: float = 1e-9) -> np.ndarray:
    """Closed-form two-link inverse kinematics.

    The elbow-down branch (elbow below the base-target line) is preferred;
    the other branch is used only if joint limits exclude it.
    """
    target = np.asarray(target, dtype=float)
    x, y, z = target
    if abs(y) > tol:
        raise UnreachableError(abs(y))
    s = -z
    rho = math.hypot(x, s)
    outer, inner = geom.L1 + geom.L2, abs(geom.L1 - geom.L2)
    if rho > outer + tol:
        raise UnreachableError(rho - outer)
    if rho < inner - tol:
        raise UnreachableError(inner - rho)
    D = (rho * rho - geom.L1**2 - geom.L2**2) / (2 * geom.L1 * geom.L2)
    D = min(1.0, max(-1.0, D))
    base_angle = math.atan2(s, x)
    candidates = []
    for q2 in (math.acos(D), -math.acos(D)):
        q1 = base_angle - math.atan2(geom.L2 * math.sin(q2), geom.L1 + geom.L2 * math.cos(q2))
        q1 = math.atan2(math.sin(q1), math.cos(q1))
        q = np.array([q1, q2, wrist])
        # signed height of the elbow relative to the base-target line (positive = below)
        ex, _, ez = elbow_position(q, geom)
        below = -(x * ez - z * ex)  # cross product sign in the x-z plane
        candidates.append((below, q))
    # elbow-down first; stable ordering keeps the choice deterministic
    candidates.sort(key=lambda c: -c[0])
    binding = None
    for _, q in candidates:
        if geom.within_limits(q):
            return q
        bad = np.nonzero((q < geom.limits[:, 0]) | (q > geom.limits[:, 1]))[0]
        binding = binding if binding is not None else int(bad[0])
    raise JointLimitError(f"both elbow branches violate the limit of joint {binding + 1}")


def end_effector_world(state, geom: ArmGeometry, q=None) -> np.ndarray:
    q = state.q_arm if q is None else q
    pos, _ = fk(q, geom, check=False)
    return state.p + state.R @ (geom.base_offset + geom.mount_R @ pos)


def end_effector_body(q, geom: ArmGeometry) -> np.ndarray:
    pos, _ = fk(q, geom, check=False)
    return geom.base_offset + geom.mount_R @ pos


def link_points_body(q, geom: ArmGeometry) -> list[np.ndarray]:
    """Body-frame midpoints of the two links (point-mass model)."""
    e = geom.base_offset + geom.mount_R @ elbow_position(q, geom)
    tip = end_effector_body(q, geom)
    return [0.5 * (geom.base_offset + e), 0.5 * (e + tip)]
