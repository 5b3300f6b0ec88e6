"""Scripted pick, fly and place mission.

The robot drives to an object on the floor, grasps it, takes off, flies to
a table, lands on it and puts the object down at a target point. Each phase
has a completion test and a timeout; a timeout ends the mission with the
phase name in the failure message.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .arm import IKError, end_effector_world, ik
from .core import (
    ConfigError,
    ControllerGains,
    DisturbanceModel,
    Mode,
    RobotParams,
    _read_ini,
    _section_to_kwargs,
    resting_state,
)
from .dynamics import Plateau, SimConfig, Terrain
from .scenarios import RunResult, Simulator

PHASES = ("start", "approach", "align_pick", "reach_pick", "grasp", "stow", "takeoff", "transit",
          "descend", "settle", "align_place", "reach_place", "release", "retract")


@dataclass(frozen=True)
class MissionConfig:
    pick: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.0, 0.03]))
    place: np.ndarray = field(default_factory=lambda: np.array([2.5, 0.05, 0.33]))
    table: tuple = (2.0, 3.0, -0.5, 0.5, 0.3)     # x0, x1, y0, y1, height
    cruise_altitude: float = 0.9
    waypoint: Optional[np.ndarray] = None          # extra cruise point (x, y); None = direct
    payload_mass: float = 0.09
    standoff: float = 0.28                         # horizontal origin-to-target distance when reaching
    stow: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.0, 0.05]))
    tolerance: float = 0.02
    drive_speed: float = 0.2
    flight_speed: float = 0.5
    descent_speed: float = 0.2
    phase_timeout: float = 15.0
    seed: int = 0
    disturbance: bool = True
    position_noise: float = 0.0

    def __post_init__(self):
        for name in ("pick", "place", "stow"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if self.waypoint is not None:
            object.__setattr__(self, "waypoint", np.asarray(self.waypoint, dtype=float).reshape(2))
        if len(self.table) != 5:
            raise ConfigError("table needs x0, x1, y0, y1, height")
        if self.payload_mass < 0:
            raise ConfigError("payload_mass must be non-negative")
        for name in ("tolerance", "drive_speed", "flight_speed", "descent_speed", "phase_timeout"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def plateau(self) -> Plateau:
        return Plateau(*self.table)


@dataclass
class MissionResult:
    run: RunResult
    phases: list                     # (name, t_start, t_end)
    success: bool
    failed_phase: Optional[str]
    placement_error: float
    pickup_peak_tilt_deg: float
    pickup_tilt_after_1s_deg: float
    constraint_violations: list

    @property
    def events(self) -> list:
        return self.run.events

    def summary(self) -> dict:
        return {
            "success": self.success,
            "failed_phase": self.failed_phase or "",
            "placement_error_m": self.placement_error,
            "pickup_peak_tilt_deg": self.pickup_peak_tilt_deg,
            "pickup_tilt_after_1s_deg": self.pickup_tilt_after_1s_deg,
            "constraint_violations": ";".join(self.constraint_violations),
            "duration_s": self.run.rows[-1][0] if self.run.rows else 0.0,
        }


def load_mission_config(path) -> MissionConfig:
    cp = _read_ini(path)
    if not cp.has_section("mission"):
        raise ConfigError(f"{path}: missing [mission] section")
    kw = _section_to_kwargs(cp, "mission", MissionConfig)
    if "table" in kw:
        kw["table"] = tuple(np.atleast_1d(kw["table"]).tolist())
    if "seed" in kw:
        kw["seed"] = int(kw["seed"])
    try:
        return MissionConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


class _Mission:
    def __init__(self, config: MissionConfig, params: RobotParams, gains: ControllerGains):
        self.c = config
        terrain = Terrain((config.plateau,))
        sim_cfg = SimConfig(seed=config.seed, terrain=terrain, arm_resolution=math.radians(0.088))
        gains = replace(gains, wheel_closed_loop=True, K_wheel=max(gains.K_wheel, 0.1))
        init = resting_state(params, mode=Mode.GROUND, q_arm=ik(config.stow, 0.0, sim_cfg.arm))
        dist = DisturbanceModel(seed=config.seed) if config.disturbance else DisturbanceModel.none()
        self.sim = Simulator(init, params, gains, sim_cfg, dist,
                             position_noise=config.position_noise)
        self.sim.command(mode=Mode.GROUND, gamma=0.0, omega_wd=0.0)
        self.phases: list = []
        self.failed: Optional[str] = None
        self.t_attach: Optional[float] = None
        self.released_at: Optional[np.ndarray] = None

    # -- helpers ----------------------------------------------------------
    @property
    def state(self):
        return self.sim.state

    def ee(self) -> np.ndarray:
        return end_effector_world(self.state, self.sim.cfg.arm)

    def phase(self, name: str, done: Callable[[], bool], on_tick: Optional[Callable] = None,
              timeout: Optional[float] = None) -> bool:
        sim = self.sim
        t0 = sim.t
        sim.event("phase_start", name)
        limit = self.c.phase_timeout if timeout is None else timeout
        while not done():
            if sim.t - t0 > limit:
                self.failed = name
                sim.fail(f"phase {name} timed out after {limit:g} s")
                return False
            if on_tick is not None:
                on_tick()
            if not sim.tick():
                self.failed = name
                return False
        sim.event("phase_end", name)
        self.phases.append((name, t0, sim.t))
        return True

    def wait(self, name: str, duration: float) -> bool:
        t_end = self.sim.t + duration
        return self.phase(name, lambda: self.sim.t >= t_end - 1e-9, timeout=duration + 1.0)

    def heading_to(self, target) -> float:
        d = np.asarray(target)[:2] - self.state.p[:2]
        return math.atan2(d[1], d[0])

    def base_target(self, target_world) -> np.ndarray:
        """Arm-base-frame coordinates of a world point for the current pose."""
        geom = self.sim.cfg.arm
        local = self.state.R.T @ (np.asarray(target_world) - self.state.p) - geom.base_offset
        return geom.mount_R.T @ local

    # -- phases -----------------------------------------------------------
    def drive_to_standoff(self, target) -> bool:
        c, sim = self.c, self.sim
        direction = np.asarray(target[:2]) - self.state.p[:2]
        direction = direction / max(np.linalg.norm(direction), 1e-9)
        stop = np.asarray(target[:2]) - c.standoff * direction
        sim.command(gamma=math.atan2(direction[1], direction[0]))

        def remaining():
            return float((stop - self.state.p[:2]) @ direction)

        def on_tick():
            v = float(np.clip(2.0 * remaining(), -c.drive_speed, c.drive_speed))
            sim.command(omega_wd=v / sim.params.r)

        def done():
            return abs(remaining()) < 0.005 and np.linalg.norm(self.state.vel[:2]) < 0.01

        ok = self.phase("approach", done, on_tick)
        sim.command(omega_wd=0.0)
        return ok

    def align(self, name: str, target) -> bool:
        sim = self.sim
        gamma = self.heading_to(target)
        sim.command(gamma=gamma, omega_wd=0.0)

        def done():
            err = math.remainder(self.state.euler()[2] - gamma, math.tau)
            return abs(err) < math.radians(0.3) and abs(self.state.omega[2]) < 0.02

        return self.phase(name, done)

    def reach(self, name: str, target, move_time: float = 1.5) -> bool:
        """Move the end effector onto ``target``; the IK goal is recomputed
        from the measured pose once the first move has finished."""
        sim = self.sim
        t_refine = [sim.t + move_time + 0.5]
        refined = [False]

        def goal():
            b = self.base_target(target)
            b[1] = 0.0
            return b

        try:
            ik(goal(), 0.0, sim.cfg.arm)
        except IKError as exc:
            self.failed = name
            sim.fail(f"phase {name}: {exc}")
            return False
        sim.command(arm=goal(), wrist=0.0, arm_move_time=move_time)

        def on_tick():
            if not refined[0] and sim.t >= t_refine[0]:
                sim.command(arm=goal(), arm_move_time=0.3)
                refined[0] = True
                t_refine[0] = sim.t + 0.8

        def done():
            return refined[0] and sim.t >= t_refine[0] and \
                np.linalg.norm(self.ee() - target) < 0.5 * self.c.tolerance

        return self.phase(name, done, on_tick)

    def fly_to(self, name: str, goal, speed: float, done_tol: float = 0.03) -> bool:
        sim = self.sim
        goal = np.asarray(goal, dtype=float)
        ref = np.array(sim.setpoint["position"], dtype=float)

        def on_tick():
            d = goal - ref
            n = np.linalg.norm(d)
            ref[:] = goal if n <= speed * sim.ctrl_dt else ref + d / n * speed * sim.ctrl_dt
            sim.command(position=ref.copy())

        def done():
            return np.linalg.norm(self.state.p - goal) < done_tol and \
                np.linalg.norm(self.state.vel) < 0.05

        return self.phase(name, done, on_tick)

    def run(self) -> None:
        c, sim = self.c, self.sim
        h = c.table[4]
        params = sim.params
        ok = (self.wait("start", 0.5)
              and self.drive_to_standoff(c.pick)
              and self.align("align_pick", c.pick)
              and self.reach("reach_pick", c.pick))
        if not ok:
            return
        if c.payload_mass > 0:
            sim.payload(c.payload_mass, attach=True)
        self.t_attach = sim.t
        if not (self.wait("grasp", 1.5)):
            return
        sim.command(arm=c.stow, wrist=0.0, arm_move_time=1.0)
        if not self.wait("stow", 1.5):
            return

        # takeoff straight up, then cruise
        p0 = self.state.p.copy()
        sim.command(mode=Mode.AERIAL, position=p0)
        climb = np.array([p0[0], p0[1], c.cruise_altitude])
        if not self.fly_to("takeoff", climb, c.descent_speed * 2):
            return
        land_dir = c.place[:2] - self.state.p[:2]
        legs = []
        if c.waypoint is not None:
            legs.append(c.waypoint)
            land_dir = c.place[:2] - c.waypoint
        land_dir = land_dir / max(np.linalg.norm(land_dir), 1e-9)
        legs.append(c.place[:2] - c.standoff * land_dir)

        def transit_done():
            return np.linalg.norm(self.state.p - leg_goals[-1]) < 0.03 and \
                np.linalg.norm(self.state.vel) < 0.05

        leg_goals = [np.append(xy, c.cruise_altitude) for xy in legs]
        sim.command(gamma=math.atan2(land_dir[1], land_dir[0]))
        ref = np.array(sim.setpoint["position"], dtype=float)
        leg = [0]

        def on_transit():
            goal = leg_goals[leg[0]]
            d = goal - ref
            n = np.linalg.norm(d)
            step_len = c.flight_speed * sim.ctrl_dt
            if n <= step_len:
                ref[:] = goal
                leg[0] = min(leg[0] + 1, len(leg_goals) - 1)
            else:
                ref[:] = ref + d / n * step_len
            sim.command(position=ref.copy())

        if not self.phase("transit", transit_done, on_transit):
            return

        # descend until touchdown on the table, then hand over to ground mode
        target_z = h + params.l_z - 0.05
        ref = np.array(sim.setpoint["position"], dtype=float)

        def on_descend():
            ref[2] = max(target_z, ref[2] - c.descent_speed * sim.ctrl_dt)
            sim.command(position=ref.copy())

        if not self.phase("descend", lambda: self.state.mode == Mode.GROUND, on_descend):
            return
        sim.command(mode=Mode.GROUND, gamma=self.state.euler()[2], omega_wd=0.0)
        ok = (self.wait("settle", 1.0)
              and self.align("align_place", c.place)
              and self.reach("reach_place", c.place))
        if not ok:
            return
        self.released_at = self.ee()
        if c.payload_mass > 0:
            sim.payload(c.payload_mass, attach=False)
        if not self.wait("release", 0.5):
            return
        sim.command(arm=c.stow, wrist=0.0, arm_move_time=1.0)
        self.wait("retract", 1.5)


def mission_pick_place(config: Optional[MissionConfig] = None, params: Optional[RobotParams] = None,
                       gains: Optional[ControllerGains] = None) -> MissionResult:
    """Run the scripted mission and evaluate it."""
    config = config or MissionConfig()
    m = _Mission(config, params or RobotParams(), gains or ControllerGains())
    m.run()
    sim = m.sim
    run = sim.result("mission_pick_place")

    err = float(np.linalg.norm(m.released_at - config.place)) if m.released_at is not None \
        else float("nan")
    peak = after = float("nan")
    if m.t_attach is not None:
        t = run.column("t")
        tilt = np.degrees(np.maximum(np.abs(run.column("roll")), np.abs(run.column("pitch"))))
        win = (t >= m.t_attach) & (t <= m.t_attach + 1.0)
        if win.any():
            peak = float(tilt[win].max())
        later = (t >= m.t_attach + 1.0) & (t <= m.t_attach + 1.5)
        if later.any():
            after = float(tilt[later].max())

    violations = []
    if run.max_speed_violation > 1e-9:
        violations.append(f"motor speed outside limits by {run.max_speed_violation:.3g} rad/s")
    if run.max_orth_error > 1e-9:
        violations.append(f"rotation orthonormality error {run.max_orth_error:.3g}")
    if not run.branches_ok:
        violations.append("allocator branch did not match the mode")
    if any(kind == "hard_landing" for _, kind, _ in run.events):
        violations.append("hard landing")

    success = (run.failure is None and m.failed is None and m.released_at is not None
               and err < config.tolerance and not violations)
    sim.events.append((sim.t, "mission_success" if success else "mission_failure",
                       m.failed or ("" if success else "placement or constraint check")))
    return MissionResult(run=run, phases=m.phases, success=success, failed_phase=m.failed,
                         placement_error=err, pickup_peak_tilt_deg=peak,
                         pickup_tilt_after_1s_deg=after, constraint_violations=violations)
