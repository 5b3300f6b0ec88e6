"""Scenario definitions and the closed simulation loop.

One control tick runs: setpoint lookup -> (position loop) -> attitude cascade
-> allocation for the active mode -> ``n`` plant steps. Inverse kinematics
for arm targets runs at a lower rate and telemetry is decimated for logging.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .allocation import Allocator
from .arm import IKError, end_effector_body, ik
from .controllers import (
    AttitudeControllerState,
    aerial_position_controller,
    attitude_rate_setpoint,
    rate_pid,
    torque_span,
    wheel_torque,
)
from .core import (
    ConfigError,
    ControlInput,
    ControllerGains,
    DisturbanceModel,
    Mode,
    RobotParams,
    RobotState,
    resting_state,
    rotation_z,
)
from .dynamics import (
    TELEMETRY_COLUMNS,
    ContactState,
    Plant,
    advance_arm,
    SimConfig,
    SimulationDiverged,
    TelemetryRecord,
    step,
)
from .metrics import SeriesStats, power_energy, series_stats

log = logging.getLogger(__name__)

PITCH_BAND = math.radians(3.0)


@dataclass(frozen=True)
class TimelineEntry:
    """Setpoint change taking effect at time ``t``; ``None`` keeps the previous value."""

    t: float
    mode: Optional[Mode] = None
    gamma: Optional[float] = None
    omega_wd: Optional[float] = None
    position: Optional[np.ndarray] = None
    arm: Optional[np.ndarray] = None      # arm-base-frame target (x, y, z)
    wrist: Optional[float] = None
    arm_move_time: float = 1.0


@dataclass(frozen=True)
class PayloadEvent:
    t: float
    mass: float
    attach: bool = True


@dataclass(frozen=True)
class Scenario:
    name: str
    initial: RobotState
    duration: float
    timeline: tuple = ()
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    payload_events: tuple = ()
    allocator: str = "prioritized"
    hover_frac: float = 0.2
    sim: SimConfig = field(default_factory=SimConfig)
    control_rate: float = 400.0
    ik_rate: float = 5.0
    log_rate: float = 100.0
    position_noise: float = 0.0          # m / sqrt(s), aerial controller input only
    static: bool = False                 # body held fixed, only the arm moves
    T_ground_frac: Optional[float] = None
    gains_override: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        ts = [e.t for e in self.timeline]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("timeline timestamps must be strictly increasing")
        if self.allocator not in ("prioritized", "baseline"):
            raise ConfigError(f"unknown allocator {self.allocator!r}")
        ratio = 1.0 / (self.control_rate * self.sim.dt)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("control period must be a multiple of the integration step")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class RunResult:
    scenario: str
    columns: tuple
    rows: list
    stats: dict
    events: list
    failure: Optional[str] = None
    branches_ok: bool = True
    max_speed_violation: float = 0.0
    max_orth_error: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failure is None

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float if name != "mode" else object)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) for x in r])
        text = buf.getvalue()
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


# ---------------------------------------------------------------------------
# the loop


class _ArmPlanner:
    """Straight-line base-frame reference, re-solved with IK at a fixed rate."""

    def __init__(self, geom, q0):
        self.geom = geom
        self.q_cmd = np.array(q0, dtype=float)
        self.start = end_effector_body(q0, geom) - geom.base_offset
        self.goal = self.start.copy()
        self.t0 = 0.0
        self.move_time = 1.0
        self.wrist = float(q0[2])

    def retarget(self, goal, wrist, t, move_time):
        self.start = self.reference(t)
        self.goal = np.asarray(goal, dtype=float)
        self.wrist = self.wrist if wrist is None else float(wrist)
        self.t0, self.move_time = t, max(move_time, 1e-6)

    def reference(self, t) -> np.ndarray:
        s = min(1.0, max(0.0, (t - self.t0) / self.move_time))
        return self.start + s * (self.goal - self.start)

    def solve(self, t):
        self.q_cmd = ik(self.reference(t), self.wrist, self.geom)
        return self.q_cmd


def _cg_after_attach(params: RobotParams, mass: float, r_body) -> RobotParams:
    r_cg = -params.d_cg
    m_new = params.m + mass
    r_new = (params.m * r_cg + mass * np.asarray(r_body)) / m_new
    return params.with_(m=m_new, d_cg=-r_new)


def _cg_after_detach(params: RobotParams, mass: float, r_body) -> RobotParams:
    r_cg = -params.d_cg
    m_new = params.m - mass
    r_new = (params.m * r_cg - mass * np.asarray(r_body)) / m_new
    return params.with_(m=m_new, d_cg=-r_new)


class Simulator:
    """Stateful closed loop advanced one control tick at a time.

    ``run_scenario`` drives it from a fixed timeline; the pick-and-place
    mission drives it reactively.
    """

    def __init__(self, initial: RobotState, params: RobotParams, gains: ControllerGains,
                 sim: SimConfig, disturbance=None, *, allocator: str = "prioritized",
                 hover_frac: float = 0.2, control_rate: float = 400.0, ik_rate: float = 5.0,
                 log_rate: float = 100.0, position_noise: float = 0.0, static: bool = False,
                 record_every: Optional[int] = None, keep_records: bool = False):
        self.params = params
        self.gains = gains
        self.cfg = sim
        self.disturbance = disturbance
        self.allocator = allocator
        self.hover_frac = hover_frac
        self.static = static
        self.position_noise = position_noise
        self.ctrl_dt = 1.0 / control_rate
        self.n_sub = int(round(self.ctrl_dt / sim.dt))
        self.log_every = record_every or max(1, int(round(control_rate / log_rate)))
        self.ik_every = max(1, int(round(control_rate / ik_rate)))
        self.keep_records = keep_records

        self.alloc = Allocator(params)
        self.plant = Plant(params, sim)
        self.ctrl = AttitudeControllerState()
        self.i_lim = gains.integral_frac * torque_span(params)
        self.rng = np.random.default_rng(sim.seed + 7919)
        self.est_drift = np.zeros(3)

        self.state = initial
        self.setpoint = dict(mode=initial.mode, gamma=initial.euler()[2], omega_wd=0.0,
                             position=initial.p.copy())
        self.planner = _ArmPlanner(sim.arm, initial.q_arm)
        self.prev_R_d = rotation_z(self.setpoint["gamma"])
        self.rows: list = []
        self.records: list = []
        self.events: list = []
        self.failure: Optional[str] = None
        self.airborne = 0
        self.k = 0
        self.branches_ok = True
        self.speed_violation = 0.0
        self.orth_error = 0.0
        self.last_contact = ContactState()
        self._record(TelemetryRecord(t=0.0, state=initial, contact=ContactState(),
                                     rotor=initial.rotor if initial.rotor is not None else np.zeros(4),
                                     params=params, arm=sim.arm))

    @property
    def t(self) -> float:
        return self.k * self.ctrl_dt

    def _record(self, rec: TelemetryRecord) -> None:
        self.rows.append(rec.row())
        if self.keep_records:
            self.records.append(rec)

    def event(self, kind: str, value) -> None:
        self.events.append((self.t, kind, value))

    def command(self, *, mode=None, gamma=None, omega_wd=None, position=None, arm=None,
                wrist=None, arm_move_time: float = 1.0) -> None:
        sp = self.setpoint
        if mode is not None and Mode(mode) != sp["mode"]:
            self.event("mode_command", Mode(mode).value)
            sp["mode"] = Mode(mode)
            if sp["mode"] == Mode.AERIAL and position is None:
                sp["position"] = self.state.p.copy()
        if gamma is not None:
            sp["gamma"] = float(gamma)
        if omega_wd is not None:
            sp["omega_wd"] = float(omega_wd)
        if position is not None:
            sp["position"] = np.asarray(position, dtype=float)
        if arm is not None:
            self.planner.retarget(arm, wrist, self.t, arm_move_time)

    def apply_entry(self, e: TimelineEntry) -> None:
        self.command(mode=e.mode, gamma=e.gamma, omega_wd=e.omega_wd, position=e.position,
                     arm=e.arm, wrist=e.wrist, arm_move_time=e.arm_move_time)

    def payload(self, mass: float, attach: bool = True) -> None:
        """Attach or release a point mass held at the end effector."""
        r_body = end_effector_body(self.state.q_arm, self.cfg.arm)
        if attach:
            self.params = _cg_after_attach(self.params, mass, r_body)
        else:
            self.params = _cg_after_detach(self.params, mass, r_body)
        self.alloc = Allocator(self.params)
        self.plant = Plant(self.params, self.cfg)
        self.event("payload_attach" if attach else "payload_detach", mass)

    def fail(self, message: str) -> None:
        self.failure = message
        self.event("failure", message)

    def tick(self) -> bool:
        """Advance one control period; returns False once the run has failed."""
        if self.failure is not None:
            return False
        t = self.t
        state, params, gains, sp = self.state, self.params, self.gains, self.setpoint
        if self.k % self.ik_every == 0:
            try:
                self.planner.solve(t)
            except IKError as exc:
                self.fail(f"ik failure at t={t:.3f}: {exc}")
                return False

        commanded = sp["mode"]
        grounded = state.mode == Mode.GROUND
        use_ground_alloc = grounded and commanded == Mode.GROUND
        if use_ground_alloc:
            R_d = rotation_z(sp["gamma"])
            T_d = 0.0
        else:
            if not grounded and self.position_noise > 0:
                self.est_drift = self.est_drift + self.position_noise * math.sqrt(self.ctrl_dt) \
                    * self.rng.standard_normal(3)
            T_d, R_d = aerial_position_controller(sp["position"], np.zeros(3), state, gains, params,
                                                  gamma_d=sp["gamma"], prev_R_d=self.prev_R_d,
                                                  p_meas=state.p + self.est_drift)
            self.prev_R_d = R_d
        omega_d = attitude_rate_setpoint(R_d, state.R, gains)
        tau = rate_pid(omega_d, state.omega, self.ctrl, gains, params.tau_c, self.ctrl_dt,
                       self.i_lim, t)
        u = ControlInput(T_d, tau)
        if use_ground_alloc:
            expected = self.allocator
            res = self.alloc.baseline(u, self.hover_frac) if self.allocator == "baseline" \
                else self.alloc.prioritized(u)
        else:
            expected = "tracking"
            res = self.alloc.tracking(u)
        self.branches_ok &= res.branch == expected
        v = res.speeds.v
        self.speed_violation = max(self.speed_violation, float(np.max(params.v_min - v)),
                                   float(np.max(v - params.v_max)))
        tau_w = wheel_torque(sp["omega_wd"], gains, state.omega_w) if grounded else 0.0

        cfg = self.cfg
        try:
            for j in range(self.n_sub):
                if self.static:
                    state, rec = _static_step(state, res, self.planner.q_cmd, params, cfg,
                                              t + j * cfg.dt)
                    continue
                prev_mode = state.mode
                state, contact, rec, self.airborne = step(
                    state, res, tau_w, self.planner.q_cmd, self.disturbance, params, cfg,
                    t + j * cfg.dt, commanded_mode=commanded, plant=self.plant,
                    airborne_steps=self.airborne)
                self.last_contact = contact
                if state.mode != prev_mode:
                    self.events.append((rec.t, "mode", state.mode.value))
                    if state.mode == Mode.GROUND:
                        self.ctrl.reset()
                    if rec.hard_landing:
                        self.events.append((rec.t, "hard_landing", float(-state.vel[2])))
        except SimulationDiverged as exc:
            self.fail(f"diverged: {exc}")
            return False
        self.state = state
        self.orth_error = max(self.orth_error, float(np.abs(state.R.T @ state.R - np.eye(3)).max()))
        self.k += 1
        if self.k % self.log_every == 0:
            self._record(rec)
        return True

    def result(self, name: str) -> RunResult:
        res = RunResult(name, TELEMETRY_COLUMNS, self.rows, {}, self.events, self.failure,
                        self.branches_ok, self.speed_violation, self.orth_error)
        if self.keep_records:
            res.records = self.records
        res.stats.update(default_stats(res, self.params))
        res.final_params = self.params
        res.final_state = self.state
        return res


def run_scenario(scenario: Scenario, params: Optional[RobotParams] = None,
                 gains: Optional[ControllerGains] = None, *, record_every: Optional[int] = None,
                 keep_records: bool = False) -> RunResult:
    """Simulate ``scenario`` and return telemetry rows plus summary statistics."""
    params = params or RobotParams()
    gains = gains or ControllerGains()
    if scenario.gains_override:
        gains = replace(gains, **scenario.gains_override)
    if scenario.T_ground_frac is not None:
        params = params.with_(T_ground_frac=scenario.T_ground_frac)
    sim = Simulator(scenario.initial, params, gains, scenario.sim, scenario.disturbance,
                    allocator=scenario.allocator, hover_frac=scenario.hover_frac,
                    control_rate=scenario.control_rate, ik_rate=scenario.ik_rate,
                    log_rate=scenario.log_rate, position_noise=scenario.position_noise,
                    static=scenario.static, record_every=record_every, keep_records=keep_records)
    timeline = sorted(scenario.timeline, key=lambda e: e.t)
    payloads = sorted(scenario.payload_events, key=lambda e: e.t)
    n_ticks = int(round(scenario.duration / sim.ctrl_dt))
    ti = pi = 0
    for _ in range(n_ticks):
        t = sim.t
        while ti < len(timeline) and timeline[ti].t <= t + 1e-12:
            sim.apply_entry(timeline[ti])
            ti += 1
        while pi < len(payloads) and payloads[pi].t <= t + 1e-12:
            sim.payload(payloads[pi].mass, payloads[pi].attach)
            pi += 1
        if not sim.tick():
            break
    return sim.result(scenario.name)


def _static_step(state: RobotState, res, arm_cmd, params, cfg, t):
    q, dq = advance_arm(state, arm_cmd, cfg)
    new = state.with_(q_arm=q, dq_arm=dq)
    rec = TelemetryRecord(t=t + cfg.dt, state=new, contact=ContactState(),
                          rotor=np.zeros(4), params=params, arm=cfg.arm)
    return new, rec


def default_stats(result: RunResult, params: RobotParams) -> dict:
    if len(result.rows) < 2:
        return {}
    t = result.column("t")
    pitch = result.column("pitch")
    speeds = np.column_stack([result.column(c) for c in ("v1", "v2", "v3", "v4")])
    mean_p, energy = power_energy(t, speeds, params)
    return {
        "pitch": series_stats(t, pitch, 0.0, PITCH_BAND, energy),
        "mean_power_W": mean_p,
        "energy_J": energy,
    }


def ee_tracking_error(result: RunResult, reference_world: np.ndarray) -> np.ndarray:
    ee = np.column_stack([result.column(c) for c in ("ee_x", "ee_y", "ee_z")])
    return np.linalg.norm(ee - reference_world, axis=1)


# ---------------------------------------------------------------------------
# canned scenarios


def attitude_recovery(params: Optional[RobotParams] = None, pitch_deg: float = 10.0,
                      T_ground_frac: float = 0.075, duration: float = 10.0, seed: int = 0,
                      allocator: str = "prioritized", hover_frac: float = 0.2,
                      sim: Optional[SimConfig] = None) -> Scenario:
    """Start at rest on the wheel with a large pitch and regulate to level."""
    params = params or RobotParams()
    sim = sim or SimConfig(seed=seed, low_speed_loss=0.3)
    init = resting_state(params, pitch=math.radians(pitch_deg), mode=Mode.GROUND)
    return Scenario(
        name="attitude_recovery", initial=init, duration=duration,
        timeline=(TimelineEntry(0.0, mode=Mode.GROUND, gamma=0.0, omega_wd=0.0),),
        disturbance=DisturbanceModel(seed=seed), allocator=allocator, hover_frac=hover_frac,
        sim=replace(sim, seed=seed), T_ground_frac=T_ground_frac,
    )


TRACKING_SETPOINTS = (np.array([0.22, 0.0, 0.12]), np.array([0.16, 0.0, 0.20]))


def tracking(mode: str, seed: int = 0, params: Optional[RobotParams] = None,
             hold: float = 7.0, move_time: float = 1.0, settle: float = 1.0,
             position_noise: float = 0.005) -> Scenario:
    """End-effector tracking of two base-frame setpoints held ``hold`` s each.

    ``mode`` is ``static`` (body fixed), ``ground`` or ``aerial``.
    """
    params = params or RobotParams()
    if mode not in ("static", "ground", "aerial"):
        raise ConfigError(f"unknown tracking mode {mode!r}")
    q0 = ik(TRACKING_SETPOINTS[0], 0.0, SimConfig().arm)
    if mode == "aerial":
        init = RobotState(p=np.array([0.0, 0.0, 1.0]), mode=Mode.AERIAL, q_arm=q0)
        init = init.with_(rotor=np.full(4, math.sqrt(params.weight / (4 * params.C_t))))
    else:
        init = resting_state(params, mode=Mode.GROUND, q_arm=q0)
    m = Mode.AERIAL if mode == "aerial" else Mode.GROUND
    t1 = settle
    t2 = t1 + move_time + hold
    timeline = (
        TimelineEntry(0.0, mode=m, gamma=0.0, omega_wd=0.0, arm=TRACKING_SETPOINTS[0], wrist=0.0,
                      arm_move_time=1e-6),
        TimelineEntry(t1, arm=TRACKING_SETPOINTS[1], arm_move_time=move_time),
        TimelineEntry(t2, arm=TRACKING_SETPOINTS[0], arm_move_time=move_time),
    )
    sim = SimConfig(seed=seed, arm_resolution=math.radians(0.088))
    return Scenario(
        name=f"tracking_{mode}", initial=init, duration=t2 + move_time + hold,
        timeline=timeline, disturbance=DisturbanceModel(seed=seed), sim=sim,
        position_noise=position_noise if mode == "aerial" else 0.0, static=mode == "static",
        gains_override={"wheel_closed_loop": True, "K_wheel": 0.1},
    )


def tracking_reference(scenario: Scenario, result: RunResult) -> np.ndarray:
    """World-frame end-effector reference for each logged row.

    The reference is the planner's base-frame path mapped through the body
    pose the robot had at t = 0.
    """
    geom = scenario.sim.arm
    s0 = scenario.initial
    planner = _ArmPlanner(geom, s0.q_arm)
    times = result.column("t")
    entries = sorted(scenario.timeline, key=lambda e: e.t)
    out = np.zeros((len(times), 3))
    ei = 0
    for i, t in enumerate(times):
        while ei < len(entries) and entries[ei].t <= t + 1e-12:
            if entries[ei].arm is not None:
                planner.retarget(entries[ei].arm, entries[ei].wrist, entries[ei].t,
                                 entries[ei].arm_move_time)
            ei += 1
        out[i] = s0.p + s0.R @ (geom.base_offset + planner.reference(t))
    return out


def tracking_rmse(scenario: Scenario, result: RunResult) -> tuple[float, float]:
    """(RMSE, max error) of the end effector against its reference, m."""
    err = ee_tracking_error(result, tracking_reference(scenario, result))
    return float(np.sqrt(np.mean(err**2))), float(err.max())


# ---------------------------------------------------------------------------
# comparison and sweep


def compare_allocators(scenario: Scenario, hover_fracs: Sequence[float],
                       params: Optional[RobotParams] = None,
                       gains: Optional[ControllerGains] = None) -> list[dict]:
    """Prioritized allocator vs the thrust-priority baseline at several hover throttles."""
    rows = []
    runs = [("prioritized", None)] + [("baseline", h) for h in hover_fracs]
    for kind, h in runs:
        sc = scenario.with_(allocator=kind, hover_frac=h if h is not None else scenario.hover_frac)
        res = run_scenario(sc, params, gains)
        pitch: SeriesStats = res.stats.get("pitch")
        rows.append({
            "allocator": kind,
            "T_ground_frac": scenario.T_ground_frac if kind == "prioritized" else "",
            "hover_frac": "" if h is None else h,
            "pitch_rmse_deg": math.degrees(pitch.rmse) if pitch else float("nan"),
            "settling_time_s": pitch.settling_time_s if pitch else None,
            "mean_power_W": res.stats.get("mean_power_W", float("nan")),
            "energy_J": res.stats.get("energy_J", float("nan")),
            "failure": res.failure or "",
        })
    return rows


def sweep_case(scenario: Scenario, key: str, value: float,
               params: Optional[RobotParams] = None) -> tuple[Scenario, Optional[RobotParams]]:
    """Scenario and parameter set with ``key`` (a scenario or robot field) set to ``value``."""
    if key == "T_ground_frac" or key in Scenario.__dataclass_fields__:
        if key in ("name", "initial", "timeline", "sim", "disturbance", "payload_events",
                   "gains_override", "allocator"):
            raise ConfigError(f"cannot sweep non-numeric field {key!r}")
        return scenario.with_(**{key: value}), params
    if key in RobotParams.__dataclass_fields__:
        return scenario, (params or RobotParams()).with_(**{key: value})
    raise ConfigError(f"cannot vary unknown field {key!r}")


def sweep(scenario: Scenario, key: str, values: Sequence[float],
          params: Optional[RobotParams] = None, gains: Optional[ControllerGains] = None):
    """Run ``scenario`` once per value of a scenario or robot field."""
    sweep_case(scenario, key, values[0] if len(values) else 0.1, params)
    results = []
    for val in values:
        sc, p = sweep_case(scenario, key, val, params)
        results.append((val, run_scenario(sc, p, gains)))
    return results


def summary_rows(key: str, results) -> list[dict]:
    out = []
    for val, res in results:
        pitch = res.stats.get("pitch")
        out.append({
            key: val,
            "pitch_rmse_deg": math.degrees(pitch.rmse) if pitch else float("nan"),
            "settling_time_s": pitch.settling_time_s if pitch else None,
            "mean_power_W": res.stats.get("mean_power_W", float("nan")),
            "energy_J": res.stats.get("energy_J", float("nan")),
            "failure": res.failure or "",
        })
    return out


def write_dict_rows(rows: list[dict], path) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("none" if v is None else v) for k, v in r.items()})
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text
