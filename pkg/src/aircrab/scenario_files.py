"""Plain-text scenario files.

A scenario file is INI-style. Either name a canned scenario::

    [scenario]
    builtin = attitude_recovery
    T_ground_frac = 0.075
    seed = 3

or spell one out with ``[scenario]``, ``[initial]``, ``[sim]``,
``[disturbance]``, ``[gains_override]``, numbered ``[timeline.N]`` and
``[payload.N]`` sections. Angles in files are in degrees; vectors are
comma separated. See docs/scenario_format.md for every key.
"""

from __future__ import annotations

import math
import re
from dataclasses import fields
from typing import Optional

import numpy as np

from .core import (
    ConfigError,
    ControllerGains,
    DisturbanceModel,
    Mode,
    RobotParams,
    RobotState,
    R_from_euler,
    _read_ini,
    parse_value,
    resting_state,
)
from .arm import IKError, ik
from .dynamics import SimConfig
from .scenarios import PayloadEvent, Scenario, TimelineEntry, attitude_recovery, tracking

BUILTINS = ("attitude_recovery", "tracking_static", "tracking_ground", "tracking_aerial")

_SCENARIO_KEYS = {"builtin", "name", "duration", "allocator", "hover_frac", "T_ground_frac",
                  "position_noise", "static", "seed", "control_rate", "ik_rate", "log_rate",
                  "pitch_deg"}
_INITIAL_KEYS = {"mode", "roll_deg", "pitch_deg", "yaw_deg", "position", "velocity",
                 "q_arm_deg", "arm", "hover_rotors"}
_SECTIONS = {"scenario", "initial", "sim", "disturbance", "gains_override"}
_TIMELINE_KEYS = {"t", "mode", "gamma_deg", "omega_wd", "position", "arm", "wrist_deg",
                  "arm_move_time"}


def _section(cp, name: str, allowed: set) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        out[key] = parse_value(raw)
    return out


def _dataclass_section(cp, name: str, cls, exclude=()) -> dict:
    allowed = {f.name for f in fields(cls)
               if f.init and not f.name.startswith("_") and f.name not in exclude}
    kw = _section(cp, name, allowed)
    for f in fields(cls):
        if f.name in kw and f.type in ("int", int):
            kw[f.name] = int(kw[f.name])
    return kw


def _vec(val, n: int, key: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(val, dtype=float))
    if arr.size != n:
        raise ConfigError(f"{key} expects {n} values, got {arr.size}")
    return arr


def _numbered(cp, prefix: str) -> list[str]:
    pat = re.compile(rf"^{prefix}\.(\d+)$")
    found = []
    for s in cp.sections():
        m = pat.match(s)
        if m:
            found.append((int(m.group(1)), s))
        elif s.startswith(prefix):
            raise ConfigError(f"bad section name [{s}]; expected [{prefix}.N]")
    return [s for _, s in sorted(found)]


def _initial_state(cp, params: RobotParams, geom) -> RobotState:
    kw = _section(cp, "initial", _INITIAL_KEYS)
    mode = Mode(kw.get("mode", "Ground"))
    roll, pitch, yaw = (math.radians(float(kw.get(k, 0.0))) for k in ("roll_deg", "pitch_deg", "yaw_deg"))
    if "arm" in kw and "q_arm_deg" in kw:
        raise ConfigError("[initial] takes arm or q_arm_deg, not both")
    if "arm" in kw:
        q_arm = ik(_vec(kw["arm"], 3, "arm"), 0.0, geom)
    else:
        q_arm = np.radians(_vec(kw["q_arm_deg"], 3, "q_arm_deg")) if "q_arm_deg" in kw else np.zeros(3)
    if mode == Mode.GROUND:
        xy = _vec(kw["position"], 3, "position")[:2] if "position" in kw else (0.0, 0.0)
        return resting_state(params, roll, pitch, yaw, xy=xy, mode=mode, q_arm=q_arm)
    p = _vec(kw.get("position", [0.0, 0.0, 1.0]), 3, "position")
    vel = _vec(kw.get("velocity", [0.0, 0.0, 0.0]), 3, "velocity")
    state = RobotState(p=p, vel=vel, R=R_from_euler(roll, pitch, yaw), mode=mode, q_arm=q_arm)
    if kw.get("hover_rotors", True):
        state = state.with_(rotor=np.full(4, math.sqrt(params.weight / (4 * params.C_t))))
    return state


def _timeline(cp) -> tuple:
    out = []
    for name in _numbered(cp, "timeline"):
        kw = _section(cp, name, _TIMELINE_KEYS)
        if "t" not in kw:
            raise ConfigError(f"[{name}] needs t")
        out.append(TimelineEntry(
            t=float(kw["t"]),
            mode=Mode(kw["mode"]) if "mode" in kw else None,
            gamma=math.radians(kw["gamma_deg"]) if "gamma_deg" in kw else None,
            omega_wd=float(kw["omega_wd"]) if "omega_wd" in kw else None,
            position=_vec(kw["position"], 3, "position") if "position" in kw else None,
            arm=_vec(kw["arm"], 3, "arm") if "arm" in kw else None,
            wrist=math.radians(kw["wrist_deg"]) if "wrist_deg" in kw else None,
            arm_move_time=float(kw.get("arm_move_time", 1.0)),
        ))
    return tuple(out)


def _payloads(cp) -> tuple:
    out = []
    for name in _numbered(cp, "payload"):
        kw = _section(cp, name, {"t", "mass", "attach"})
        if "t" not in kw or "mass" not in kw:
            raise ConfigError(f"[{name}] needs t and mass")
        out.append(PayloadEvent(float(kw["t"]), float(kw["mass"]), bool(kw.get("attach", True))))
    return tuple(sorted(out, key=lambda e: e.t))


def _builtin(name: str, kw: dict, params: RobotParams) -> Scenario:
    seed = int(kw.get("seed", 0))
    if name == "attitude_recovery":
        sc = attitude_recovery(params, pitch_deg=float(kw.get("pitch_deg", 10.0)),
                               T_ground_frac=float(kw.get("T_ground_frac", 0.075)),
                               duration=float(kw.get("duration", 10.0)), seed=seed,
                               allocator=str(kw.get("allocator", "prioritized")),
                               hover_frac=float(kw.get("hover_frac", 0.2)))
    elif name.startswith("tracking_"):
        sc = tracking(name.split("_", 1)[1], seed=seed, params=params,
                      position_noise=float(kw.get("position_noise", 0.005)))
    else:
        raise ConfigError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTINS)}")
    if "name" in kw:
        sc = sc.with_(name=str(kw["name"]))
    return sc


def load_scenario(path, params: Optional[RobotParams] = None) -> Scenario:
    """Parse a scenario file; raises ``ConfigError`` on any schema problem."""
    params = params or RobotParams()
    cp = _read_ini(path)
    if not cp.has_section("scenario"):
        raise ConfigError(f"{path}: missing [scenario] section")
    kw = _section(cp, "scenario", _SCENARIO_KEYS)
    try:
        if "builtin" in kw:
            extra = set(cp.sections()) - {"scenario"}
            if extra:
                raise ConfigError(f"builtin scenarios only take a [scenario] section, found {sorted(extra)}")
            return _builtin(str(kw["builtin"]), kw, params)
        for sec in cp.sections():
            # numbered timeline/payload names are checked by _numbered
            if sec not in _SECTIONS and not sec.startswith(("timeline", "payload")):
                raise ConfigError(f"unknown section [{sec}]")
        if "duration" not in kw:
            raise ConfigError("[scenario] needs duration")
        seed = int(kw.get("seed", 0))
        sim = SimConfig(**{"seed": seed, **_dataclass_section(cp, "sim", SimConfig, ("arm", "terrain"))})
        dist_kw = _dataclass_section(cp, "disturbance", DisturbanceModel, ("extra",))
        if "band_hz" in dist_kw:
            dist_kw["band_hz"] = tuple(_vec(dist_kw["band_hz"], 2, "band_hz"))
        dist = DisturbanceModel(**{"seed": seed, **dist_kw})
        gains_over = _dataclass_section(cp, "gains_override", ControllerGains)
        ControllerGains(**gains_over)  # reject bad values now rather than at run time
        return Scenario(
            name=str(kw.get("name", "custom")),
            initial=_initial_state(cp, params, sim.arm),
            duration=float(kw["duration"]),
            timeline=_timeline(cp),
            disturbance=dist,
            payload_events=_payloads(cp),
            allocator=str(kw.get("allocator", "prioritized")),
            hover_frac=float(kw.get("hover_frac", 0.2)),
            sim=sim,
            control_rate=float(kw.get("control_rate", 400.0)),
            ik_rate=float(kw.get("ik_rate", 5.0)),
            log_rate=float(kw.get("log_rate", 100.0)),
            position_noise=float(kw.get("position_noise", 0.0)),
            static=bool(kw.get("static", False)),
            T_ground_frac=float(kw["T_ground_frac"]) if "T_ground_frac" in kw else None,
            gains_override=gains_over,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, IKError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
