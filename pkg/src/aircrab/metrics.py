"""Evaluation quantities computed from telemetry series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RobotParams


@dataclass(frozen=True)
class SeriesStats:
    rmse: float
    max_abs_error: float
    settling_time_s: Optional[float]
    band_violations: int
    energy_J: float = 0.0


def rmse(series, reference=0.0) -> float:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("rmse of an empty series")
    return float(np.sqrt(np.mean((x - reference) ** 2)))


def settling_time(times, series, reference: float, band: float) -> Optional[float]:
    """Earliest time after which the series never leaves ``reference +/- band``."""
    if band <= 0:
        raise ValueError("band must be positive")
    t = np.asarray(times, dtype=float)
    x = np.asarray(series, dtype=float)
    outside = np.nonzero(np.abs(x - reference) > band)[0]
    if outside.size == 0:
        return float(t[0]) if t.size else None
    last = outside[-1]
    if last == x.size - 1:
        return None
    return float(t[last + 1])


def band_violations(series, reference: float, band: float) -> int:
    """Number of exits from the band (entries into the outside region)."""
    out = np.abs(np.asarray(series, dtype=float) - reference) > band
    return int(np.count_nonzero(out[1:] & ~out[:-1]) + (1 if out.size and out[0] else 0))


def instantaneous_power(speeds, params: RobotParams) -> np.ndarray:
    """Propeller power ``c_p * sum(v_i**3)`` per sample."""
    v = np.atleast_2d(np.asarray(speeds, dtype=float))
    return params.c_p * np.sum(v**3, axis=1)


def power_energy(times, speeds, params: RobotParams) -> tuple[float, float]:
    """Mean power (W) and trapezoidal energy (J) of a rotor-speed history."""
    t = np.asarray(times, dtype=float)
    P = instantaneous_power(speeds, params)
    if t.size < 2:
        return (float(P.mean()) if P.size else 0.0), 0.0
    energy = float(np.sum(0.5 * (P[1:] + P[:-1]) * np.diff(t)))
    return energy / float(t[-1] - t[0]), energy


def series_stats(times, series, reference: float = 0.0, band: Optional[float] = None,
                 energy_J: float = 0.0) -> SeriesStats:
    x = np.asarray(series, dtype=float)
    err = np.abs(x - reference)
    return SeriesStats(
        rmse=rmse(x, reference),
        max_abs_error=float(err.max()),
        settling_time_s=settling_time(times, x, reference, band) if band else None,
        band_violations=band_violations(x, reference, band) if band else 0,
        energy_J=energy_J,
    )
