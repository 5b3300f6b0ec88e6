"""Figure rendering for run, sweep, comparison and mission outputs.

Figures are written to files with the non-interactive Agg backend; nothing
is shown on screen.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def run_figure(result, path, band_deg: float = 3.0) -> Path:
    """Attitude, power and arm panels for one telemetry run."""
    t = result.column("t")
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    ax = axes[0]
    ax.plot(t, np.degrees(result.column("pitch")), label="pitch")
    ax.plot(t, np.degrees(result.column("roll")), label="roll", alpha=0.7)
    ax.axhspan(-band_deg, band_deg, color="0.9", zorder=0)
    ax.set_ylabel("angle [deg]")
    ax.legend(loc="upper right")
    axes[1].plot(t, result.column("power_W"))
    axes[1].set_ylabel("rotor power [W]")
    for c in ("ee_x", "ee_y", "ee_z"):
        axes[2].plot(t, result.column(c), label=c)
    axes[2].set_ylabel("end effector [m]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(loc="upper right")
    axes[0].set_title(result.scenario)
    return _save(fig, path)


def sweep_figure(rows: list[dict], key: str, path) -> Path:
    x = [r[key] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(x, [r["pitch_rmse_deg"] for r in rows], "o-", color="tab:blue")
    ax1.set_xlabel(key)
    ax1.set_ylabel("pitch RMSE [deg]", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(x, [r["mean_power_W"] for r in rows], "s--", color="tab:red")
    ax2.set_ylabel("mean power [W]", color="tab:red")
    return _save(fig, path)


def compare_figure(rows: list[dict], path) -> Path:
    labels = ["prioritized" if r["allocator"] == "prioritized" else f"base {r['hover_frac']}"
              for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    colors = ["tab:green" if r["settling_time_s"] is not None else "tab:gray" for r in rows]
    axes[0].bar(labels, [r["pitch_rmse_deg"] for r in rows], color=colors)
    axes[0].set_ylabel("pitch RMSE [deg]")
    axes[1].bar(labels, [r["mean_power_W"] for r in rows], color=colors)
    axes[1].set_ylabel("mean power [W]")
    for ax in axes:
        ax.tick_params(axis="x", rotation=45)
    axes[0].set_title("grey: never settled into the band")
    return _save(fig, path)


def mission_figure(mission, path) -> Path:
    run = mission.run
    t = run.column("t")
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for c in ("px", "py", "pz"):
        axes[0].plot(t, run.column(c), label=c)
    for name, t0, _ in mission.phases:
        axes[0].axvline(t0, color="0.8", lw=0.8)
        axes[0].text(t0, axes[0].get_ylim()[1], name, rotation=90, fontsize=6, va="top")
    axes[0].set_ylabel("position [m]")
    axes[0].legend(loc="center right")
    tilt = np.degrees(np.maximum(np.abs(run.column("roll")), np.abs(run.column("pitch"))))
    axes[1].plot(t, tilt)
    axes[1].set_ylabel("tilt [deg]")
    axes[1].set_xlabel("time [s]")
    err = mission.placement_error
    axes[0].set_title("placement error " + ("n/a" if math.isnan(err) else f"{100 * err:.2f} cm"))
    return _save(fig, path)
