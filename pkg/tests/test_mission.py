import math

import numpy as np
import pytest

from aircrab.core import ConfigError
from aircrab.mission import PHASES, MissionConfig, load_mission_config, mission_pick_place


@pytest.fixture(scope="module")
def dry_run():
    return mission_pick_place(MissionConfig(payload_mass=0.0))


@pytest.fixture
def loaded_run(default_mission):
    return default_mission


def test_dry_run_completes(dry_run):
    assert dry_run.success, dry_run.summary()
    assert [p[0] for p in dry_run.phases] == list(PHASES)
    assert dry_run.placement_error < 0.02
    assert not any(e[1].startswith("payload") for e in dry_run.events)


def test_payload_pickup_recovers(loaded_run):
    assert loaded_run.success, loaded_run.summary()
    assert loaded_run.pickup_peak_tilt_deg > loaded_run.pickup_tilt_after_1s_deg
    assert loaded_run.pickup_tilt_after_1s_deg < 1.0
    kinds = [e[1] for e in loaded_run.events]
    assert "payload_attach" in kinds and "payload_detach" in kinds
    assert kinds[-1] == "mission_success"


def test_flies_and_lands_on_table(loaded_run):
    modes = loaded_run.run.column("mode")
    assert "Aerial" in set(modes) and modes[-1] == "Ground"
    pz = loaded_run.run.column("pz")
    assert pz[-1] == pytest.approx(0.3 + 0.2, abs=0.01)
    assert loaded_run.constraint_violations == []


def test_phase_timeout_names_the_phase():
    res = mission_pick_place(MissionConfig(phase_timeout=0.5))
    assert not res.success
    assert res.failed_phase == "approach"
    assert "approach" in res.run.failure
    assert math.isnan(res.placement_error)
    assert res.events[-1][1] == "mission_failure"


def test_summary_fields(dry_run):
    s = dry_run.summary()
    assert s["success"] is True and s["failed_phase"] == ""
    assert s["duration_s"] > 10


class TestConfig:
    def test_shipped_file(self):
        from pathlib import Path
        cfg = load_mission_config(Path(__file__).resolve().parents[1] / "configs" / "mission.ini")
        assert np.array_equal(cfg.place, MissionConfig().place)
        assert cfg.table == MissionConfig().table and cfg.seed == 0

    def test_overrides(self, tmp_path):
        p = tmp_path / "m.ini"
        p.write_text("[mission]\npayload_mass = 0.2\nwaypoint = 1.5, 0.4\nseed = 7\n")
        cfg = load_mission_config(p)
        assert cfg.payload_mass == 0.2 and cfg.seed == 7
        assert np.array_equal(cfg.waypoint, [1.5, 0.4])

    @pytest.mark.parametrize("text", [
        "[mission]\nspeed = 3\n",
        "[mission]\ntable = 1, 2, 3\n",
        "[mission]\npayload_mass = -1\n",
        "[mission]\ntolerance = 0\n",
        "[other]\nseed = 1\n",
    ])
    def test_rejects(self, tmp_path, text):
        p = tmp_path / "m.ini"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_mission_config(p)
