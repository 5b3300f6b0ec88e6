import csv
import io

import pytest

from aircrab.cli import ALLOCATE_COLUMNS, main, parse_range
from aircrab.core import ConfigError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture
def short_recovery(tmp_path):
    return write(tmp_path, "rec.ini", "[scenario]\nbuiltin = attitude_recovery\nduration = 0.4\n")


class TestParseRange:
    def test_colon_range_inclusive(self):
        key, vals = parse_range("T_ground_frac=0.025:0.15:0.025")
        assert key == "T_ground_frac"
        assert vals == [0.025, 0.05, 0.075, 0.1, 0.125, 0.15]

    def test_list(self):
        assert parse_range("mu = 0.5,0.8") == ("mu", [0.5, 0.8])

    @pytest.mark.parametrize("bad", ["T_ground_frac", "x=1:0:0.1", "x=0:1:0", "x=", "x=a,b"])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_range(bad)


class TestAllocate:
    def test_row(self, capsys):
        assert main(["allocate", "--input", "20,8,0,0", "--header"]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert tuple(rows[0]) == ALLOCATE_COLUMNS
        row = dict(zip(rows[0], rows[1]))
        assert float(row["alpha"]) == pytest.approx(0.513, abs=5e-4)
        assert row["saturated_tilt"] == "1"
        assert all(100 - 1e-9 <= float(row[f"v{i}"]) <= 1000 + 1e-9 for i in range(1, 5))

    def test_modes(self, capsys):
        assert main(["allocate", "--input", "26,0,0,0", "--mode", "aerial"]) == 0
        row = capsys.readouterr().out.strip().split(",")
        assert float(row[6]) == pytest.approx(26.0)
        assert main(["allocate", "--input", "0,0,0,0", "--mode", "baseline", "--hover-throttle", "0.5"]) == 0
        row = capsys.readouterr().out.strip().split(",")
        assert float(row[0]) == pytest.approx(1000 / 2**0.5)

    def test_params_file(self, tmp_path, capsys):
        p = write(tmp_path, "p.ini", "[params]\nv_min = 0\nT_ground_frac = 0\n")
        assert main(["allocate", "--input", "0,0,0,0", "--params", p]) == 0
        assert capsys.readouterr().out.startswith("0.0,0.0,0.0,0.0,")

    @pytest.mark.parametrize("argv", [
        ["allocate", "--input", "1,2,3"],
        ["allocate", "--input", "a,b,c,d"],
        ["allocate", "--input", "1,0,0,0", "--mode", "baseline", "--hover-throttle", "1.5"],
        ["allocate", "--input", "1,0,0,0", "--params", "/nonexistent/p.ini"],
        ["allocate"],
        ["frobnicate"],
    ])
    def test_usage_errors_exit_1(self, argv, capsys):
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
        assert code == 1


class TestSimulate:
    def test_stdout_csv(self, short_recovery, capsys):
        assert main(["simulate", "--scenario", short_recovery]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("t,px,py,pz") and len(lines) == 1 + 1 + 40

    def test_file_and_figures(self, short_recovery, tmp_path):
        out = tmp_path / "o" / "run.csv"
        figs = tmp_path / "figs"
        assert main(["simulate", "--scenario", short_recovery, "--out", str(out), "--figures", str(figs)]) == 0
        assert out.read_text().startswith("t,")
        assert (figs / "attitude_recovery.png").stat().st_size > 1000

    def test_builtin_name(self, capsys, tmp_path):
        assert main(["simulate", "--scenario", "tracking_static", "--out", str(tmp_path / "t.csv")]) == 0

    def test_divergence_exit_2(self, tmp_path):
        sc = write(tmp_path, "bad.ini",
                   "[scenario]\nduration = 0.5\n[initial]\nmode = Aerial\nvelocity = nan, 0, 0\n")
        assert main(["simulate", "--scenario", sc, "--out", str(tmp_path / "x.csv")]) == 2

    def test_bad_scenario_exit_1(self, tmp_path):
        sc = write(tmp_path, "bad.ini", "[scenario]\nduration = 1\nfoo = 1\n")
        assert main(["simulate", "--scenario", sc]) == 1
        assert main(["simulate", "--scenario", str(tmp_path / "missing.ini")]) == 1


class TestSweep:
    def test_outputs(self, short_recovery, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--scenario", short_recovery, "--vary", "T_ground_frac=0.05:0.1:0.05",
                     "--out", str(out), "--jobs", "2", "--figures", str(out)])
        assert code == 0
        rows = list(csv.DictReader(open(out / "summary.csv")))
        assert [float(r["T_ground_frac"]) for r in rows] == [0.05, 0.1]
        assert (out / "attitude_recovery_T_ground_frac_0.05.csv").exists()
        assert (out / "sweep_T_ground_frac.png").exists()

    def test_parallel_matches_serial(self, short_recovery, tmp_path):
        for jobs, d in ((1, "a"), (3, "b")):
            main(["sweep", "--scenario", short_recovery, "--vary", "mu=0.4,0.6,0.8",
                  "--out", str(tmp_path / d), "--jobs", str(jobs)])
        assert (tmp_path / "a" / "summary.csv").read_text() == (tmp_path / "b" / "summary.csv").read_text()

    def test_bad_key_exit_1(self, short_recovery, tmp_path):
        assert main(["sweep", "--scenario", short_recovery, "--vary", "nope=1,2",
                     "--out", str(tmp_path)]) == 1


class TestCompare:
    def test_rows(self, short_recovery, tmp_path, capsys):
        figs = tmp_path / "f"
        assert main(["compare", "--scenario", short_recovery, "--hover", "0.2,0.3", "--figures", str(figs)]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 3
        assert (figs / "compare.png").exists()

    def test_bad_hover(self, short_recovery):
        assert main(["compare", "--scenario", short_recovery, "--hover", "0,0.3"]) == 1


class TestMission:
    def test_timeout_exit_2(self, tmp_path):
        cfg = write(tmp_path, "m.ini", "[mission]\nphase_timeout = 0.3\n")
        out = tmp_path / "m"
        assert main(["mission", "--config", cfg, "--out", str(out), "--figures", str(out)]) == 2
        events = (out / "events.csv").read_text()
        assert "approach" in events and "mission_failure" in events
        summary = list(csv.DictReader(open(out / "summary.csv")))[0]
        assert summary["failed_phase"] == "approach"
        assert (out / "mission.png").exists()
        assert (out / "telemetry.csv").read_text().startswith("t,")

    def test_bad_config_exit_1(self, tmp_path):
        cfg = write(tmp_path, "m.ini", "[mission]\nflavour = 2\n")
        assert main(["mission", "--config", cfg, "--out", str(tmp_path)]) == 1
