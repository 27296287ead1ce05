import json
import subprocess
import sys

import pytest

from conftest import synthetic_feed
from stopfinder.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, atomic_write, run_cli
from stopfinder.perception import Detection, ReplayFrame, write_replay_log

SMALL_CONFIG = {
    "master_seed": 3,
    "site_models": {"City": {"gps_bias_sd_m": 3.0, "gps_noise_sd_m": 2.0, "reroute_prob": 0.3,
                             "occlusion_miss_prob": 0.2}},
    "scenarios": [{"stop_id": "A", "site": "City", "travel_heading_deg": 45.0},
                  {"stop_id": "B", "site": "City", "sign_east_m": 200.0}],
    "agents": [{"agent_id": "p1", "residual_vision": True}, {"agent_id": "p2"}],
}


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL_CONFIG))
    return p


@pytest.fixture
def feed(tmp_path):
    stops, truth = synthetic_feed()
    (tmp_path / "stops.txt").write_text(stops)
    (tmp_path / "truth.csv").write_text(truth)
    return tmp_path / "stops.txt", tmp_path / "truth.csv"


def test_unknown_subcommand_is_usage_error(capsys):
    assert run_cli(["frobnicate"]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys, config_path, tmp_path):
    assert run_cli(["simulate", "--config", str(config_path), "--out", str(tmp_path / "t.csv"),
                    "--bogus"]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_no_arguments_is_usage_error():
    assert run_cli([]) == EXIT_USAGE


@pytest.mark.parametrize("cmd", ["audit", "simulate", "replay", "report"])
def test_help_on_every_subcommand(cmd, capsys):
    assert run_cli([cmd, "--help"]) == EXIT_OK
    assert "usage:" in capsys.readouterr().out


def test_simulate_writes_trial_csv(config_path, tmp_path):
    out = tmp_path / "t.csv"
    assert run_cli(["simulate", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("trial_id,stop_id,site")
    assert len(lines) == 1 + 2 * 4


def test_simulate_byte_identical_and_seed_override(config_path, tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run_cli(["simulate", "--config", str(config_path), "--out", str(a)])
    run_cli(["simulate", "--config", str(config_path), "--out", str(b), "--workers", "2"])
    run_cli(["simulate", "--config", str(config_path), "--out", str(c), "--master-seed", "4"])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_simulate_bad_config_leaves_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL_CONFIG, "agents": []}))
    out = tmp_path / "t.csv"
    assert run_cli(["simulate", "--config", str(bad), "--out", str(out)]) == EXIT_ERROR
    assert "no agents" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == [bad]


def test_simulate_missing_config(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert run_cli(["simulate", "--config", str(missing), "--out", str(tmp_path / "t.csv")]) == EXIT_ERROR
    assert str(missing) in capsys.readouterr().err


def test_audit_summary_and_csv(feed, tmp_path, capsys):
    stops, truth = feed
    out, summary = tmp_path / "err.csv", tmp_path / "summary.json"
    code = run_cli(["audit", "--stops", str(stops), "--truth", str(truth), "--bus-length-m", "12",
                    "--out", str(out), "--summary", str(summary)])
    assert code == EXIT_OK
    doc = json.loads(summary.read_text())
    assert doc["fraction_exceeding"]["24"] == pytest.approx(40 / 174)
    assert len(out.read_text().splitlines()) == 175


def test_audit_explicit_thresholds_to_stdout(feed, capsys):
    stops, truth = feed
    assert run_cli(["audit", "--stops", str(stops), "--truth", str(truth),
                    "--thresholds", "10", "40"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert set(doc["fraction_exceeding"]) == {"10", "40"}


def test_audit_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "missing.txt"
    code = run_cli(["audit", "--stops", str(missing), "--truth", str(missing)])
    assert code == EXIT_ERROR
    assert str(missing) in capsys.readouterr().err


def test_audit_schema_error(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("stop_id,stop_name,stop_lat\n1,A,2\n")
    (tmp_path / "t.csv").write_text("stop_id,lat,lon,heading_deg\n")
    assert run_cli(["audit", "--stops", str(tmp_path / "s.txt"),
                    "--truth", str(tmp_path / "t.csv")]) == EXIT_ERROR
    assert "stop_lon" in capsys.readouterr().err


def test_audit_bad_threshold_is_usage_error(feed):
    stops, truth = feed
    assert run_cli(["audit", "--stops", str(stops), "--truth", str(truth),
                    "--thresholds", "-1"]) == EXIT_USAGE


def test_replay(tmp_path):
    w = 800.0 * 0.3048 / 1.5
    frames = [ReplayFrame(i, 0.1 * i, 0.0, 0.0, 0.0, 90.0, 0.0,
                          Detection(i, 360.0, 640.0, w, 100.0, 0.9)) for i in range(3)]
    log = tmp_path / "log.csv"
    log.write_text(write_replay_log(frames))
    gcfg = tmp_path / "g.json"
    gcfg.write_text(json.dumps({"guidance": {"k_confirm": 2}, "camera": {}, "sign": {}}))
    out = tmp_path / "timeline.csv"
    assert run_cli(["replay", "--log", str(log), "--guidance-config", str(gcfg),
                    "--out", str(out)]) == EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "frame_index,state,event_kind,level,est_distance_m"
    assert rows[1].startswith("0,SCANNING,BLIP,4")
    assert rows[2].startswith("1,LOCKED,CONTINUOUS,4")


def test_replay_bad_guidance_config(tmp_path, capsys):
    (tmp_path / "log.csv").write_text(write_replay_log([]))
    gcfg = tmp_path / "g.json"
    gcfg.write_text(json.dumps({"guidance": {"thresholds": [1, 2, 3]}}))
    out = tmp_path / "o.csv"
    assert run_cli(["replay", "--log", str(tmp_path / "log.csv"), "--guidance-config", str(gcfg),
                    "--out", str(out)]) == EXIT_ERROR
    assert not out.exists()


def test_report_formats(config_path, tmp_path, capsys):
    trials = tmp_path / "t.csv"
    run_cli(["simulate", "--config", str(config_path), "--out", str(trials)])
    capsys.readouterr()
    for fmt in ("csv", "json", "text"):
        out = tmp_path / f"r.{fmt}"
        assert run_cli(["report", "--trials", str(trials), "--format", fmt, "--resamples", "200",
                        "--out", str(out)]) == EXIT_OK
        assert out.stat().st_size > 0
    assert json.loads((tmp_path / "r.json").read_text())["n_trials"] == 4


def test_report_bad_table(tmp_path, capsys):
    bad = tmp_path / "t.csv"
    bad.write_text("a,b\n1,2\n")
    assert run_cli(["report", "--trials", str(bad)]) == EXIT_ERROR
    assert "missing column" in capsys.readouterr().err


def test_atomic_write_failure_keeps_old_file(tmp_path):
    target = tmp_path / "out.txt"
    target.write_text("old")
    # writing a non-string fails midway, after the temp file exists
    with pytest.raises(TypeError):
        atomic_write(target, 12345)
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stopfinder.cli", "frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage:" in proc.stderr
