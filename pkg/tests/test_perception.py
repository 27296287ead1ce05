import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopfinder.geo import LocalVec, Pose2D, bearing_of, heading_unit, wrap_heading
from stopfinder.perception import (REPLAY_COLUMNS, CameraIntrinsics, ConfirmKind, Detection,
                                   InvalidDetectionError, PerceptionNoise, ReplayFrame, SignSpec,
                                   StreamError, confirm_stream, estimate_distance, incidence_deg,
                                   project_sign, read_replay_log, synth_project, write_replay_log)

CAM = CameraIntrinsics()
SIGN = SignSpec()
CLEAN = PerceptionNoise()


def det(w, cx=360.0, cy=640.0, h=20.0, idx=0, conf=0.9):
    return Detection(idx, cx, cy, w, h, conf)


def test_pinhole_example():
    # 800 px * 0.3048 m / 24.384 px = 10 m
    r = estimate_distance(det(24.384), CAM, SIGN)
    assert r.est_distance_m == pytest.approx(10.0, rel=1e-12)
    assert r.bearing_deg == 0.0


def test_bearing_example():
    r = estimate_distance(det(20.0, cx=360.0 + 80.0), CAM, SIGN)
    assert r.bearing_deg == pytest.approx(math.degrees(math.atan(0.1)), rel=1e-12)


@pytest.mark.parametrize("w", [0.0, -3.0, math.nan, math.inf])
def test_degenerate_width_rejected(w):
    with pytest.raises(InvalidDetectionError):
        estimate_distance(det(w), CAM, SIGN)


def test_box_outside_image_rejected():
    with pytest.raises(InvalidDetectionError):
        estimate_distance(det(100.0, cx=700.0), CAM, SIGN)


@given(st.floats(1.0, 500.0), st.floats(1.0, 500.0))
def test_distance_inverse_in_width(w1, w2):
    d1 = estimate_distance(det(w1, h=0.0), CAM, SIGN).est_distance_m
    d2 = estimate_distance(det(w2, h=0.0), CAM, SIGN).est_distance_m
    assert d1 * w1 == pytest.approx(d2 * w2, rel=1e-12)


def test_hfov():
    assert CAM.hfov_deg == pytest.approx(2 * math.degrees(math.atan(360 / 800)))


def test_incidence_head_on_and_side():
    sign = LocalVec(0.0, 0.0)
    assert incidence_deg(sign, 180.0, LocalVec(0.0, -5.0)) == pytest.approx(0.0, abs=1e-12)
    assert incidence_deg(sign, 180.0, LocalVec(5.0, 0.0)) == pytest.approx(90.0)


def facing_pose(dist, bearing, heading=0.0):
    """Agent at origin looking along ``heading``; sign at ``dist`` and ``bearing`` off-axis, facing back."""
    agent = Pose2D(LocalVec(0.0, 0.0), heading)
    sign = heading_unit(wrap_heading(heading + bearing)).scaled(dist)
    return agent, sign, bearing_of(agent.position - sign)


def test_project_sign_round_trip_example():
    agent, sign_pos, facing = facing_pose(12.0, 10.0, heading=33.0)
    d = project_sign(agent, 0.0, sign_pos, facing, CAM, SIGN, CLEAN)
    r = estimate_distance(d, CAM, SIGN)
    assert r.est_distance_m == pytest.approx(12.0, rel=1e-12)
    assert r.bearing_deg == pytest.approx(10.0, rel=1e-12)


def test_project_sign_none_cases():
    agent, sign_pos, facing = facing_pose(12.0, 0.0)
    assert project_sign(agent, 0.0, sign_pos, facing, CAM, SIGN, CLEAN) is not None
    # behind the camera
    assert project_sign(agent, 180.0, sign_pos, facing, CAM, SIGN, CLEAN) is None
    # beyond max range
    far = heading_unit(0.0).scaled(80.0)
    assert project_sign(agent, 0.0, far, 180.0, CAM, SIGN, CLEAN) is None
    # seen edge-on past the slant cutoff
    assert project_sign(agent, 0.0, sign_pos, wrap_heading(facing + 70.0), CAM, SIGN, CLEAN) is None
    # outside the horizontal field of view
    agent2, sign2, facing2 = facing_pose(12.0, 30.0)
    assert project_sign(agent2, 0.0, sign2, facing2, CAM, SIGN, CLEAN) is None


def test_slant_shrinks_width():
    agent, sign_pos, facing = facing_pose(10.0, 0.0)
    head_on = project_sign(agent, 0.0, sign_pos, facing, CAM, SIGN, CLEAN)
    slanted = project_sign(agent, 0.0, sign_pos, wrap_heading(facing + 50.0), CAM, SIGN, CLEAN)
    assert slanted.bbox_width_px == pytest.approx(head_on.bbox_width_px * math.cos(math.radians(50.0)))


def test_camera_yaw_is_relative_to_heading():
    agent, sign_pos, facing = facing_pose(10.0, 40.0, heading=90.0)
    assert project_sign(agent, 0.0, sign_pos, facing, CAM, SIGN, CLEAN) is None
    d = project_sign(agent, 40.0, sign_pos, facing, CAM, SIGN, CLEAN)
    assert estimate_distance(d, CAM, SIGN).bearing_deg == pytest.approx(0.0, abs=1e-9)


def test_synth_project_draws_fixed_count():
    agent, sign_pos, facing = facing_pose(10.0, 0.0)
    noisy = PerceptionNoise(miss_prob=0.3, px_jitter_sd=2.0)
    for pose_yaw in (0.0, 180.0):
        rng = np.random.default_rng(5)
        synth_project(agent, pose_yaw, sign_pos, facing, CAM, SIGN, noisy, rng)
        ref = np.random.default_rng(5)
        ref.random(2)
        ref.standard_normal()
        assert rng.random() == ref.random()


def test_synth_project_miss_prob_one():
    agent, sign_pos, facing = facing_pose(10.0, 0.0)
    rng = np.random.default_rng(0)
    noise = PerceptionNoise(miss_prob=1.0)
    assert all(synth_project(agent, 0.0, sign_pos, facing, CAM, SIGN, noise, rng) is None
               for _ in range(50))


def test_synth_project_miss_rate():
    agent, sign_pos, facing = facing_pose(10.0, 0.0)
    rng = np.random.default_rng(1)
    noise = PerceptionNoise(miss_prob=0.25)
    n = 4000
    hits = sum(synth_project(agent, 0.0, sign_pos, facing, CAM, SIGN, noise, rng) is not None
               for _ in range(n))
    # binomial 3-sigma band around 0.75
    assert abs(hits / n - 0.75) < 3 * math.sqrt(0.75 * 0.25 / n)


def test_false_positive_only_when_nothing_seen():
    agent = Pose2D(LocalVec(0.0, 0.0), 0.0)
    rng = np.random.default_rng(2)
    noise = PerceptionNoise(false_positive_prob=1.0)
    d = synth_project(agent, 0.0, LocalVec(0.0, -10.0), 0.0, CAM, SIGN, noise, rng)
    assert d is not None and d.confidence == 0.5
    check = estimate_distance(d, CAM, SIGN)
    assert check.est_distance_m > 0


@settings(max_examples=200)
@given(st.floats(1.5, 60.0), st.floats(-15.0, 15.0), st.floats(0.0, 359.9))
def test_round_trip_property(dist, bearing, heading):
    agent, sign_pos, facing = facing_pose(dist, bearing, heading)
    d = project_sign(agent, 0.0, sign_pos, facing, CAM, SIGN, CLEAN)
    assert d is not None
    r = estimate_distance(d, CAM, SIGN)
    assert r.est_distance_m == pytest.approx(dist, rel=1e-9)
    assert r.bearing_deg == pytest.approx(bearing, rel=1e-9, abs=1e-9)


# confirmation ---------------------------------------------------------------

def oracle_events(hits, k):
    """Run-length oracle: scan maximal runs of hits."""
    events = []
    i = 0
    n = len(hits)
    while i < n:
        if not hits[i]:
            i += 1
            continue
        j = i
        while j < n and hits[j]:
            j += 1
        if j - i >= k:
            events.append((ConfirmKind.CONFIRMED, i + k - 1))
            if j < n:
                events.append((ConfirmKind.LOST, j))
        i = j
    return events


def frames_from(hits):
    return [(i, det(20.0, idx=i) if h else None) for i, h in enumerate(hits)]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_confirm_stream_brute_force(k):
    for n in range(0, 11):
        for mask in range(1 << n):
            hits = [(mask >> i) & 1 == 1 for i in range(n)]
            got = [(e.kind, e.frame_index) for e in confirm_stream(frames_from(hits), k)]
            assert got == oracle_events(hits, k), hits


def test_confirm_stream_example():
    hits = [True, True, True, False, True]
    ev = list(confirm_stream(frames_from(hits), 3))
    assert [(e.kind, e.frame_index) for e in ev] == [(ConfirmKind.CONFIRMED, 2), (ConfirmKind.LOST, 3)]


def test_confirm_stream_rejects_non_increasing():
    with pytest.raises(StreamError):
        list(confirm_stream([(3, None), (3, None)], 2))


def test_confirm_stream_rejects_bad_k():
    with pytest.raises(ValueError):
        list(confirm_stream([], 0))


# replay log -------------------------------------------------------------------

def sample_frames():
    return [
        ReplayFrame(0, 0.0, 1.5, -30.0, 0.0, 88.0, 5.0, None),
        ReplayFrame(1, 0.1, 1.5, -29.9, 0.0, 90.0, 4.0, Detection(1, 360.25, 600.0, 8.5, 12.0, 0.54)),
        ReplayFrame(3, 0.3, 1.5, -29.7, 359.5, 40.0, -2.0, None),
    ]


def test_replay_log_header():
    assert write_replay_log([]).splitlines()[0] == ",".join(REPLAY_COLUMNS)


def test_replay_log_round_trip():
    frames = sample_frames()
    assert read_replay_log(write_replay_log(frames)) == frames


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(0, 359.9), st.booleans(),
                          st.floats(1.0, 300.0)), max_size=10))
def test_replay_log_round_trip_property(rows):
    frames = [ReplayFrame(i, i * 0.1, x, -x, h, 90.0, 0.0,
                          Detection(i, 360.0, 640.0, w, w, 0.7) if hit else None)
              for i, (x, h, hit, w) in enumerate(rows)]
    assert read_replay_log(write_replay_log(frames)) == frames


def test_replay_log_partial_bbox_rejected():
    text = write_replay_log(sample_frames()).splitlines()
    cells = text[2].split(",")
    cells[-2] = ""
    text[2] = ",".join(cells)
    with pytest.raises(StreamError, match="line 3"):
        read_replay_log("\n".join(text) + "\n")


def test_replay_log_missing_column():
    with pytest.raises(StreamError, match="confidence"):
        read_replay_log(",".join(REPLAY_COLUMNS[:-1]) + "\n")


def test_replay_log_non_increasing_frames():
    frames = sample_frames()
    text = write_replay_log([frames[1], frames[0]])
    with pytest.raises(StreamError):
        read_replay_log(text)
