"""Online tracker: windowing, commit latency, spawn/terminate, determinism."""

import numpy as np
import pytest

from mcftrack.io import Scenario, synth_generate
from mcftrack.tracker import (
    CommitRecord,
    ConfigError,
    OnlineTracker,
    TrackerConfig,
    checkpoint,
    run,
)


def cfg(**overrides) -> TrackerConfig:
    base = dict(
        window=3,
        d0=5,
        bypass_cost_tracked=12.0,
        bypass_cost_dummy=19.5,
    )
    base.update(overrides)
    return TrackerConfig(**base)


def noiseless(targets=1, frames=10, **kw) -> Scenario:
    base = dict(
        targets=targets,
        frames=frames,
        miss_prob=0.0,
        clutter_rate=0.0,
        feature_noise=0.0,
        pos_noise=0.0,
        target_score_std=0.0,
        arena_w=240.0,
    )
    base.update(kw)
    return Scenario(**base)


def test_single_target_noiseless_window3():
    dets, gt = synth_generate(noiseless(frames=10), seed=0)
    tracks, diags = run(dets, cfg())
    assert len(tracks) == 1
    (tid, boxes), = tracks.items()
    assert sorted(boxes) == list(range(1, 11))  # zero misses
    gt_boxes = gt[1]
    for f, box in boxes.items():
        assert box == pytest.approx(gt_boxes[f], abs=1e-9)
    assert len(diags) == 8  # one solve per step from frame 3 to 10


def test_output_lags_by_window_minus_one():
    dets, _ = synth_generate(noiseless(frames=10), seed=0)
    tracker = OnlineTracker(cfg())
    for frame in range(1, 11):
        records = tracker.step(frame, dets.get(frame, []))
        if frame < 3:
            assert records == []
        else:
            assert {r.frame for r in records} == {frame - 2}
    tail = tracker.flush()
    assert {r.frame for r in tail} == {9, 10}


def test_window_one_commits_immediately():
    dets, _ = synth_generate(noiseless(frames=8), seed=0)
    tracker = OnlineTracker(cfg(window=1))
    for frame in range(1, 9):
        records = tracker.step(frame, dets.get(frame, []))
        assert all(r.frame == frame for r in records)
        if frame >= 1:
            assert len(records) == 1  # target committed with zero latency
    assert tracker.flush() == []
    assert len(tracker.tracks()) == 1


def test_empty_stream():
    tracks, diags = run({}, cfg())
    assert tracks == {}
    assert diags == []


def test_all_empty_frames():
    tracker = OnlineTracker(cfg())
    for frame in range(1, 7):
        assert tracker.step(frame, []) == []
    assert tracker.flush() == []
    assert tracker.tracks() == {}


def test_deterministic_end_to_end():
    dets, _ = synth_generate(noiseless(targets=2, frames=12, lane_gap=150.0), seed=3)
    a_tracks, a_diags = run(dets, cfg())
    b_tracks, b_diags = run(dets, cfg())
    assert a_tracks == b_tracks
    key = lambda d: (d.window_t, d.iterations, d.v_lp, d.v_int, d.epsilon)
    assert [key(d) for d in a_diags] == [key(d) for d in b_diags]


def test_no_detection_committed_twice():
    dets, _ = synth_generate(noiseless(targets=2, frames=12, lane_gap=150.0), seed=3)
    tracker = OnlineTracker(cfg())
    records: list[CommitRecord] = []
    for frame in range(1, 13):
        records += tracker.step(frame, dets.get(frame, []))
    records += tracker.flush()
    keyed = [(r.frame, r.track_id) for r in records]
    assert len(keyed) == len(set(keyed))
    boxes = [(r.frame, r.box) for r in records]
    assert len(boxes) == len(set(boxes))
    assert len(tracker.tracks()) == 2


def test_prefix_outputs_are_immutable():
    dets, _ = synth_generate(noiseless(frames=10), seed=1)
    full = OnlineTracker(cfg())
    full_records: list[CommitRecord] = []
    for frame in range(1, 11):
        full_records += full.step(frame, dets.get(frame, []))
    prefix = OnlineTracker(cfg())
    prefix_records: list[CommitRecord] = []
    for frame in range(1, 8):
        prefix_records += prefix.step(frame, dets.get(frame, []))
    cutoff = max(r.frame for r in prefix_records)
    assert [r for r in full_records if r.frame <= cutoff] == prefix_records


def test_checkpoint_is_independent():
    dets, _ = synth_generate(noiseless(frames=10), seed=1)
    live = OnlineTracker(cfg())
    for frame in range(1, 6):
        live.step(frame, dets.get(frame, []))
    snap = checkpoint(live)
    rest_live = []
    for frame in range(6, 11):
        rest_live += live.step(frame, dets.get(frame, []))
    rest_snap = []
    for frame in range(6, 11):
        rest_snap += snap.step(frame, dets.get(frame, []))
    assert rest_live == rest_snap


def test_bridges_single_missed_frame():
    dets, _ = synth_generate(noiseless(frames=10), seed=0)
    dets[5] = []
    tracks, _ = run(dets, cfg())
    assert len(tracks) == 1
    (_, boxes), = tracks.items()
    assert sorted(boxes) == [1, 2, 3, 4, 6, 7, 8, 9, 10]


def test_terminates_after_miss_limit():
    dets, _ = synth_generate(noiseless(frames=5), seed=0)
    tracker = OnlineTracker(cfg())
    for frame in range(1, 13):
        tracker.step(frame, dets.get(frame, []))
    tracker.flush()
    assert len(tracker.trajectories) == 1
    traj = tracker.trajectories[0]
    assert not traj.active
    assert max(traj.frames) == 5


def test_flush_covers_streams_shorter_than_window():
    dets, _ = synth_generate(noiseless(frames=2, arena_w=120.0), seed=0)
    tracker = OnlineTracker(cfg(window=5))
    assert tracker.step(1, dets.get(1, [])) == []
    assert tracker.step(2, dets.get(2, [])) == []
    records = tracker.flush()
    assert {r.frame for r in records} == {1, 2}
    assert len(tracker.tracks()) == 1
    # flush is idempotent and terminal
    assert tracker.flush() == []
    with pytest.raises(RuntimeError):
        tracker.step(3, [])


def test_frame_order_enforced():
    tracker = OnlineTracker(cfg())
    tracker.step(1, [])
    with pytest.raises(ValueError):
        tracker.step(3, [])
    dets, _ = synth_generate(noiseless(frames=4), seed=0)
    with pytest.raises(ValueError):
        tracker.step(2, dets[3])  # detection frame disagrees with step frame


def test_config_from_text():
    conf = TrackerConfig.from_text("window=5\nd0=7\nbypass_cost_tracked=9.4\n")
    assert conf.window == 5
    assert conf.d0 == 7
    assert conf.bypass_cost_tracked == pytest.approx(9.4)
    assert conf.miss_limit == 5  # defaults to the window
    with pytest.raises(ConfigError):
        TrackerConfig.from_text("no_such_key=1\n")
    with pytest.raises(ConfigError):
        TrackerConfig.from_text("window=abc\n")
    with pytest.raises(ConfigError):
        TrackerConfig.from_text("window=0\n")


def test_diagnostics_lines_are_well_formed():
    dets, _ = synth_generate(noiseless(frames=8), seed=0)
    _, diags = run(dets, cfg())
    assert diags
    for d in diags:
        parts = d.format_line().split(",")
        assert len(parts) == 6
        int(parts[0]), int(parts[1])
        assert d.epsilon >= -1e-9
        assert d.v_lp <= d.v_int + 1e-9
