import numpy as np
import pytest

from hrcplan.errors import (DomainError, InsufficientLength, UnreachableWaypoint)
from hrcplan.human_synth import (MotionScript, build_dataset, cut_windows,
                                 default_scripts, load_windows_jsonl,
                                 min_jerk_profile, save_windows_jsonl,
                                 synth_trajectory)


def test_min_jerk_boundaries_and_midpoint():
    assert min_jerk_profile(0.0) == 0.0
    assert min_jerk_profile(1.0) == pytest.approx(1.0, abs=1e-15)
    assert min_jerk_profile(0.5) == pytest.approx(0.5, abs=1e-15)


def test_min_jerk_zero_endpoint_velocity():
    h = 1e-6
    d0 = (min_jerk_profile(h) - min_jerk_profile(0.0)) / h
    d1 = (min_jerk_profile(1.0) - min_jerk_profile(1.0 - h)) / h
    assert abs(d0) < 1e-5
    assert abs(d1) < 1e-5


def test_min_jerk_domain_error():
    with pytest.raises(DomainError):
        min_jerk_profile(-0.1)
    with pytest.raises(DomainError):
        min_jerk_profile(1.1)


def test_zero_noise_hits_waypoints(p_h):
    script = default_scripts(p_h)[0]
    traj = synth_trajectory(script, p_h, noise=(0.0, (1.0, 1.0)), seed=0)
    first = script.waypoints[0][0]
    last = script.waypoints[-1][0]
    assert np.linalg.norm(traj.joints[0, 2] - first) < 1e-9
    assert np.linalg.norm(traj.joints[-1, 2] - last) < 1e-9


def test_unreachable_waypoint_rejected(p_h):
    target = p_h.shoulder_anchor + np.array([1.2, 0.0, 0.0])
    script = MotionScript(waypoints=[(p_h.shoulder_anchor + [0.0, -0.3, -0.2], 0.2),
                                     (target, 0.2)], label="X")
    with pytest.raises(UnreachableWaypoint):
        synth_trajectory(script, p_h, seed=0)


def test_seed_determinism_and_variation(p_h):
    script = default_scripts(p_h)[0]
    a = synth_trajectory(script, p_h, seed=42)
    b = synth_trajectory(script, p_h, seed=42)
    c = synth_trajectory(script, p_h, seed=43)
    assert np.array_equal(a.joints, b.joints)
    n = min(len(a), len(c))
    assert np.max(np.linalg.norm(a.joints[:n, 2] - c.joints[:n, 2], axis=1)) > 0.0


def test_frames_respect_bone_lengths(p_h):
    traj = synth_trajectory(default_scripts(p_h)[1], p_h, seed=7)
    l1 = np.linalg.norm(traj.joints[:, 1] - traj.joints[:, 0], axis=1)
    l2 = np.linalg.norm(traj.joints[:, 2] - traj.joints[:, 1], axis=1)
    assert np.max(np.abs(l1 - p_h.upper_arm_length)) < 1e-9
    assert np.max(np.abs(l2 - p_h.forearm_length)) < 1e-9
    norms = np.linalg.norm(traj.bones.reshape(-1, 2, 3), axis=2)
    assert np.max(np.abs(norms - 1.0)) < 1e-12


def test_per_frame_displacement_bound(p_h):
    # under default speed scales the wrist moves at most reach/(2*rate) per frame
    bound = p_h.reach / (2 * 25.0)
    for seed in range(10):
        traj = synth_trajectory(default_scripts(p_h)[0], p_h, seed=seed)
        disp = np.linalg.norm(np.diff(traj.joints[:, 2], axis=0), axis=1)
        assert disp.max() <= bound + 1e-12


def test_window_shapes_and_split_sizes(p_h):
    ds = build_dataset(default_scripts(p_h), 20, p_h, seed=3)
    for split in ("train", "val", "test"):
        for w in ds[split]:
            assert w.X.shape == (50, 6)
            assert w.Y.shape == (50, 6)
    ids = {s: {w.traj_id for w in ds[s]} for s in ("train", "val", "test")}
    assert not ids["train"] & ids["val"]
    assert not ids["train"] & ids["test"]
    assert not ids["val"] & ids["test"]
    # 70/15/15 of 20 per script: 14/3/3
    per_script = {s: sum(1 for t in ids[s] if t.startswith("A-")) for s in ids}
    assert (per_script["train"], per_script["val"], per_script["test"]) == (14, 3, 3)


def test_split_of_120_matches_84_18_18(p_h):
    # trajectory-count bookkeeping only; windows are irrelevant here
    counts = {"train": 0, "val": 0, "test": 0}
    n = 120
    n_train = int(round(n * 0.70))
    n_val = int(round(n * 0.15))
    assert (n_train, n_val, n - n_train - n_val) == (84, 18, 18)


def test_short_trajectory_rejected(p_h):
    traj = synth_trajectory(default_scripts(p_h)[0], p_h, seed=1)
    from hrcplan.human_synth import ArmTrajectory
    short = ArmTrajectory(rate=traj.rate, joints=traj.joints[:80],
                          bones=traj.bones[:80])
    with pytest.raises(InsufficientLength):
        cut_windows(short, "short")


def test_windows_are_contiguous_slices(p_h):
    traj = synth_trajectory(default_scripts(p_h)[0], p_h, seed=5)
    windows = cut_windows(traj, "t")
    assert len(windows) == len(traj) - 100 + 1
    w = windows[10]
    assert np.array_equal(w.X, traj.bones[10:60])
    assert np.array_equal(w.Y, traj.bones[60:110])


def test_jsonl_round_trip(tmp_path, p_h):
    ds = build_dataset(default_scripts(p_h), 8, p_h, seed=9)
    path = tmp_path / "w.jsonl"
    n = save_windows_jsonl(path, ds)
    assert n == sum(len(ds[s]) for s in ("train", "val", "test"))
    back = load_windows_jsonl(path)
    for split in ("train", "val", "test"):
        assert len(back[split]) == len(ds[split])
        assert len(back[split]) > 0
        a, b = ds[split][0], back[split][0]
        assert a.traj_id == b.traj_id and a.t0 == b.t0
        assert np.max(np.abs(a.X - b.X)) < 1e-9
        # stored precision preserves bone norms well below reconstruction tol
        norms = np.linalg.norm(b.X.reshape(-1, 2, 3), axis=2)
        assert np.max(np.abs(norms - 1.0)) < 1e-9


def test_rerun_same_seed_identical_bytes(tmp_path, p_h):
    scripts = default_scripts(p_h)
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    save_windows_jsonl(p1, build_dataset(scripts, 3, p_h, seed=11))
    save_windows_jsonl(p2, build_dataset(scripts, 3, p_h, seed=11))
    assert p1.read_bytes() == p2.read_bytes()
