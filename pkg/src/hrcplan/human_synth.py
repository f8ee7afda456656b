"""Synthetic 25 Hz human-arm trajectories and dataset windowing.

Stands in for motion capture: the wrist tracks minimum-jerk reaches
between scripted waypoints (workbench, tool box, desktop), the elbow is
resolved by a fixed-swivel two-link inverse model, and every frame is
rebuilt from bone vectors so segment lengths stay exact.
"""

import json
from dataclasses import dataclass

import numpy as np

from .arm_models import (AnthropometricParams, ArmBonePose, ArmJointPositions,
                         normalize_bone_vectors, reconstruct_arm)
from .errors import DomainError, InsufficientLength, UnreachableWaypoint
from .netutil import flat_seed

RATE_HZ = 25.0
OBS_STEPS = 50   # observation window, 2 s at 25 Hz
PRED_STEPS = 50  # prediction horizon, 2 s at 25 Hz

# Peak wrist speed is v_base * reach * speed_scale; with the default speed
# scales this keeps per-frame displacement under reach / (2 * rate).
_V_BASE = 0.40
# Two default-script segments at this floor plus the dwells always exceed
# the 4 s needed for one observation+prediction window.
_MIN_SEGMENT_DURATION = 1.7  # s
_SWIVEL_MEAN = np.deg2rad(30.0)
_SWIVEL_SIGMA = np.deg2rad(3.0)

DEFAULT_WAYPOINT_SIGMA = 0.02
DEFAULT_SPEED_SCALE_RANGE = (0.8, 1.2)


@dataclass(frozen=True, eq=False)
class MotionScript:
    """Ordered wrist targets with dwell times and a motion-type label."""

    waypoints: tuple  # of (target: (3,) array, dwell: s)
    label: str

    def __post_init__(self):
        wps = tuple((np.asarray(p, dtype=np.float64).reshape(3), float(dw))
                    for p, dw in self.waypoints)
        if len(wps) < 2:
            raise ValueError("a motion script needs at least 2 waypoints")
        if any(dw < 0.0 for _, dw in wps):
            raise ValueError("dwell times must be >= 0")
        object.__setattr__(self, "waypoints", wps)


@dataclass(frozen=True, eq=False)
class ArmTrajectory:
    """Time-ordered arm poses at a fixed rate.

    joints: (F, 3, 3) stacked (shoulder, elbow, wrist) rows;
    bones: (F, 6) matching unit bone-vector pairs.
    """

    rate: float
    joints: np.ndarray
    bones: np.ndarray

    def __post_init__(self):
        if self.joints.shape[0] != self.bones.shape[0]:
            raise ValueError("joints and bones must have the same frame count")

    def __len__(self) -> int:
        return self.joints.shape[0]

    def frame(self, i: int) -> ArmJointPositions:
        s, e, w = self.joints[i]
        return ArmJointPositions(shoulder=s, elbow=e, wrist=w)

    def bone_pose(self, i: int) -> ArmBonePose:
        return ArmBonePose(phi1=self.bones[i, :3], phi2=self.bones[i, 3:])


@dataclass(frozen=True, eq=False)
class WindowSample:
    """One training window: 50 observed and 50 future bone-vector frames."""

    traj_id: str
    t0: int
    X: np.ndarray  # (50, 6)
    Y: np.ndarray  # (50, 6)


def min_jerk_profile(tau: float) -> float:
    """Normalized minimum-jerk position profile 10 t^3 - 15 t^4 + 6 t^5."""
    t = float(tau)
    if t < 0.0 or t > 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _resolve_elbow(shoulder, wrist, l1, l2, swivel):
    """Two-link IK with the elbow placed at a fixed swivel angle measured
    from the downward reference direction around the shoulder-wrist axis."""
    r = wrist - shoulder
    d = float(np.linalg.norm(r))
    d = min(max(d, abs(l1 - l2) + 1e-9), l1 + l2 - 1e-12)
    u = r / d
    cos_beta = (l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)
    cos_beta = min(1.0, max(-1.0, cos_beta))
    sin_beta = np.sqrt(max(0.0, 1.0 - cos_beta * cos_beta))
    ref = np.array([0.0, 0.0, -1.0])
    e1 = ref - np.dot(ref, u) * u
    n1 = float(np.linalg.norm(e1))
    if n1 < 1e-9:
        ref = np.array([1.0, 0.0, 0.0])
        e1 = ref - np.dot(ref, u) * u
        n1 = float(np.linalg.norm(e1))
    e1 /= n1
    e2 = np.cross(u, e1)
    radial = np.cos(swivel) * e1 + np.sin(swivel) * e2
    return shoulder + l1 * (cos_beta * u + sin_beta * radial)


def _wrist_schedule(waypoints, dwells, durations, rate, n_frames):
    """Piecewise dwell/min-jerk wrist positions sampled at frame times."""
    out = np.empty((n_frames, 3), dtype=np.float64)
    # event list: (t_start, t_end, kind, data)
    events = []
    t = 0.0
    for i, (wp, dw) in enumerate(zip(waypoints, dwells)):
        if dw > 0.0:
            events.append((t, t + dw, "hold", wp))
            t += dw
        if i < len(waypoints) - 1:
            events.append((t, t + durations[i], "move", (wp, waypoints[i + 1])))
            t += durations[i]
    total = t
    for f in range(n_frames):
        tf = min(f / rate, total)
        seg = events[-1]
        for ev in events:
            if tf <= ev[1]:
                seg = ev
                break
        t0, t1, kind, data = seg
        if kind == "hold":
            out[f] = data
        else:
            tau = 0.0 if t1 == t0 else (min(tf, t1) - t0) / (t1 - t0)
            s = min_jerk_profile(min(1.0, max(0.0, tau)))
            a, b = data
            out[f] = a + s * (b - a)
    return out, total


def synth_trajectory(script: MotionScript, p_h: AnthropometricParams,
                     noise=(DEFAULT_WAYPOINT_SIGMA, DEFAULT_SPEED_SCALE_RANGE),
                     seed=0, rate: float = RATE_HZ) -> ArmTrajectory:
    """Generate one arm trajectory following the script's wrist targets.

    `noise` is (waypoint_sigma [m], speed_scale_range); the speed scale is
    drawn once per trajectory. Deterministic for a given seed.
    """
    waypoint_sigma, speed_scale_range = noise
    lo, hi = float(speed_scale_range[0]), float(speed_scale_range[1])
    if not (0.5 <= lo <= hi <= 2.0):
        raise ValueError("speed_scale_range must lie within [0.5, 2.0]")
    anchor = p_h.shoulder_anchor
    reach = p_h.reach
    for wp, _ in script.waypoints:
        if np.linalg.norm(wp - anchor) > reach:
            raise UnreachableWaypoint(
                f"waypoint {wp.tolist()} exceeds arm reach {reach:.3f} m")

    rng = np.random.default_rng(flat_seed(seed))
    speed_scale = rng.uniform(lo, hi)
    swivel = _SWIVEL_MEAN + rng.normal(0.0, _SWIVEL_SIGMA)

    wps = []
    dwells = []
    for wp, dw in script.waypoints:
        j = wp + rng.normal(0.0, waypoint_sigma, 3)
        off = j - anchor
        dist = float(np.linalg.norm(off))
        limit = 0.985 * reach
        if dist > limit:  # jitter may not push a target out of reach
            j = anchor + off * (limit / dist)
        wps.append(j)
        dwells.append(dw)

    v_peak = _V_BASE * reach * speed_scale
    durations = []
    for a, b in zip(wps[:-1], wps[1:]):
        d = float(np.linalg.norm(b - a))
        durations.append(max(_MIN_SEGMENT_DURATION, 1.875 * d / v_peak))

    total = sum(dwells) + sum(durations)
    n_frames = int(np.floor(total * rate)) + 1
    wrist, _ = _wrist_schedule(wps, dwells, durations, rate, n_frames)

    joints = np.empty((n_frames, 3, 3), dtype=np.float64)
    bones = np.empty((n_frames, 6), dtype=np.float64)
    l1, l2 = p_h.upper_arm_length, p_h.forearm_length
    for f in range(n_frames):
        elbow = _resolve_elbow(anchor, wrist[f], l1, l2, swivel)
        pose = normalize_bone_vectors(ArmJointPositions(
            shoulder=anchor, elbow=elbow, wrist=wrist[f]))
        rec = reconstruct_arm(pose, p_h)
        joints[f, 0] = rec.shoulder
        joints[f, 1] = rec.elbow
        joints[f, 2] = rec.wrist
        bones[f] = pose.as_vector()
    return ArmTrajectory(rate=rate, joints=joints, bones=bones)


def default_scripts(p_h: AnthropometricParams) -> list:
    """Two reach cycles: bench->toolbox->bench (A), bench->desktop->bench (B)."""
    anchor = p_h.shoulder_anchor
    rest = anchor + np.array([0.02, -0.16, 0.0])      # part held near the chest
    toolbox = anchor + np.array([-0.26, -0.18, -0.22])
    desktop = anchor + np.array([0.24, -0.20, -0.22])
    # the long initial hold covers a full observation window, so the model
    # also learns that a static arm stays static
    rest_dwell = 2.2
    dwell = 0.25
    return [
        MotionScript(waypoints=[(rest, rest_dwell), (toolbox, dwell), (rest, dwell)],
                     label="A"),
        MotionScript(waypoints=[(rest, rest_dwell), (desktop, dwell), (rest, dwell)],
                     label="B"),
    ]


def cut_windows(traj: ArmTrajectory, traj_id: str,
                obs: int = OBS_STEPS, pred: int = PRED_STEPS) -> list:
    """Stride-1 sliding (observation, future) window pairs over a trajectory."""
    need = obs + pred
    if len(traj) < need:
        raise InsufficientLength(
            f"trajectory {traj_id} has {len(traj)} frames, needs >= {need}")
    return [WindowSample(traj_id=traj_id, t0=t0,
                         X=traj.bones[t0:t0 + obs].copy(),
                         Y=traj.bones[t0 + obs:t0 + need].copy())
            for t0 in range(len(traj) - need + 1)]


def build_dataset(scripts, count_per_script: int, p_h: AnthropometricParams,
                  split=(0.70, 0.15, 0.15),
                  noise=(DEFAULT_WAYPOINT_SIGMA, DEFAULT_SPEED_SCALE_RANGE),
                  seed=0, rate: float = RATE_HZ) -> dict:
    """Generate trajectories and window them into train/val/test splits.

    Whole trajectories (never windows) are assigned to a split, so no
    trajectory leaks across splits. Returns {"train": [...], "val": [...],
    "test": [...], "trajectories": {traj_id: ArmTrajectory}}.
    """
    if abs(sum(split) - 1.0) > 1e-9:
        raise ValueError(f"split must sum to 1, got {split}")
    rng = np.random.default_rng(flat_seed(seed, 0xD5))
    out = {"train": [], "val": [], "test": [], "trajectories": {}}
    for s_idx, script in enumerate(scripts):
        n_train = int(round(count_per_script * split[0]))
        n_val = int(round(count_per_script * split[1]))
        n_test = count_per_script - n_train - n_val
        if min(n_train, n_val, n_test) < 0:
            raise ValueError("split produces a negative set size")
        order = rng.permutation(count_per_script)
        assign = {}
        for rank, idx in enumerate(order):
            if rank < n_train:
                assign[idx] = "train"
            elif rank < n_train + n_val:
                assign[idx] = "val"
            else:
                assign[idx] = "test"
        for i in range(count_per_script):
            traj_id = f"{script.label}-{i:03d}"
            traj = synth_trajectory(script, p_h, noise=noise,
                                    seed=flat_seed(seed, s_idx, i), rate=rate)
            out["trajectories"][traj_id] = traj
            out[assign[i]].extend(cut_windows(traj, traj_id))
    return out


def split_trajectory_ids(dataset: dict) -> dict:
    """Trajectory ids per split, for the generation manifest."""
    ids = {}
    for split in ("train", "val", "test"):
        ids[split] = sorted({w.traj_id for w in dataset[split]})
    return ids


def _fmt_matrix(m: np.ndarray) -> list:
    return [[float(f"{v:.10g}") for v in row] for row in m]


def save_windows_jsonl(path, dataset: dict) -> int:
    """Write one JSON record per window: {split, traj_id, t0, X, Y}.

    Values are rounded to 10 significant digits, which preserves bone unit
    norms to well below the reconstruction tolerance.
    """
    n = 0
    with open(path, "w") as fh:
        for split in ("train", "val", "test"):
            for w in dataset[split]:
                rec = {"split": split, "traj_id": w.traj_id, "t0": int(w.t0),
                       "X": _fmt_matrix(w.X), "Y": _fmt_matrix(w.Y)}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                n += 1
    return n


def load_windows_jsonl(path) -> dict:
    """Read a window file back into {"train": [...], "val": [...], "test": [...]}."""
    out = {"train": [], "val": [], "test": []}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            out[rec["split"]].append(WindowSample(
                traj_id=rec["traj_id"], t0=rec["t0"],
                X=np.asarray(rec["X"], dtype=np.float64),
                Y=np.asarray(rec["Y"], dtype=np.float64)))
    return out
