"""Experiment harness: configuration, persistence, benchmarks, simulation.

This is the reproducibility surface: every command reads one JSON config,
derives all randomness from explicit seeds, and writes its outputs under
the configured run directory. Wall-clock measurements (planning and
inference times) live in separate files from the deterministic metrics so
the latter reproduce byte for byte.
"""

import csv
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

import numpy as np

from . import human_synth, predictor as predictor_mod
from .arm_models import (AnthropometricParams, ArmBonePose, RobotGeometry,
                         arm_capsules, default_anthropometrics,
                         default_robot_geometry, reconstruct_arm)
from .collision import Box, Capsule, Scene, config_in_collision, edge_in_collision
from .errors import ConfigError, DivergenceError
from .gnn_planner import (DEFAULT_MAX_STEP, GnnWeights, PlanOptions, PlannerHyper,
                          plan_bidirectional, prep_planner_dataset, replan_trigger,
                          train_planner)
from .netutil import flat_seed, load_weight_file, pearson, save_weight_file
from .oracle_planners import (ExpertPath, Path, PlanRequest, ee_path_length,
                              generate_expert_dataset, rrt_plan, rrt_star_plan,
                              sample_free_config)
from .predictor import (PredictorHyper, load_predictor, mc_dropout_sample,
                        predict_with_uncertainty, save_predictor, train_predictor)
from .workspace_graph import (GraphSchema, HumanNodeSet,
                              human_nodes_from_prediction)

TICK_RATE = 25.0  # Hz, shared by capture playback and the control loop


# ---------------------------------------------------------------------------
# scene bundles


@dataclass(eq=False)
class SceneBundle:
    """One workspace file: collision world, human parameters, graph schema."""

    name: str
    scene: Scene                     # static world, no human capsules
    anthropometrics: AnthropometricParams
    schema: GraphSchema
    human_safety_margin: float
    simulation: dict | None = None   # optional robot start/goal for sim runs


def _resolve_scene_path(ref: str, base_dir: FsPath | None):
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        return resources.files("hrcplan.data.scenes").joinpath(f"{name}.json")
    p = FsPath(ref)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


def load_scene_bundle(ref: str, base_dir: FsPath | None = None) -> SceneBundle:
    path = _resolve_scene_path(ref, base_dir)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"scene file not found: {ref}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"scene file {ref} is not valid JSON: {e}") from e
    try:
        r = doc["robot"]
        limits = doc.get("limits")
        if limits is None:
            limits = [[-np.pi, np.pi]] * 6
        robot = RobotGeometry(dh_rows=np.asarray(r["dh_rows"]),
                              joint_limits=np.asarray(limits),
                              link_radii=np.asarray(r["link_radii"]),
                              base_frame=np.asarray(r["base_frame"]))
        a = doc["anthropometrics"]
        p_h = AnthropometricParams(
            upper_arm_length=a["upper_arm_length"],
            forearm_length=a["forearm_length"],
            upper_arm_radius=a["upper_arm_radius"],
            forearm_radius=a["forearm_radius"],
            shoulder_anchor=np.asarray(a["shoulder_anchor"]))
        boxes = tuple(Box(b["min"], b["max"]) for b in doc.get("boxes", []))
        pairs = tuple(tuple(p) for p in doc.get("self_collision_pairs", []))
        schema = GraphSchema.from_dict(doc["schema"])
        scene = Scene(robot=robot, static_boxes=boxes, human_capsules=(),
                      self_collision_pairs=pairs)
        return SceneBundle(name=doc.get("name", path.name),
                           scene=scene, anthropometrics=p_h, schema=schema,
                           human_safety_margin=float(doc["human_safety_margin"]),
                           simulation=doc.get("simulation"))
    except KeyError as e:
        raise ConfigError(f"scene file {ref} is missing field {e}") from e


def default_self_collision_pairs() -> list:
    return [[i, j] for i in range(6) for j in range(i + 2, 6)]


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(eq=False)
class ExperimentConfig:
    """Parsed experiment file plus derived paths."""

    raw: dict
    base_dir: FsPath | None
    output_dir: FsPath
    seed: int

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    # output artifact paths -------------------------------------------------
    @property
    def human_windows_path(self):
        return self.output_dir / "human_windows.jsonl"

    @property
    def human_manifest_path(self):
        return self.output_dir / "human_manifest.json"

    @property
    def expert_dataset_path(self):
        return self.output_dir / "expert_dataset.jsonl"

    @property
    def predictor_weights_path(self):
        return self.output_dir / "predictor_weights.json"

    @property
    def planner_weights_path(self):
        return self.output_dir / "planner_weights.json"

    def curve_path(self, target: str):
        return self.output_dir / f"{target}_curve.csv"


def default_config_path():
    return resources.files("hrcplan.data").joinpath("default_config.json")


def load_config(path=None, seed_override=None) -> ExperimentConfig:
    if path is None:
        doc = json.loads(default_config_path().read_text())
        base_dir = FsPath.cwd()
    else:
        p = FsPath(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        base_dir = p.parent
    if "output_dir" not in doc:
        raise ConfigError("config needs an output_dir")
    if "scenes" not in doc or "benchmark" not in doc.get("scenes", {}):
        raise ConfigError("config needs scenes.benchmark (list of scene refs)")
    out = FsPath(doc["output_dir"])
    if not out.is_absolute():
        out = base_dir / out
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    return ExperimentConfig(raw=doc, base_dir=base_dir, output_dir=out, seed=seed)


def benchmark_bundles(cfg: ExperimentConfig) -> list:
    return [load_scene_bundle(ref, cfg.base_dir)
            for ref in cfg.raw["scenes"]["benchmark"]]


def simulation_bundle(cfg: ExperimentConfig) -> SceneBundle:
    ref = cfg.raw["scenes"].get("simulate")
    if ref is None:
        raise ConfigError("config needs scenes.simulate for this command")
    return load_scene_bundle(ref, cfg.base_dir)


# ---------------------------------------------------------------------------
# small shared helpers


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow(row)


def _write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def smoothness_metrics(traj: np.ndarray, dt: float) -> tuple:
    """Mean |acceleration| and |jerk| per joint per step by finite
    differences of the executed joint trajectory."""
    traj = np.asarray(traj, dtype=np.float64)
    if traj.shape[0] < 4:
        return 0.0, 0.0
    acc = np.diff(traj, n=2, axis=0) / dt ** 2
    jerk = np.diff(traj, n=3, axis=0) / dt ** 3
    return float(np.mean(np.abs(acc))), float(np.mean(np.abs(jerk)))


def validate_path_collision_free(path: Path, scene: Scene, step: float) -> bool:
    """Independent fine-step re-check of a returned path."""
    configs = path.configs
    if len(configs) == 1:
        return not config_in_collision(configs[0], scene)
    for a, b in zip(configs[:-1], configs[1:]):
        if edge_in_collision(a, b, scene, step):
            return False
    return True


def current_pose_node_set(joints, schema: GraphSchema) -> HumanNodeSet:
    """Degenerate prediction stand-in: the observed pose at every sample
    and horizon with zero spread (planning without prediction)."""
    K = schema.n_samples
    H = len(schema.horizons)
    pos = np.empty((K, H, 2, 3))
    pos[..., 0, :] = joints.elbow
    pos[..., 1, :] = joints.wrist
    return HumanNodeSet(positions=pos, sigmas=np.zeros((H, 2)))


def prediction_capsules(node_set: HumanNodeSet, p_h: AnthropometricParams,
                        margin: float) -> list:
    """Arm capsules of every sampled pose in a node set."""
    caps = []
    K, H = node_set.positions.shape[:2]
    shoulder = p_h.shoulder_anchor
    for k in range(K):
        for h in range(H):
            elbow = node_set.positions[k, h, 0]
            wrist = node_set.positions[k, h, 1]
            caps.append(Capsule(shoulder, elbow, p_h.upper_arm_radius + margin))
            caps.append(Capsule(elbow, wrist, p_h.forearm_radius + margin))
    return caps


# ---------------------------------------------------------------------------
# expert dataset persistence


def save_expert_jsonl(path, expert_paths) -> int:
    """One row per transition: {scene_id, snapshot, c_i, c_next}.

    The snapshot carries the goal, the path id (for per-path loss
    grouping), and the embedded human node set when present.
    """
    n = 0
    with open(path, "w") as fh:
        for ep in expert_paths:
            human = None
            if ep.human is not None:
                human = {"positions": ep.human.positions.tolist(),
                         "sigmas": ep.human.sigmas.tolist()}
            for i in range(len(ep.configs) - 1):
                rec = {"scene_id": ep.scene_id,
                       "snapshot": {"path_id": ep.path_id,
                                    "goal": ep.goal.tolist(),
                                    "human": human},
                       "c_i": ep.configs[i].tolist(),
                       "c_next": ep.configs[i + 1].tolist()}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                n += 1
    return n


def load_expert_jsonl(path) -> list:
    """Group transition rows back into ExpertPath objects."""
    paths = {}
    order = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            pid = rec["snapshot"]["path_id"]
            if pid not in paths:
                human = rec["snapshot"]["human"]
                node_set = None
                if human is not None:
                    node_set = HumanNodeSet(positions=np.asarray(human["positions"]),
                                            sigmas=np.asarray(human["sigmas"]))
                paths[pid] = {"scene_id": rec["scene_id"],
                              "goal": np.asarray(rec["snapshot"]["goal"]),
                              "human": node_set,
                              "configs": [np.asarray(rec["c_i"])]}
                order.append(pid)
            paths[pid]["configs"].append(np.asarray(rec["c_next"]))
    out = []
    for pid in order:
        p = paths[pid]
        out.append(ExpertPath(scene_id=p["scene_id"], goal=p["goal"],
                              configs=np.asarray(p["configs"]),
                              human=p["human"], path_id=pid))
    return out


# ---------------------------------------------------------------------------
# generate


def cmd_generate(cfg: ExperimentConfig, what: str = "all", log=print) -> dict:
    """Write the human window dataset and/or the expert planning dataset."""
    if what not in ("all", "human", "expert"):
        raise ConfigError(f"unknown generate target {what!r}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    report = {}
    if what in ("all", "human"):
        report["human"] = _generate_human(cfg, log)
    if what in ("all", "expert"):
        report["expert"] = _generate_expert(cfg, log)
    return report


def _generate_human(cfg: ExperimentConfig, log) -> dict:
    hs = cfg.section("human")
    bundle = simulation_bundle(cfg)
    p_h = bundle.anthropometrics
    scripts = human_synth.default_scripts(p_h)
    count = int(hs.get("count_per_script", 120))
    split = tuple(hs.get("split", (0.70, 0.15, 0.15)))
    noise = (float(hs.get("waypoint_sigma", human_synth.DEFAULT_WAYPOINT_SIGMA)),
             tuple(hs.get("speed_scale_range", human_synth.DEFAULT_SPEED_SCALE_RANGE)))
    ds = human_synth.build_dataset(scripts, count, p_h, split=split, noise=noise,
                                   seed=cfg.seed)
    n = human_synth.save_windows_jsonl(cfg.human_windows_path, ds)
    manifest = {"seed": cfg.seed, "count_per_script": count,
                "trajectories": len(ds["trajectories"]),
                "windows": {k: len(ds[k]) for k in ("train", "val", "test")},
                "split_ids": human_synth.split_trajectory_ids(ds)}
    _write_json(cfg.human_manifest_path, manifest)
    log(f"human dataset: {len(ds['trajectories'])} trajectories, {n} windows "
        f"-> {cfg.human_windows_path}")
    return manifest


def _dynamic_human_provider(cfg: ExperimentConfig, bundle: SceneBundle,
                            n_static_ws: int, dynamic_count: int):
    """Provider that embeds an MCDS prediction drawn from a synthetic
    trajectory into dynamic expert scenarios (workspace index n_static_ws)."""
    ex = cfg.section("expert")
    K = int(cfg.section("predictor").get("K", 5))
    if not cfg.predictor_weights_path.exists():
        raise ConfigError(
            "dynamic expert scenarios need trained predictor weights; run "
            "`generate --what human` and `train --target predictor` first "
            "or set expert.dynamic_scenarios to 0")
    weights = load_predictor(cfg.predictor_weights_path)
    p_h = bundle.anthropometrics
    scripts = human_synth.default_scripts(p_h)
    margin = bundle.human_safety_margin
    schema = bundle.schema
    obs = human_synth.OBS_STEPS

    def provider(ws_idx, s_idx, rng):
        if ws_idx < n_static_ws:
            return None
        script = scripts[s_idx % len(scripts)]
        traj = human_synth.synth_trajectory(
            script, p_h, seed=[cfg.seed, 0xD, s_idx])
        t = int(rng.integers(obs, len(traj) - 1))
        joints = traj.frame(t)
        caps = arm_capsules(joints, p_h, margin)
        if s_idx % 2 == 0:
            window = traj.bones[t - obs:t]
            pred = predict_with_uncertainty(window, weights, K=K,
                                            seed=[cfg.seed, 0xE, s_idx])
            node_set = human_nodes_from_prediction(pred, p_h, schema)
            caps = caps + prediction_capsules(node_set, p_h, margin)
        else:
            # half the scenarios use the planning-without-prediction input
            # style (observed pose only, zero spread)
            node_set = current_pose_node_set(joints, schema)
        return node_set, caps

    return provider


def _generate_expert(cfg: ExperimentConfig, log) -> dict:
    ex = cfg.section("expert")
    bundles = benchmark_bundles(cfg)
    per_ws = int(ex.get("scenarios_per_workspace", 200))
    dynamic = int(ex.get("dynamic_scenarios", 0))
    workspaces = [(b.name, b.scene) for b in bundles]
    counts = [per_ws] * len(workspaces)
    provider = None
    if dynamic > 0:
        sim_bundle = simulation_bundle(cfg)
        provider = _dynamic_human_provider(cfg, sim_bundle, len(workspaces), dynamic)
        workspaces.append((sim_bundle.name + "#dyn", sim_bundle.scene))
        counts.append(dynamic)

    skipped = []
    all_paths = []
    path_id = 0
    for ws_idx, ((scene_id, scene), count) in enumerate(zip(workspaces, counts)):
        paths = generate_expert_dataset(
            [(scene_id, scene)], count,
            seed=[cfg.seed, 0xEE, ws_idx],
            iteration_budget=int(ex.get("iteration_budget", 1500)),
            shortcut_attempts=int(ex.get("shortcut_attempts", 80)),
            step=float(ex.get("step", 0.1)),
            human_provider=(lambda w, s, r, _wi=ws_idx: provider(_wi, s, r))
            if provider is not None else None,
            log=skipped.append)
        for p in paths:
            p.path_id = path_id
            path_id += 1
        all_paths.extend(paths)
    n = save_expert_jsonl(cfg.expert_dataset_path, all_paths)
    report = {"paths": len(all_paths), "transitions": n,
              "skipped": len(skipped), "seed": cfg.seed}
    log(f"expert dataset: {len(all_paths)} paths, {n} transitions, "
        f"{len(skipped)} skipped -> {cfg.expert_dataset_path}")
    return report


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: ExperimentConfig, target: str, log=print) -> dict:
    if target == "predictor":
        return _train_predictor(cfg, log)
    if target == "planner":
        return _train_planner(cfg, log)
    raise ConfigError(f"unknown training target {target!r}")


def _write_curve(path, history):
    _write_csv(path, ["epoch", "train_loss", "val_loss"],
               [[h["epoch"], repr(h["train_loss"]), repr(h["val_loss"])]
                for h in history])


def _train_predictor(cfg: ExperimentConfig, log) -> dict:
    if not cfg.human_windows_path.exists():
        raise ConfigError(f"missing human dataset {cfg.human_windows_path}; "
                          "run `generate --what human` first")
    ps = cfg.section("predictor")
    windows = human_synth.load_windows_jsonl(cfg.human_windows_path)
    hyper = PredictorHyper(
        lr=float(ps.get("lr", 2e-3)), batch=int(ps.get("batch", 64)),
        epochs=int(ps.get("epochs", 8)), seed=cfg.seed,
        dropout_p=float(ps.get("dropout_p", 0.1)),
        hidden_sizes=tuple(ps.get("hidden_sizes", (64, 64, 64))),
        train_window_cap=int(ps.get("train_window_cap", 3072)),
        val_window_cap=int(ps.get("val_window_cap", 512)))
    weights, history = train_predictor(windows["train"], windows["val"], hyper)
    save_predictor(cfg.predictor_weights_path, weights)
    _write_curve(cfg.curve_path("predictor"), history)
    log(f"predictor: {len(history)} epochs -> {cfg.predictor_weights_path}")
    return {"epochs": len(history), "history": history}


def _train_planner(cfg: ExperimentConfig, log) -> dict:
    if not cfg.expert_dataset_path.exists():
        raise ConfigError(f"missing expert dataset {cfg.expert_dataset_path}; "
                          "run `generate --what expert` first")
    ps = cfg.section("planner")
    bundles = benchmark_bundles(cfg)
    scenes = {b.name: b.scene for b in bundles}
    sim_bundle = simulation_bundle(cfg)
    scenes.setdefault(sim_bundle.name, sim_bundle.scene)
    scenes[sim_bundle.name + "#dyn"] = sim_bundle.scene
    schema = bundles[0].schema
    robot = bundles[0].scene.robot
    expert_paths = load_expert_jsonl(cfg.expert_dataset_path)
    prepped = prep_planner_dataset(expert_paths, scenes, schema, robot)
    hyper = PlannerHyper(
        lr=float(ps.get("lr", 1e-3)), batch=int(ps.get("batch", 256)),
        epochs=int(ps.get("epochs", 12)), seed=cfg.seed,
        hidden=int(ps.get("hidden", 64)), layers=int(ps.get("layers", 5)),
        val_fraction=float(ps.get("val_fraction", 0.1)),
        pair_cap_per_epoch=int(ps.get("pair_cap_per_epoch", 12000)))
    weights, history = train_planner(prepped, hyper)
    _save_planner(cfg.planner_weights_path, weights)
    _write_curve(cfg.curve_path("planner"), history)
    log(f"planner: {len(history)} epochs -> {cfg.planner_weights_path}")
    return {"epochs": len(history), "history": history}


def _save_planner(path, w: GnnWeights) -> None:
    arrays = {}
    for l in range(w.n_layers):
        arrays[f"theta{l}"] = w.thetas[l]
        arrays[f"bias{l}"] = w.biases[l]
    arrays["head_W"] = w.head_W
    arrays["head_b"] = w.head_b
    save_weight_file(path, w.version, w.widths, arrays)


def load_planner(path) -> GnnWeights:
    doc = load_weight_file(path, "gnn-planner-v1")
    widths = tuple(doc["layer_sizes"])
    arrays = doc["arrays"]
    L = len(widths) - 1
    return GnnWeights(widths=widths,
                      thetas=[arrays[f"theta{l}"] for l in range(L)],
                      biases=[arrays[f"bias{l}"] for l in range(L)],
                      head_W=arrays["head_W"], head_b=arrays["head_b"])


# ---------------------------------------------------------------------------
# benchmark


def cmd_benchmark(cfg: ExperimentConfig, log=print) -> dict:
    """Shared-scenario comparison of rrt, rrt_star, and the graph planner.

    Writes benchmark_metrics.csv (deterministic), benchmark_timings.csv
    (wall clock), and benchmark_summary.json.
    """
    bm = cfg.section("benchmark")
    planners = list(bm.get("planners", ["rrt", "rrt_star", "gnn"]))
    per_ws = int(bm.get("scenarios_per_workspace", 200))
    bundles = benchmark_bundles(cfg)
    gnn_weights = None
    if "gnn" in planners:
        if not cfg.planner_weights_path.exists():
            raise ConfigError("benchmark with the gnn planner needs trained "
                              f"weights at {cfg.planner_weights_path}")
        gnn_weights = load_planner(cfg.planner_weights_path)
    stop_ratio = bm.get("stop_ratio", 1.1)
    rows = []
    trows = []
    errors = 0
    total = 0
    for ws_idx, bundle in enumerate(bundles):
        scene = bundle.scene
        schema = bundle.schema
        for s_idx in range(per_ws):
            total += 1
            rng = np.random.default_rng([cfg.seed, 0xBE, ws_idx, s_idx])
            try:
                start = sample_free_config(scene, rng)
                goal = sample_free_config(scene, rng)
            except RuntimeError:
                errors += 1
                continue
            plan_seed = int(rng.integers(0, 2 ** 31))
            results = {}
            if "gnn" in planners:
                opts = PlanOptions(max_iters=int(bm.get("gnn_max_iters", 400)),
                                   max_step=float(bm.get("gnn_max_step",
                                                         DEFAULT_MAX_STEP)),
                                   seed=plan_seed)
                path, stats = plan_bidirectional(start, goal, scene, gnn_weights,
                                                 schema, opts)
                results["gnn"] = (path, stats)
            gnn_ref = None
            if results.get("gnn") and results["gnn"][1].success:
                gnn_ref = results["gnn"][0].cspace_length()
            if "rrt" in planners:
                req = PlanRequest(start=start, goal=goal, scene=scene,
                                  iteration_budget=int(bm.get("rrt_budget", 4000)),
                                  seed=plan_seed)
                results["rrt"] = rrt_plan(req)
            if "rrt_star" in planners:
                req = PlanRequest(start=start, goal=goal, scene=scene,
                                  iteration_budget=int(bm.get("rrt_star_budget", 2500)),
                                  seed=plan_seed,
                                  stop_ratio=(float(stop_ratio)
                                              if stop_ratio is not None else None),
                                  reference_cost=gnn_ref)
                results["rrt_star"] = rrt_star_plan(req)
            for name in planners:
                path, stats = results[name]
                valid = ""
                if stats.success:
                    valid = int(validate_path_collision_free(
                        path, scene, step=0.05 / 4))
                rows.append([bundle.name, s_idx, name, int(stats.success),
                             repr(path.cspace_length()) if stats.success else "",
                             repr(stats.ee_path_length) if stats.success else "",
                             stats.tree_size, valid])
                trows.append([bundle.name, s_idx, name,
                              repr(stats.wall_time)])
        log(f"benchmark: finished {bundle.name}")
    header = ["scene", "scenario", "planner", "success", "cspace_length",
              "ee_path_length", "tree_size", "revalidated"]
    _write_csv(cfg.output_dir / "benchmark_metrics.csv", header, rows)
    _write_csv(cfg.output_dir / "benchmark_timings.csv",
               ["scene", "scenario", "planner", "wall_time"], trows)
    summary = summarize_benchmark(rows, trows, planners)
    _write_json(cfg.output_dir / "benchmark_summary.json", summary)
    failure_threshold = float(bm.get("error_threshold", 0.1))
    summary["_sweep_errors"] = errors
    summary["_sweep_total"] = total
    summary["_error_exit"] = errors > failure_threshold * max(total, 1)
    log(json.dumps({k: v for k, v in summary.items() if not k.startswith("_")},
                   indent=2, sort_keys=True))
    return summary


def summarize_benchmark(rows, trows, planners) -> dict:
    times = {}
    for scene, s_idx, name, wall in trows:
        times[(scene, s_idx, name)] = float(wall)
    out = {}
    for name in planners:
        lens, ts, succ, n, revalid = [], [], 0, 0, 0
        for row in rows:
            if row[2] != name:
                continue
            n += 1
            if row[3]:
                succ += 1
                lens.append(float(row[5]))
                ts.append(times[(row[0], row[1], name)])
                revalid += int(row[7])
        out[name] = {
            "scenarios": n,
            "success_rate": succ / n if n else 0.0,
            "len_mean": float(np.mean(lens)) if lens else None,
            "len_std": float(np.std(lens)) if lens else None,
            "time_mean": float(np.mean(ts)) if ts else None,
            "time_std": float(np.std(ts)) if ts else None,
            "revalidated_fraction": (revalid / succ) if succ else None,
        }
    return out


# ---------------------------------------------------------------------------
# simulation


@dataclass(eq=False)
class SimRecord:
    """Per-run outcome of one simulated collaboration episode."""

    mode: str
    run: int
    success: bool
    collisions: int
    reached_goal: bool
    ticks: int
    replan_count: int
    first_replan_time: float | None
    planning_time: float
    ee_path_length: float
    mean_acc: float
    mean_jerk: float
    replan_ticks: list


def _sim_modes(cfg):
    sim = cfg.section("simulate")
    return list(sim.get("modes", ["none", "current_only", "with_prediction"]))


def simulate_run(cfg: ExperimentConfig, bundle: SceneBundle, weights: GnnWeights,
                 predictor_weights, mode: str, run: int) -> SimRecord:
    """One 25 Hz episode of the collaboration scenario.

    The robot starts executing its nominal transport path (planned in the
    static scene) while the human plays back; human-aware modes watch the
    remaining path against the per-tick collision scene and replan on a
    trigger. If the goal region is transiently occupied the robot diverts
    toward its staging (start) configuration and periodically retries the
    goal. Ground-truth collisions are counted against the unmargined human
    capsules every tick.
    """
    sim = cfg.section("simulate")
    p_h = bundle.anthropometrics
    schema = bundle.schema
    margin = bundle.human_safety_margin
    static_scene = bundle.scene
    robot = static_scene.robot
    if bundle.simulation is None:
        raise ConfigError(f"scene {bundle.name} has no simulation block")
    start = np.asarray(bundle.simulation["robot_start"], dtype=np.float64)
    goal = np.asarray(bundle.simulation["robot_goal"], dtype=np.float64)
    goal_tol = float(sim.get("goal_tolerance", 0.05))
    K = int(sim.get("K", 5))
    n_ticks = int(sim.get("max_ticks", 220))
    retry_ticks = int(sim.get("goal_retry_ticks", 12))
    offset = int(sim.get("playback_offset", 0))
    dt = 1.0 / TICK_RATE
    obs = human_synth.OBS_STEPS

    scripts = {s.label: s for s in human_synth.default_scripts(p_h)}
    script = scripts[str(sim.get("script", "A"))]
    # stretch the initial rest dwell to cover one observation window, so the
    # episode starts right at the reach onset with full history available
    rest_dwell = float(sim.get("rest_dwell", 2.0))
    wps = list(script.waypoints)
    wps[0] = (wps[0][0], max(wps[0][1], rest_dwell))
    script = human_synth.MotionScript(waypoints=wps, label=script.label)
    traj = human_synth.synth_trajectory(script, p_h, seed=[cfg.seed, 0x51, run])
    # after the recording ends the human holds its final pose, which lets
    # blocked runs finish once the arm has retreated

    alert_extra = float(sim.get("alert_margin_extra", 0.02))
    commit_extra = float(sim.get("commit_margin_extra", 0.04))

    def frame_at(tick):
        return min(obs + offset + tick, len(traj) - 1)

    def scene_and_pred(tick):
        """(planning, alert, commit scene, graph human set) for this tick.

        The alert scene inflates every capsule a little beyond the planning
        margin so conflicts are detected with room to manoeuvre; the commit
        scene inflates further still, and a freshly planned return path must
        clear it, which keeps per-tick prediction jitter from flapping
        between committing and retreating.
        """
        frame_idx = frame_at(tick)
        joints = traj.frame(frame_idx)
        if mode == "none":
            return static_scene, static_scene, static_scene, None
        caps = arm_capsules(joints, p_h, margin)
        alert = arm_capsules(joints, p_h, margin + alert_extra)
        commit = arm_capsules(joints, p_h, margin + commit_extra)
        if mode == "current_only":
            node_set = current_pose_node_set(joints, schema)
        else:
            window = traj.bones[frame_idx - obs:frame_idx]
            pred = predict_with_uncertainty(window, predictor_weights, K=K,
                                            seed=[cfg.seed, 0x53, run, tick])
            node_set = human_nodes_from_prediction(pred, p_h, schema)
            caps = caps + prediction_capsules(node_set, p_h, margin)
            alert = alert + prediction_capsules(node_set, p_h, margin + alert_extra)
            commit = commit + prediction_capsules(node_set, p_h, margin + commit_extra)
        return (static_scene.with_human_capsules(caps),
                static_scene.with_human_capsules(alert),
                static_scene.with_human_capsules(commit), node_set)

    planning_time = 0.0

    def plan_to(target, tick, scene_t, pred_t):
        nonlocal planning_time
        t0 = time.perf_counter()
        try:
            p, st = plan_bidirectional(current, target, scene_t, weights, schema,
                                       PlanOptions(max_iters=int(sim.get("plan_max_iters", 300)),
                                                   seed=flat_seed(cfg.seed, 0x54, run, tick)),
                                       pred=pred_t)
        except ValueError:
            p, st = None, None  # an endpoint sits inside margined capsules
        planning_time += time.perf_counter() - t0
        if st is not None and st.success:
            return list(p.configs[1:])
        return None

    current = start.copy()
    t0 = time.perf_counter()
    nominal, nominal_stats = plan_bidirectional(
        start, goal, static_scene, weights, schema,
        PlanOptions(max_iters=int(sim.get("plan_max_iters", 300)),
                    seed=flat_seed(cfg.seed, 0x52, run)))
    planning_time += time.perf_counter() - t0
    if not nominal_stats.success:
        return SimRecord(mode=mode, run=run, success=False, collisions=0,
                         reached_goal=False, ticks=0, replan_count=0,
                         first_replan_time=None, planning_time=planning_time,
                         ee_path_length=0.0, mean_acc=0.0, mean_jerk=0.0,
                         replan_ticks=[])

    executed = [start.copy()]
    waypoints = list(nominal.configs[1:])
    diverted = False
    collisions = 0
    replans = []
    reached = False

    for tick in range(n_ticks):
        if mode != "none":
            plan_scene, alert_scene, commit_scene, pred_t = scene_and_pred(tick)
            remainder = Path(configs=np.asarray([current] + waypoints)
                             if waypoints else current[None])
            triggered = replan_trigger(remainder, alert_scene)
            retry = diverted and tick % retry_ticks == 0
            if triggered or retry:
                if triggered:
                    replans.append(tick)
                # plan the route to the goal against the commit scene: the
                # result clears the alert zone with slack, so per-tick
                # prediction jitter cannot flap it back into a retreat
                new_wps = None
                if not config_in_collision(goal, commit_scene):
                    new_wps = plan_to(goal, tick, commit_scene, pred_t)
                if new_wps is not None:
                    waypoints = new_wps
                    diverted = False
                elif triggered:
                    # goal region occupied or unreachable: yield toward the
                    # staging pose and retry periodically
                    back = plan_to(start, tick, plan_scene, pred_t)
                    waypoints = back if back is not None else []
                    diverted = True
        if waypoints:
            current = waypoints.pop(0)
        executed.append(current.copy())
        truth = Scene(robot=robot, static_boxes=(), self_collision_pairs=(),
                      human_capsules=arm_capsules(traj.frame(frame_at(tick)), p_h, 0.0))
        if config_in_collision(current, truth):
            collisions += 1
        if not diverted and np.max(np.abs(current - goal)) <= goal_tol:
            reached = True
            # run until the human finishes its motion so parked-robot
            # conflicts are observed; then the episode is over
            if frame_at(tick) >= len(traj) - 1:
                break

    traj_arr = np.asarray(executed)
    acc, jerk = smoothness_metrics(traj_arr, dt)
    ee_len = ee_path_length(Path(configs=traj_arr), robot)
    return SimRecord(mode=mode, run=run, success=collisions == 0,
                     collisions=collisions, reached_goal=reached,
                     ticks=len(executed) - 1, replan_count=len(replans),
                     first_replan_time=(replans[0] * dt) if replans else None,
                     planning_time=planning_time, ee_path_length=ee_len,
                     mean_acc=acc, mean_jerk=jerk, replan_ticks=replans)


def cmd_simulate(cfg: ExperimentConfig, log=print) -> dict:
    """Run the three-case dynamic comparison on shared per-run seeds."""
    sim = cfg.section("simulate")
    bundle = simulation_bundle(cfg)
    if not cfg.planner_weights_path.exists():
        raise ConfigError("simulation needs trained planner weights")
    weights = load_planner(cfg.planner_weights_path)
    modes = _sim_modes(cfg)
    pw = None
    if "with_prediction" in modes:
        if not cfg.predictor_weights_path.exists():
            raise ConfigError("with_prediction simulation needs predictor weights")
        pw = load_predictor(cfg.predictor_weights_path)
    runs = int(sim.get("runs", 50))
    records = []
    for mode in modes:
        for run in range(runs):
            rec = simulate_run(cfg, bundle, weights, pw, mode, run)
            records.append(rec)
        log(f"simulate: finished mode {mode}")
    rows = []
    timelines = {m: [] for m in modes}
    for r in records:
        rows.append([r.mode, r.run, int(r.success), r.collisions,
                     int(r.reached_goal), r.ticks, r.replan_count,
                     repr(r.first_replan_time) if r.first_replan_time is not None else "",
                     repr(r.ee_path_length), repr(r.mean_acc), repr(r.mean_jerk)])
        timelines[r.mode].append({
            "run": r.run, "collisions": r.collisions,
            "reached_goal": r.reached_goal, "ticks": r.ticks,
            "replan_ticks": r.replan_ticks,
            "first_replan_time": r.first_replan_time,
            "planning_time": r.planning_time,
            "mean_acc": r.mean_acc, "mean_jerk": r.mean_jerk})
    _write_csv(cfg.output_dir / "simulate_metrics.csv",
               ["mode", "run", "success", "collisions", "reached_goal", "ticks",
                "replan_count", "first_replan_time", "ee_path_length",
                "mean_acc", "mean_jerk"], rows)
    summary = {}
    for mode in modes:
        rs = [r for r in records if r.mode == mode]
        summary[mode] = {
            "runs": len(rs),
            "collision_runs": sum(1 for r in rs if r.collisions > 0),
            "total_collision_ticks": sum(r.collisions for r in rs),
            "mean_acc": float(np.mean([r.mean_acc for r in rs])),
            "mean_jerk": float(np.mean([r.mean_jerk for r in rs])),
            "mean_replans": float(np.mean([r.replan_count for r in rs])),
            "reached_goal_rate": float(np.mean([r.reached_goal for r in rs])),
        }
    if "current_only" in modes and "with_prediction" in modes:
        earlier = 0
        comparable = 0
        for run in range(runs):
            co = next(r for r in records if r.mode == "current_only" and r.run == run)
            wp = next(r for r in records if r.mode == "with_prediction" and r.run == run)
            if co.first_replan_time is None and wp.first_replan_time is None:
                continue
            comparable += 1
            co_t = co.first_replan_time if co.first_replan_time is not None else np.inf
            wp_t = wp.first_replan_time if wp.first_replan_time is not None else np.inf
            if wp_t < co_t:
                earlier += 1
        summary["_earlier_replan_fraction"] = (earlier / comparable) if comparable else None
        summary["_earlier_replan_comparable_runs"] = comparable
    for mode in modes:
        _write_json(cfg.output_dir / f"simulate_timeline_{mode}.json",
                    {"mode": mode, "seed": cfg.seed, "runs": timelines[mode]})
    _write_json(cfg.output_dir / "simulate_summary.json", summary)
    log(json.dumps(summary, indent=2, sort_keys=True))
    return summary


# ---------------------------------------------------------------------------
# uncertainty report


def cmd_uncertainty_report(cfg: ExperimentConfig, log=print) -> dict:
    """K sweep of prediction spread and inference time, plus the
    error-versus-uncertainty correlation on the test split."""
    if not cfg.predictor_weights_path.exists():
        raise ConfigError("uncertainty report needs trained predictor weights")
    if not cfg.human_windows_path.exists():
        raise ConfigError("uncertainty report needs the human dataset")
    un = cfg.section("uncertainty")
    k_values = [int(k) for k in un.get("K_values", (5, 10, 20))]
    n_windows = int(un.get("test_windows", 200))
    bundle = simulation_bundle(cfg)
    p_h = bundle.anthropometrics
    schema = bundle.schema
    weights = load_predictor(cfg.predictor_weights_path)
    windows = human_synth.load_windows_jsonl(cfg.human_windows_path)["test"]
    if not windows:
        raise ConfigError("test split is empty")
    windows = windows[:n_windows]

    mc_dropout_sample(windows[0].X, weights, 2, seed=0)  # warm-up before timing
    rows = []
    sweep = {}
    for K in k_values:
        dev_elbow, dev_wrist = [], []
        wall = 0.0
        for idx, win in enumerate(windows):
            t0 = time.perf_counter()
            raw = mc_dropout_sample(win.X, weights, K, seed=[cfg.seed, K, idx])
            wall += time.perf_counter() - t0
            pred = predictor_mod.UncertainPrediction.from_raw_samples(raw)
            poses = predictor_mod.prediction_to_poses(pred, p_h, schema.horizons)
            for row in poses:
                pos = np.asarray([[p.elbow, p.wrist] for p in row])  # (K, 2, 3)
                mean = pos.mean(axis=0)
                d2 = np.sum((pos - mean) ** 2, axis=2)  # (K, 2)
                dev = np.sqrt(d2.sum(axis=0) / (K - 1))
                dev_elbow.append(dev[0])
                dev_wrist.append(dev[1])
        sweep[K] = {"elbow_m": float(np.mean(dev_elbow)),
                    "wrist_m": float(np.mean(dev_wrist)),
                    "inference_s": wall / len(windows)}
        rows.append([K, repr(sweep[K]["elbow_m"]), repr(sweep[K]["wrist_m"]),
                     repr(sweep[K]["inference_s"])])
    _write_csv(cfg.output_dir / "uncertainty_k_sweep.csv",
               ["K", "elbow_m", "wrist_m", "inference_s"], rows)

    corr = error_uncertainty_correlation(
        windows, weights, p_h, schema,
        K=int(cfg.section("predictor").get("K", 5)), seed=cfg.seed)
    summary = {"k_sweep": {str(k): v for k, v in sweep.items()},
               "correlation": corr}
    _write_json(cfg.output_dir / "uncertainty_summary.json", summary)
    log(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def error_uncertainty_correlation(windows, weights, p_h, schema: GraphSchema,
                                  K: int = 5, seed: int = 0) -> dict:
    """Pearson correlation between prediction error and the uncertainty
    signal, pooled over test windows, horizons, and the two joints."""
    errors = {0: [], 1: []}
    sigmas = {0: [], 1: []}
    for idx, win in enumerate(windows):
        pred = predict_with_uncertainty(win.X, weights, K=K,
                                        seed=[seed, 0xC0, idx])
        node_set = human_nodes_from_prediction(pred, p_h, schema)
        mean_pos = node_set.positions.mean(axis=0)  # (H, 2, 3)
        for h_idx, h in enumerate(schema.horizons):
            true_b = win.Y[h].reshape(2, 3)
            true_b = true_b / np.linalg.norm(true_b, axis=1)[:, None]
            truth = reconstruct_arm(ArmBonePose(phi1=true_b[0], phi2=true_b[1]), p_h)
            tpos = [truth.elbow, truth.wrist]
            for j in (0, 1):
                errors[j].append(float(np.linalg.norm(mean_pos[h_idx, j] - tpos[j])))
                sigmas[j].append(float(node_set.sigmas[h_idx, j]))
    pooled_err = errors[0] + errors[1]
    pooled_sig = sigmas[0] + sigmas[1]
    return {"pooled": pearson(pooled_err, pooled_sig),
            "elbow": pearson(errors[0], sigmas[0]),
            "wrist": pearson(errors[1], sigmas[1])}
