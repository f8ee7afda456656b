"""Sampling-based planners: RRT and RRT* with shortcutting.

RRT* serves as the imitation expert; both planners double as comparison
baselines. Costs are configuration-space Euclidean path lengths; reported
path lengths are end-effector distances. All randomness flows through a
seeded generator, so runs are reproducible.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .arm_models import RobotGeometry, forward_kinematics
from .collision import DEFAULT_EDGE_STEP, Scene, config_in_collision, edge_in_collision
from .netutil import flat_seed

DEFAULT_STEP_SIZE = 0.1       # rad, steer step
DEFAULT_GOAL_TOLERANCE = 0.05  # rad, max-norm goal acceptance
DEFAULT_GOAL_BIAS = 0.05
# planners check edges at a quarter of the standard step; the dyadic edge
# grids nest, so any re-validation at the standard step/4 is a subset of
# what the planner already cleared
PLANNER_EDGE_STEP = DEFAULT_EDGE_STEP / 4.0
DEFAULT_PATH_DT = 0.1          # s per step for smoothness timestamps
_RRT_STAR_GAMMA = 8.0
_REWIRE_RADIUS_CAP = 0.6       # rad, keeps near-neighbor edges short


@dataclass(eq=False)
class PlanRequest:
    """One planning query; start and goal must be collision-free."""

    start: np.ndarray
    goal: np.ndarray
    scene: Scene
    step_size: float = DEFAULT_STEP_SIZE
    goal_tolerance: float = DEFAULT_GOAL_TOLERANCE
    iteration_budget: int = 4000
    seed: int = 0
    goal_bias: float = DEFAULT_GOAL_BIAS
    edge_step: float = PLANNER_EDGE_STEP
    stop_ratio: float | None = None     # terminate RRT* at ratio * reference_cost
    reference_cost: float | None = None

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64).reshape(6)
        self.goal = np.asarray(self.goal, dtype=np.float64).reshape(6)
        if self.iteration_budget <= 0:
            raise ValueError("iteration budget must be > 0")


@dataclass(eq=False)
class Path:
    """Joint-space waypoints with uniformly spaced timestamps."""

    configs: np.ndarray  # (n, 6)
    dt: float = DEFAULT_PATH_DT

    def __post_init__(self):
        self.configs = np.asarray(self.configs, dtype=np.float64).reshape(-1, 6)

    def __len__(self) -> int:
        return self.configs.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def cspace_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.configs, axis=0), axis=1)))


@dataclass(eq=False)
class PlanStats:
    """Outcome record; the length field is populated only on success."""

    success: bool
    ee_path_length: float | None = None
    wall_time: float = 0.0
    tree_size: int = 0
    failure_reason: str | None = None


def ee_path_length(path: Path, robot: RobotGeometry,
                   sub_step: float = DEFAULT_EDGE_STEP) -> float:
    """End-effector distance along the path.

    Each joint-space segment is subdivided at the edge-check resolution so
    curved end-effector traces are measured, not chord lengths.
    """
    if len(path) < 2:
        return 0.0
    total = 0.0
    prev = forward_kinematics(path.configs[0], robot)[6]
    for a, b in zip(path.configs[:-1], path.configs[1:]):
        span = float(np.max(np.abs(b - a)))
        n = max(1, int(np.ceil(span / sub_step)))
        for s in range(1, n + 1):
            q = a + (s / n) * (b - a)
            cur = forward_kinematics(q, robot)[6]
            total += float(np.linalg.norm(cur - prev))
            prev = cur
    return total


def _validate_request(req: PlanRequest) -> None:
    if config_in_collision(req.start, req.scene):
        raise ValueError("start configuration is in collision")
    if config_in_collision(req.goal, req.scene):
        raise ValueError("goal configuration is in collision")


def _backtrack(nodes, parents, idx) -> np.ndarray:
    out = []
    while idx >= 0:
        out.append(nodes[idx])
        idx = parents[idx]
    return np.asarray(out[::-1])


def rrt_plan(req: PlanRequest) -> tuple:
    """Classic RRT with goal bias; returns the first path into the goal ball."""
    _validate_request(req)
    t0 = time.perf_counter()
    if np.max(np.abs(req.start - req.goal)) <= req.goal_tolerance:
        path = Path(configs=req.start[None])
        return path, PlanStats(success=True, ee_path_length=0.0,
                               wall_time=time.perf_counter() - t0, tree_size=1)
    rng = np.random.default_rng(flat_seed(req.seed, 0x22))
    limits = req.scene.robot.joint_limits
    nodes = np.empty((req.iteration_budget + 1, 6))
    parents = np.full(req.iteration_budget + 1, -1, dtype=np.int64)
    nodes[0] = req.start
    n = 1
    for _ in range(req.iteration_budget):
        if rng.random() < req.goal_bias:
            target = req.goal
        else:
            target = rng.uniform(limits[:, 0], limits[:, 1])
        d = nodes[:n] - target
        near_idx = int(np.argmin(np.einsum("ij,ij->i", d, d)))
        near = nodes[near_idx]
        dist = float(np.linalg.norm(target - near))
        if dist < 1e-12:
            continue
        new = target if dist <= req.step_size else near + (req.step_size / dist) * (target - near)
        if edge_in_collision(near, new, req.scene, req.edge_step):
            continue
        nodes[n] = new
        parents[n] = near_idx
        n += 1
        if np.max(np.abs(new - req.goal)) <= req.goal_tolerance:
            path = Path(configs=_backtrack(nodes, parents, n - 1))
            stats = PlanStats(success=True,
                              ee_path_length=ee_path_length(path, req.scene.robot),
                              wall_time=time.perf_counter() - t0, tree_size=n)
            return path, stats
    return Path(configs=req.start[None]), PlanStats(
        success=False, wall_time=time.perf_counter() - t0, tree_size=n)


def rrt_star_plan(req: PlanRequest) -> tuple:
    """RRT* with shrinking near-neighbor radius and cost-propagating rewiring.

    Keeps improving after the first solution until the budget runs out or
    the best cost drops below stop_ratio * reference_cost.
    """
    _validate_request(req)
    t0 = time.perf_counter()
    if np.max(np.abs(req.start - req.goal)) <= req.goal_tolerance:
        path = Path(configs=req.start[None])
        return path, PlanStats(success=True, ee_path_length=0.0,
                               wall_time=time.perf_counter() - t0, tree_size=1)
    rng = np.random.default_rng(flat_seed(req.seed, 0x57A2))
    limits = req.scene.robot.joint_limits
    cap = req.iteration_budget + 1
    nodes = np.empty((cap, 6))
    parents = np.full(cap, -1, dtype=np.int64)
    costs = np.zeros(cap)
    children: list = [[] for _ in range(cap)]
    nodes[0] = req.start
    n = 1
    solutions: list = []
    d_dim = 6.0

    def best_solution():
        if not solutions:
            return None, np.inf
        idx = min(solutions, key=lambda i: costs[i])
        return idx, costs[idx]

    def propagate(idx, delta):
        stack = [idx]
        while stack:
            i = stack.pop()
            costs[i] += delta
            stack.extend(children[i])

    for _ in range(req.iteration_budget):
        if rng.random() < req.goal_bias:
            target = req.goal
        else:
            target = rng.uniform(limits[:, 0], limits[:, 1])
        diff = nodes[:n] - target
        d2 = np.einsum("ij,ij->i", diff, diff)
        near_idx = int(np.argmin(d2))
        near = nodes[near_idx]
        dist = float(np.linalg.norm(target - near))
        if dist < 1e-12:
            continue
        new = target if dist <= req.step_size else near + (req.step_size / dist) * (target - near)
        if edge_in_collision(near, new, req.scene, req.edge_step):
            continue
        radius = min(_RRT_STAR_GAMMA * (np.log(n + 1.0) / (n + 1.0)) ** (1.0 / d_dim),
                     _REWIRE_RADIUS_CAP)
        radius = max(radius, req.step_size)
        dn = np.linalg.norm(nodes[:n] - new, axis=1)
        near_set = np.nonzero(dn <= radius)[0]
        # cheapest collision-free parent among the near set
        parent = near_idx
        base = float(np.linalg.norm(new - near))
        best_cost = costs[near_idx] + base
        order = near_set[np.argsort(costs[near_set] + dn[near_set], kind="stable")]
        for j in order:
            cand = costs[j] + dn[j]
            if cand >= best_cost:
                break
            if not edge_in_collision(nodes[j], new, req.scene, req.edge_step):
                parent = int(j)
                best_cost = cand
                break
        nodes[n] = new
        parents[n] = parent
        costs[n] = best_cost
        children[parent].append(n)
        new_idx = n
        n += 1
        # rewire the near set through the new node
        for j in near_set:
            j = int(j)
            cand = best_cost + dn[j]
            if cand + 1e-12 < costs[j]:
                if not edge_in_collision(new, nodes[j], req.scene, req.edge_step):
                    children[parents[j]].remove(j)
                    parents[j] = new_idx
                    children[new_idx].append(j)
                    propagate(j, cand - costs[j])
        if np.max(np.abs(new - req.goal)) <= req.goal_tolerance:
            solutions.append(new_idx)
        if req.stop_ratio is not None and req.reference_cost is not None:
            _, c = best_solution()
            if c <= req.stop_ratio * req.reference_cost:
                break
    idx, _ = best_solution()
    if idx is None:
        return Path(configs=req.start[None]), PlanStats(
            success=False, wall_time=time.perf_counter() - t0, tree_size=n)
    path = Path(configs=_backtrack(nodes, parents, idx))
    stats = PlanStats(success=True, ee_path_length=ee_path_length(path, req.scene.robot),
                      wall_time=time.perf_counter() - t0, tree_size=n)
    return path, stats


def shortcut_path(path: Path, scene: Scene, attempts: int = 100, seed: int = 0,
                  edge_step: float = PLANNER_EDGE_STEP) -> Path:
    """Random-pair shortcutting; keeps the path collision-free and never
    lets the end-effector length grow."""
    if len(path) < 3:
        return path
    rng = np.random.default_rng(flat_seed(seed, 0x5C))
    configs = [c.copy() for c in path.configs]
    robot = scene.robot
    for _ in range(attempts):
        if len(configs) < 3:
            break
        i = int(rng.integers(0, len(configs) - 2))
        j = int(rng.integers(i + 2, len(configs)))
        if edge_in_collision(configs[i], configs[j], scene, edge_step):
            continue
        old = ee_path_length(Path(configs=np.asarray(configs[i:j + 1])), robot)
        new = ee_path_length(Path(configs=np.asarray([configs[i], configs[j]])), robot)
        if new <= old + 1e-12:
            configs = configs[:i + 1] + configs[j:]
    return Path(configs=np.asarray(configs), dt=path.dt)


def resample_path(path: Path, step: float = DEFAULT_STEP_SIZE) -> Path:
    """Re-space waypoints so consecutive configs differ by at most `step`
    in max-norm (uniform within each original segment)."""
    if len(path) < 2:
        return path
    out = [path.configs[0]]
    for a, b in zip(path.configs[:-1], path.configs[1:]):
        span = float(np.max(np.abs(b - a)))
        n = max(1, int(np.ceil(span / step)))
        for s in range(1, n + 1):
            out.append(a + (s / n) * (b - a))
    return Path(configs=np.asarray(out), dt=path.dt)


def sample_free_config(scene: Scene, rng, max_tries: int = 200) -> np.ndarray:
    """Rejection-sample a collision-free configuration within joint limits."""
    limits = scene.robot.joint_limits
    for _ in range(max_tries):
        q = rng.uniform(limits[:, 0], limits[:, 1])
        if not config_in_collision(q, scene):
            return q
    raise RuntimeError("could not sample a collision-free configuration")


@dataclass(eq=False)
class ExpertPath:
    """One oracle demonstration: resampled waypoints plus its snapshot."""

    scene_id: str
    goal: np.ndarray
    configs: np.ndarray        # (n, 6), uniform step spacing
    human: object = None       # HumanNodeSet or None
    path_id: int = 0


def generate_expert_dataset(workspaces, scenarios_per_ws: int, seed: int = 0,
                            iteration_budget: int = 1500,
                            shortcut_attempts: int = 80,
                            step: float = DEFAULT_STEP_SIZE,
                            human_provider=None,
                            log=None) -> list:
    """Plan expert demonstrations across workspaces.

    workspaces: list of (scene_id, Scene). For each scenario a collision-
    free start/goal pair is sampled, RRT* plans, the path is shortcut and
    resampled to uniform `step` spacing. `human_provider(ws_idx, s_idx,
    rng)` may return (HumanNodeSet, extra_capsules) to embed a predicted
    human into the scenario; the capsules join the planning scene.
    Scenarios whose plan times out are skipped (and logged).
    """
    out = []
    path_id = 0
    for ws_idx, (scene_id, scene) in enumerate(workspaces):
        for s_idx in range(scenarios_per_ws):
            rng = np.random.default_rng(flat_seed(seed, ws_idx, s_idx))
            human = None
            plan_scene = scene
            if human_provider is not None:
                provided = human_provider(ws_idx, s_idx, rng)
                if provided is not None:
                    human, extra_caps = provided
                    plan_scene = scene.with_human_capsules(
                        tuple(scene.human_capsules) + tuple(extra_caps))
            try:
                start = sample_free_config(plan_scene, rng)
                goal = sample_free_config(plan_scene, rng)
            except RuntimeError:
                if log:
                    log(f"skip {scene_id}/{s_idx}: no free start/goal")
                continue
            req = PlanRequest(start=start, goal=goal, scene=plan_scene,
                              iteration_budget=iteration_budget,
                              seed=int(rng.integers(0, 2**31)), step_size=step)
            path, stats = rrt_star_plan(req)
            if not stats.success:
                if log:
                    log(f"skip {scene_id}/{s_idx}: plan timeout")
                continue
            path = shortcut_path(path, plan_scene, attempts=shortcut_attempts,
                                 seed=int(rng.integers(0, 2**31)))
            path = resample_path(path, step=step)
            out.append(ExpertPath(scene_id=scene_id, goal=goal,
                                  configs=path.configs, human=human,
                                  path_id=path_id))
            path_id += 1
    return out
