"""Graph-network one-step planner and bi-directional online planning.

Five graph-convolution layers propagate node features through the
normalized adjacency, global sum pooling collapses the node embeddings,
and a linear head emits the next joint configuration (in normalized joint
units). Training imitates the sampling-based expert one step at a time;
planning grows a branch from the start and one from the goal, attempting a
straight-line connection every iteration.

All arithmetic is float64 numpy with hand-written backpropagation.
"""

import copy
import time
from dataclasses import dataclass

import numpy as np

from .arm_models import AnthropometricParams, RobotGeometry
from .collision import DEFAULT_EDGE_STEP, Scene, config_in_collision, edge_in_collision
from .errors import DivergenceError, ShapeMismatch
from .netutil import Adam, flat_seed, load_weight_file, save_weight_file
from .oracle_planners import (PLANNER_EDGE_STEP, Path, PlanStats,
                              ee_path_length, resample_path)
from .workspace_graph import (GraphSchema, WorkspaceGraph, build_graph,
                              normalized_adjacency)

GNN_VERSION = "gnn-planner-v1"
DEFAULT_MAX_STEP = 0.1  # rad, one-step motion bound


@dataclass(eq=False)
class GnnWeights:
    """Per-layer propagation weights plus the pooled output head."""

    widths: tuple            # (in, h1, ..., hL)
    thetas: list             # thetas[l]: (widths[l], widths[l+1])
    biases: list             # biases[l]: (widths[l+1],)
    head_W: np.ndarray       # (widths[-1], 6)
    head_b: np.ndarray       # (6,)
    version: str = GNN_VERSION

    def __post_init__(self):
        widths = tuple(int(x) for x in self.widths)
        object.__setattr__(self, "widths", widths)
        for l in range(len(widths) - 1):
            if self.thetas[l].shape != (widths[l], widths[l + 1]):
                raise ShapeMismatch(f"theta[{l}] must be {(widths[l], widths[l + 1])}")
            if self.biases[l].shape != (widths[l + 1],):
                raise ShapeMismatch(f"bias[{l}] must be {(widths[l + 1],)}")
        if self.head_W.shape[0] != widths[-1]:
            raise ShapeMismatch("head_W does not chain with the last layer")

    @property
    def n_layers(self) -> int:
        return len(self.thetas)

    @property
    def output_size(self) -> int:
        return self.head_W.shape[1]

    def param_list(self) -> list:
        out = []
        for th, b in zip(self.thetas, self.biases):
            out.extend([th, b])
        out.extend([self.head_W, self.head_b])
        return out

    def copy(self) -> "GnnWeights":
        return copy.deepcopy(self)


def init_gnn_weights(feature_width: int = 6, hidden: int = 64, layers: int = 5,
                     output_size: int = 6, seed: int = 0) -> GnnWeights:
    rng = np.random.default_rng([seed, 0x6E4])
    widths = (feature_width,) + (hidden,) * layers
    thetas, biases = [], []
    for l in range(layers):
        k = np.sqrt(2.0 / widths[l])
        thetas.append(rng.normal(0.0, k, (widths[l], widths[l + 1])))
        biases.append(np.zeros(widths[l + 1]))
    head_W = rng.normal(0.0, 1.0 / np.sqrt(widths[-1]), (widths[-1], output_size))
    head_b = np.zeros(output_size)
    return GnnWeights(widths=widths, thetas=thetas, biases=biases,
                      head_W=head_W, head_b=head_b)


def _forward_batch(H, Ahat, w: GnnWeights, want_cache: bool):
    """H: (B, T, F); Ahat: (T, T) shared or (B, T, T). Returns (out, cache)."""
    if H.shape[2] != w.widths[0]:
        raise ShapeMismatch(f"feature width {H.shape[2]} != {w.widths[0]}")
    cache = {"AH": [], "mask": [], "h": H} if want_cache else None
    h = H
    for l in range(w.n_layers):
        ah = np.matmul(Ahat, h)
        z = ah @ w.thetas[l] + w.biases[l]
        mask = z > 0.0
        h = np.where(mask, z, 0.0)
        if want_cache:
            cache["AH"].append(ah)
            cache["mask"].append(mask)
    g = h.sum(axis=1)
    out = g @ w.head_W + w.head_b
    if want_cache:
        cache["g"] = g
        cache["h_last"] = h
    return out, cache


def gnn_forward(graph: WorkspaceGraph, w: GnnWeights) -> np.ndarray:
    """Raw network output (normalized joint units) for one graph."""
    Ahat = normalized_adjacency(graph.A)
    out, _ = _forward_batch(graph.H[None], Ahat, w, want_cache=False)
    return out[0]


def _backward_batch(dout, Ahat, w: GnnWeights, cache):
    """Gradients for `_forward_batch`; dout: (B, out). Returns a flat list."""
    B = dout.shape[0]
    dg = dout @ w.head_W.T
    d_head_W = cache["g"].T @ dout
    d_head_b = dout.sum(axis=0)
    T = cache["h_last"].shape[1]
    dh = np.broadcast_to(dg[:, None, :], (B, T, dg.shape[1])).copy()
    d_thetas = [None] * w.n_layers
    d_biases = [None] * w.n_layers
    AhatT = np.swapaxes(Ahat, -1, -2)  # symmetric, kept explicit
    for l in range(w.n_layers - 1, -1, -1):
        dz = np.where(cache["mask"][l], dh, 0.0)
        ah = cache["AH"][l]
        d_thetas[l] = np.tensordot(ah, dz, axes=([0, 1], [0, 1]))
        d_biases[l] = dz.sum(axis=(0, 1))
        dah = dz @ w.thetas[l].T
        dh = np.matmul(AhatT, dah)
    grads = []
    for l in range(w.n_layers):
        grads.extend([d_thetas[l], d_biases[l]])
    grads.extend([d_head_W, d_head_b])
    return grads


def planner_loss(paths, w: GnnWeights) -> float:
    """Imitation loss: mean over paths of the summed squared one-step errors.

    `paths` is a list of paths; each path is a list of (WorkspaceGraph,
    next_config) pairs. Errors are computed on raw outputs against labels
    in normalized joint units.
    """
    if not paths:
        raise ValueError("need at least one path")
    total = 0.0
    for steps in paths:
        s = 0.0
        for graph, label in steps:
            scale = graph.schema.angle_scale
            out = gnn_forward(graph, w)
            err = np.asarray(label, dtype=np.float64) / scale - out
            s += float(np.dot(err, err))
        total += s
    return total / len(paths)


@dataclass(eq=False)
class PreppedPath:
    """Graph tensors of one expert path: shared adjacency, per-step features."""

    H: np.ndarray        # (n_steps, T, F)
    Ahat: np.ndarray     # (T, T)
    labels: np.ndarray   # (n_steps, 6), normalized joint units


def prep_planner_dataset(expert_paths, scenes: dict, schema: GraphSchema,
                         robot: RobotGeometry, both_directions: bool = True) -> list:
    """Turn expert demonstrations into training tensors.

    Each demonstration contributes one prepared path per direction (the
    reverse of an optimal path is equally optimal, and the goal branch of
    the online planner consumes exactly that distribution).
    """
    prepped = []
    for ep in expert_paths:
        scene = scenes[ep.scene_id]
        variants = [(ep.configs, ep.configs[-1])]
        if both_directions and len(ep.configs) > 1:
            variants.append((ep.configs[::-1], ep.configs[0]))
        for configs, goal in variants:
            n = len(configs) - 1
            if n < 1:
                continue
            graphs = [build_graph(configs[i], goal, scene, ep.human, schema, robot)
                      for i in range(n)]
            H = np.stack([g.H for g in graphs])
            Ahat = normalized_adjacency(graphs[0].A)
            labels = np.asarray(configs[1:], dtype=np.float64) / schema.angle_scale
            prepped.append(PreppedPath(H=H, Ahat=Ahat, labels=labels))
    return prepped


@dataclass(eq=False)
class PlannerHyper:
    """Training knobs for the graph planner."""

    lr: float = 1e-3
    batch: int = 256
    epochs: int = 12
    seed: int = 0
    hidden: int = 64
    layers: int = 5
    val_fraction: float = 0.1
    pair_cap_per_epoch: int = 12000  # transitions per epoch; 0 = all


def train_planner(prepped_paths, hyper: PlannerHyper):
    """Seeded mini-batch Adam on the one-step imitation loss.

    Batches sample transitions uniformly, which optimizes the per-path loss
    up to a constant factor; validation uses the exact per-path form on
    held-out paths. Returns (best-validation weights, history).
    """
    if not prepped_paths:
        raise ValueError("expert dataset is empty")
    rng = np.random.default_rng(flat_seed(hyper.seed, 0x91))
    order = rng.permutation(len(prepped_paths))
    n_val = max(1, int(round(hyper.val_fraction * len(prepped_paths))))
    val_paths = [prepped_paths[i] for i in order[:n_val]]
    train_paths = [prepped_paths[i] for i in order[n_val:]]
    if not train_paths:
        train_paths = val_paths

    F = train_paths[0].H.shape[2]
    w = init_gnn_weights(feature_width=F, hidden=hyper.hidden,
                         layers=hyper.layers, seed=hyper.seed)
    H_all = np.concatenate([p.H for p in train_paths])
    y_all = np.concatenate([p.labels for p in train_paths])
    path_of = np.concatenate([np.full(len(p.labels), i, dtype=np.int64)
                              for i, p in enumerate(train_paths)])
    Ahat_all = np.stack([p.Ahat for p in train_paths])

    def val_loss_fn():
        total = 0.0
        for p in val_paths:
            out, _ = _forward_batch(p.H, p.Ahat, w, want_cache=False)
            err = p.labels - out
            total += float(np.sum(err * err))
        return total / len(val_paths)

    opt = Adam(w.param_list(), lr=hyper.lr)
    history = []
    best_val = np.inf
    best = w.copy()
    n_pairs = H_all.shape[0]
    for epoch in range(hyper.epochs):
        order = rng.permutation(n_pairs)
        if hyper.pair_cap_per_epoch and order.size > hyper.pair_cap_per_epoch:
            order = order[:hyper.pair_cap_per_epoch]
        losses = []
        for s in range(0, order.size, hyper.batch):
            idx = order[s:s + hyper.batch]
            Hb = H_all[idx]
            Ab = Ahat_all[path_of[idx]]
            yb = y_all[idx]
            out, cache = _forward_batch(Hb, Ab, w, want_cache=True)
            err = out - yb
            loss = float(np.mean(np.sum(err * err, axis=1)))
            if not np.isfinite(loss):
                raise DivergenceError(f"planner loss became {loss} at epoch {epoch}")
            dout = (2.0 / idx.size) * err
            grads = _backward_batch(dout, Ab, w, cache)
            opt.step(grads)
            losses.append(loss)
        vl = val_loss_fn()
        if not np.isfinite(vl):
            raise DivergenceError(f"validation loss became {vl}")
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": vl})
        if vl < best_val:
            best_val = vl
            best = w.copy()
    return best, history


@dataclass(frozen=True, eq=False)
class PlannerStep:
    """One proposed step: clamped candidate plus the raw network output."""

    candidate: np.ndarray
    raw: np.ndarray


def plan_step(c, goal, scene: Scene, pred, w: GnnWeights, schema: GraphSchema,
              robot: RobotGeometry, max_step: float = DEFAULT_MAX_STEP,
              p_h: AnthropometricParams | None = None) -> PlannerStep:
    """Network proposal for the next configuration, displacement- and
    limit-clamped. `pred` is a HumanNodeSet, UncertainPrediction, or None."""
    c = np.asarray(c, dtype=np.float64).reshape(6)
    graph = build_graph(c, goal, scene, pred, schema, robot, p_h=p_h)
    raw = gnn_forward(graph, w) * schema.angle_scale
    delta = raw - c
    span = float(np.max(np.abs(delta)))
    if span > max_step:
        delta = delta * (max_step / span)
    limits = scene.robot.joint_limits
    cand = np.clip(c + delta, limits[:, 0], limits[:, 1])
    return PlannerStep(candidate=cand, raw=raw)


@dataclass(eq=False)
class PlanOptions:
    """Online planning knobs."""

    max_iters: int = 400
    max_step: float = DEFAULT_MAX_STEP
    edge_step: float = PLANNER_EDGE_STEP
    perturb_tries: int = 10
    stuck_eps: float = 1e-4
    stuck_patience: int = 10
    seed: int = 0


def plan_bidirectional(start, goal, scene_provider, w: GnnWeights,
                       schema: GraphSchema, opts: PlanOptions | None = None,
                       pred=None, p_h: AnthropometricParams | None = None) -> tuple:
    """Grow start- and goal-rooted branches with one-step proposals,
    attempting a straight-line connection before every iteration.

    Each branch's graph uses the opposite branch tip as its goal, so one
    trained network drives both directions. A colliding proposal falls back
    to a few seeded random perturbations within the step bound; if both
    tips stall for `stuck_patience` iterations the query fails.
    """
    opts = opts or PlanOptions()
    t0 = time.perf_counter()
    scene = scene_provider() if callable(scene_provider) else scene_provider
    robot = scene.robot
    start = np.asarray(start, dtype=np.float64).reshape(6)
    goal = np.asarray(goal, dtype=np.float64).reshape(6)
    if config_in_collision(start, scene):
        raise ValueError("start configuration is in collision")
    if config_in_collision(goal, scene):
        raise ValueError("goal configuration is in collision")
    rng = np.random.default_rng(flat_seed(opts.seed, 0xB1D1))
    fwd = [start]
    bwd = [goal]
    stuck = 0

    def stitch():
        tips_equal = np.array_equal(fwd[-1], bwd[-1])
        tail = bwd[:-1] if tips_equal else bwd
        configs = np.asarray(fwd + tail[::-1])
        # the connection edge can be long; resample so one path step is at
        # most one control-tick motion
        path = resample_path(Path(configs=configs), step=opts.max_step)
        stats = PlanStats(success=True,
                          ee_path_length=ee_path_length(path, robot),
                          wall_time=time.perf_counter() - t0,
                          tree_size=len(fwd) + len(bwd))
        return path, stats

    for _ in range(opts.max_iters):
        if callable(scene_provider):
            scene = scene_provider()
        if not edge_in_collision(fwd[-1], bwd[-1], scene, opts.edge_step):
            return stitch()
        moved = 0.0
        for branch, target in ((fwd, bwd[-1]), (bwd, fwd[-1])):
            c = branch[-1]
            step = plan_step(c, target, scene, pred, w, schema, robot,
                             max_step=opts.max_step, p_h=p_h)
            cand = step.candidate
            ok = not edge_in_collision(c, cand, scene, opts.edge_step)
            if not ok:
                base_delta = cand - c
                for _ in range(opts.perturb_tries):
                    delta = base_delta + rng.uniform(-opts.max_step,
                                                     opts.max_step, 6)
                    span = float(np.max(np.abs(delta)))
                    if span > opts.max_step:
                        delta = delta * (opts.max_step / span)
                    limits = robot.joint_limits
                    trial = np.clip(c + delta, limits[:, 0], limits[:, 1])
                    if not edge_in_collision(c, trial, scene, opts.edge_step):
                        cand = trial
                        ok = True
                        break
            if ok:
                branch.append(cand)
                moved = max(moved, float(np.max(np.abs(cand - c))))
        if moved < opts.stuck_eps:
            stuck += 1
            if stuck >= opts.stuck_patience:
                return Path(configs=start[None]), PlanStats(
                    success=False, wall_time=time.perf_counter() - t0,
                    tree_size=len(fwd) + len(bwd), failure_reason="stuck")
        else:
            stuck = 0
    return Path(configs=start[None]), PlanStats(
        success=False, wall_time=time.perf_counter() - t0,
        tree_size=len(fwd) + len(bwd), failure_reason="timeout")


def replan_trigger(path_remainder: Path, scene: Scene,
                   step: float = DEFAULT_EDGE_STEP) -> bool:
    """True iff any remaining edge of the path collides with the scene.

    The scene's human capsules are expected to contain every predicted
    pose, so rising uncertainty widens the swept set and fires earlier.
    """
    configs = path_remainder.configs
    if len(configs) == 0:
        return False
    if len(configs) == 1:
        return config_in_collision(configs[0], scene)
    for a, b in zip(configs[:-1], configs[1:]):
        if edge_in_collision(a, b, scene, step):
            return True
    return False
