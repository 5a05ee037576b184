"""Synthetic mixing tasks: datasets, trainable templates, and trend ablations.

A desk-scale stand-in for molecule-regression benchmarks: sparse random
graphs with a handful of cycles, two designated scalar features per graph
placed by commute-time quantile, and four small trainable message-passing
templates with manually derived reverse-mode gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bounds import MixingConstants, build_message_matrix, osq_tilde
from .errors import SquashscopeError
from .graphs import Graph, NodePair, diameter, generate, shortest_distance
from .spectral import commute_time_spectral

TEMPLATES = {
    "gcn_like": ("sym", "linear"),
    "gin_like": ("raw", "linear"),
    "sage_like": ("rw", "linear"),
    "gated_like": ("sym", "gated"),
}

MIXING_KINDS = ("tanh_sum", "exp_sum")
ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

# companion over-squashing score: admissible unit constants, curvature off
REFERENCE_CONSTANTS = MixingConstants(omega=1.0, w=1.0, c1=1.0, c2=1.0, c2nd=0.0, c_sigma=1.0)

_TANH_PEAK_ARG = math.atanh(1.0 / math.sqrt(3.0))
_commute_cache: dict = {}
_matrix_cache: dict = {}


class TrainingDiverged(SquashscopeError):
    """Loss became non-finite during a restart."""


@dataclass(frozen=True)
class TaskSpec:
    mixing_kind: str
    input_interval: tuple[float, float]
    alpha: float
    graphs: tuple[Graph, ...]
    seed: int

    def __post_init__(self):
        if self.mixing_kind not in MIXING_KINDS:
            raise SquashscopeError(f"unknown mixing kind {self.mixing_kind!r}")
        lo, hi = self.input_interval
        if not lo < hi:
            raise SquashscopeError(f"input interval must satisfy lo < hi, got ({lo}, {hi})")
        if not 0.0 <= self.alpha <= 1.0:
            raise SquashscopeError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Instance:
    graph_index: int
    graph: Graph
    pair: NodePair
    x_v: float
    x_u: float
    target: float

    def features(self, width: int) -> np.ndarray:
        x = np.zeros((self.graph.n, width))
        x[self.pair.v, 0] = self.x_v
        x[self.pair.u, 0] = self.x_u
        return x


@dataclass(frozen=True)
class Dataset:
    spec: TaskSpec
    train: tuple[Instance, ...]
    test: tuple[Instance, ...]

    @property
    def instances(self) -> tuple[Instance, ...]:
        return self.train + self.test


@dataclass(frozen=True)
class TrainConfig:
    depth: int
    width: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    init_scale: float = 1.0
    self_init: float = 1.0
    clip_norm: float = 0.5
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("depth", "width", "batch_size", "restarts"):
            if getattr(self, name) < 1:
                raise SquashscopeError(f"{name} must be positive")
        if self.epochs < 0:
            raise SquashscopeError("epochs must be nonnegative")
        for name in ("learning_rate", "beta1", "beta2", "init_scale"):
            if getattr(self, name) <= 0:
                raise SquashscopeError(f"{name} must be positive")

    def to_json_dict(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "init_scale": self.init_scale,
            "self_init": self.self_init,
            "clip_norm": self.clip_norm,
            "restarts": self.restarts,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Corpus + dataset construction
# ---------------------------------------------------------------------------


def default_corpus(
    seed: int = 0,
    count: int = 200,
    n_range: tuple[int, int] = (22, 30),
    diameter_range: tuple[int | None, int | None] = (12, None),
) -> tuple[Graph, ...]:
    """Seeded corpus of sparse-with-cycles graphs standing in for molecule topologies.

    Sizes default to the upper end of the molecular regime and diameters to
    the stringy, chain-like shapes real molecules have: uniform random trees
    are bushier than molecular skeletons, so low-diameter draws are resampled
    away by default.
    """
    lo_diam, hi_diam = diameter_range
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xC0,)))
    graphs = []
    attempts = 0
    while len(graphs) < count:
        attempts += 1
        if attempts > 200 * count:
            raise SquashscopeError("corpus resampling cap exceeded; loosen diameter_range")
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        extra = int(rng.integers(1, 4))
        graph_seed = int(rng.integers(0, 2**62))
        g = generate("molecule_like", n=n, extra_cycles=extra, seed=graph_seed)
        diam = diameter(g)
        if (lo_diam is None or diam >= lo_diam) and (hi_diam is None or diam <= hi_diam):
            graphs.append(g)
    return tuple(graphs)


def _commute_table(g: Graph):
    key = (g.n, g.edges)
    if key not in _commute_cache:
        _commute_cache[key] = commute_time_spectral(g)
    return _commute_cache[key]


def _message_values(g: Graph, kind: str) -> np.ndarray:
    key = (g.n, g.edges, kind)
    if key not in _matrix_cache:
        _matrix_cache[key] = build_message_matrix(g, kind).values
    return _matrix_cache[key]


def select_pair_at_quantile(g: Graph, alpha: float, seed: int | None = None) -> NodePair:
    """The node pair sitting at the alpha-quantile of the commute-time distribution.

    All unordered pairs are ranked by commute time (ties broken by pair
    order); rank floor(alpha * (P - 1)) is returned. Deterministic; the seed
    argument is accepted for interface symmetry but never used.
    """
    if g.n < 2:
        raise SquashscopeError("pair selection needs at least 2 nodes")
    if not 0.0 <= alpha <= 1.0:
        raise SquashscopeError(f"alpha must lie in [0, 1], got {alpha}")
    tau = _commute_table(g).tau
    pairs = [(round(float(tau[v, u]), 9), v, u) for v in range(g.n) for u in range(v + 1, g.n)]
    pairs.sort()
    rank = math.floor(alpha * (len(pairs) - 1))
    _, v, u = pairs[rank]
    return NodePair(v, u)


def _target(kind: str, total: float) -> float:
    return math.tanh(total) if kind == "tanh_sum" else math.exp(total)


def build_dataset(spec: TaskSpec, split: float = 0.9) -> Dataset:
    """Features uniform on the interval, targets exact, seeded 90/10 split."""
    if not spec.graphs:
        raise SquashscopeError("need at least one graph")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(0xDA,)))
    lo, hi = spec.input_interval
    instances = []
    for index, g in enumerate(spec.graphs):
        pair = select_pair_at_quantile(g, spec.alpha)
        x_v, x_u = lo + (hi - lo) * rng.random(2)
        instances.append(
            Instance(
                graph_index=index,
                graph=g,
                pair=pair,
                x_v=float(x_v),
                x_u=float(x_u),
                target=_target(spec.mixing_kind, float(x_v + x_u)),
            )
        )
    order = rng.permutation(len(instances))
    cut = max(1, int(round(split * len(instances))))
    if cut >= len(instances):
        cut = len(instances) - 1 if len(instances) > 1 else len(instances)
    train = tuple(instances[i] for i in order[:cut])
    test = tuple(instances[i] for i in order[cut:])
    return Dataset(spec=spec, train=train, test=test)


def analytic_max_mixing(kind: str, interval: tuple[float, float]) -> float:
    """Closed-form supremum of |d^2 target / dx dy| over the feature box."""
    lo, hi = interval
    if not lo < hi:
        raise SquashscopeError(f"interval must satisfy lo < hi, got ({lo}, {hi})")
    if kind == "exp_sum":
        return math.exp(2.0 * hi)
    if kind != "tanh_sum":
        raise SquashscopeError(f"unknown mixing kind {kind!r}")

    def curvature(s):
        t = math.tanh(s)
        return abs(2.0 * t * (1.0 - t * t))

    candidates = [2.0 * lo, 2.0 * hi]
    for peak in (_TANH_PEAK_ARG, -_TANH_PEAK_ARG):
        if 2.0 * lo <= peak <= 2.0 * hi:
            candidates.append(peak)
    return max(curvature(s) for s in candidates)


def under_reach_floor(graphs) -> int:
    """Smallest depth at which no pair of any graph can under-reach."""
    return max(math.ceil(diameter(g) / 2) for g in graphs)


def task_depth_floor(dataset: Dataset) -> int:
    """Smallest depth avoiding under-reaching on the dataset's designated pairs."""
    return max(
        math.ceil(shortest_distance(inst.graph, inst.pair) / 2) for inst in dataset.instances
    )


# ---------------------------------------------------------------------------
# Trainable templates with manual reverse-mode gradients
# ---------------------------------------------------------------------------


def init_params(
    template: str, cfg: TrainConfig, seed: int, mean_degree: float = 1.0
) -> dict[str, np.ndarray]:
    """Seeded uniform [-s, s] weights with s = init_scale / sqrt(fan-in).

    The self-term starts near the identity so deep stacks stay trainable;
    aggregation weights count neighbor multiplicity in their fan-in, which
    matters for the unnormalized (sum) aggregation kind.
    """
    if template not in TEMPLATES:
        raise SquashscopeError(f"unknown template {template!r}; expected one of {sorted(TEMPLATES)}")
    kind, family = TEMPLATES[template]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x70,)))
    d = cfg.width
    s = cfg.init_scale / math.sqrt(d)
    agg_fan = d * (mean_degree if kind == "raw" else 1.0)
    s_agg = cfg.init_scale / math.sqrt(agg_fan)

    def mat(scale):
        return rng.uniform(-scale, scale, size=(d, d))

    params: dict[str, np.ndarray] = {}
    for t in range(cfg.depth):
        params[f"omega_{t}"] = cfg.self_init * np.eye(d) + mat(s)
        if family == "linear":
            params[f"w_{t}"] = mat(s_agg)
        else:
            params[f"g1_{t}"] = mat(s)
            params[f"g2_{t}"] = mat(s)
            params[f"u_{t}"] = mat(s_agg)
    params["theta"] = rng.uniform(-s, s, size=d)
    return params


class _Union:
    """Disjoint union of a batch of instance graphs: one flat node/edge arena.

    Aggregation runs as sparse matrix products: the block-diagonal
    message-passing matrix for node-to-node sums, and source/destination
    incidence matrices for the per-edge terms the gated family needs.
    """

    def __init__(self, instances, kind: str, width: int, dtype=np.float64):
        from scipy import sparse

        self.instances = list(instances)
        node_counts = [inst.graph.n for inst in self.instances]
        self.node_offsets = np.concatenate(([0], np.cumsum(node_counts)))
        self.n_total = int(self.node_offsets[-1])
        self.features = np.zeros((self.n_total, width), dtype=dtype)
        src_parts, dst_parts, coef_parts = [], [], []
        for b, inst in enumerate(self.instances):
            base = self.node_offsets[b]
            self.features[base + inst.pair.v, 0] = inst.x_v
            self.features[base + inst.pair.u, 0] = inst.x_u
            values = _message_values(inst.graph, kind)
            src, dst = np.nonzero(values)
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
            src_parts.append(src + base)
            dst_parts.append(dst + base)
            coef_parts.append(values[src, dst])
        self.src = np.concatenate(src_parts)
        self.dst = np.concatenate(dst_parts)
        coef = np.concatenate(coef_parts).astype(dtype)
        self.coef = coef[:, None]
        n, e = self.n_total, self.src.size
        self.matrix = sparse.csr_matrix((coef, (self.src, self.dst)), shape=(n, n))
        self.matrix_t = self.matrix.T.tocsr()
        ones = np.ones(e, dtype=dtype)
        self.inc_src = sparse.csr_matrix((ones, (self.src, np.arange(e))), shape=(n, e))
        self.inc_dst = sparse.csr_matrix((ones, (self.dst, np.arange(e))), shape=(n, e))
        self.targets = np.array([inst.target for inst in self.instances], dtype=dtype)
        self.graph_of_node = np.repeat(np.arange(len(self.instances)), node_counts)


def _forward_union(template: str, params: dict, cfg: TrainConfig, union: _Union):
    _, family = TEMPLATES[template]
    h = union.features
    caches = []
    for t in range(cfg.depth):
        if family == "linear":
            ah = union.matrix @ h
            agg = ah @ params[f"w_{t}"].T
            cache = (h, ah, None, None)
        else:
            z1 = h @ params[f"g1_{t}"].T
            z2 = h @ params[f"g2_{t}"].T
            uy = h @ params[f"u_{t}"].T
            gate = 0.5 * (1.0 + np.tanh(0.5 * (z1[union.src] + z2[union.dst])))
            agg = union.inc_src @ (union.coef * gate * uy[union.dst])
            cache = (h, gate, uy, None)
        h = np.tanh(h @ params[f"omega_{t}"].T + agg)
        caches.append((cache, h))
    pooled = np.maximum.reduceat(h, union.node_offsets[:-1], axis=0)
    # first per-segment argmax as a mask, for gradient routing
    hits = h == pooled[union.graph_of_node]
    running = np.cumsum(hits, axis=0)
    seg_base = np.concatenate(
        (np.zeros((1, h.shape[1]), dtype=np.int64), running[union.node_offsets[1:-1] - 1])
    )
    first_hit = hits & (running - seg_base[union.graph_of_node] == 1)
    y = pooled @ params["theta"]
    return y, (caches, first_hit, pooled)


def _backward_union(template: str, params: dict, cfg: TrainConfig, union: _Union, dy, ctx, grads):
    _, family = TEMPLATES[template]
    caches, first_hit, pooled = ctx
    grads["theta"][:] = dy @ pooled
    dh = first_hit * (dy[union.graph_of_node, None] * params["theta"][None, :])
    for t in range(cfg.depth - 1, -1, -1):
        (h_prev, aux1, aux2, _), h_next = caches[t]
        gp = dh * (1.0 - h_next * h_next)
        grads[f"omega_{t}"][:] = gp.T @ h_prev
        dh = gp @ params[f"omega_{t}"]
        if family == "linear":
            ah = aux1
            grads[f"w_{t}"][:] = gp.T @ ah
            dh = dh + union.matrix_t @ (gp @ params[f"w_{t}"])
        else:
            gate, uy = aux1, aux2
            gp_src = gp[union.src] * union.coef
            duy = union.inc_dst @ (gp_src * gate)
            dz = gp_src * uy[union.dst] * gate * (1.0 - gate)
            dz1 = union.inc_src @ dz
            dz2 = union.inc_dst @ dz
            grads[f"u_{t}"][:] = duy.T @ h_prev
            grads[f"g1_{t}"][:] = dz1.T @ h_prev
            grads[f"g2_{t}"][:] = dz2.T @ h_prev
            dh = (
                dh
                + duy @ params[f"u_{t}"]
                + dz1 @ params[f"g1_{t}"]
                + dz2 @ params[f"g2_{t}"]
            )
    return grads


def loss_and_grads(
    template: str, params: dict, cfg: TrainConfig, batch, grads: dict | None = None
) -> tuple[float, dict]:
    """Mean absolute error over the instances and its gradient in every parameter."""
    if not isinstance(batch, _Union):
        kind, _ = TEMPLATES[template]
        batch = _Union(batch, kind, cfg.width)
    if grads is None:
        grads = {name: np.zeros_like(value) for name, value in params.items()}
    y, ctx = _forward_union(template, params, cfg, batch)
    if not np.all(np.isfinite(y)):
        raise TrainingDiverged("non-finite prediction in batch")
    residual = y - batch.targets
    dy = np.sign(residual) / len(residual)
    _backward_union(template, params, cfg, batch, dy, ctx, grads)
    return float(np.mean(np.abs(residual))), grads


def predict(template: str, params: dict, cfg: TrainConfig, inst: Instance) -> float:
    kind, _ = TEMPLATES[template]
    dtype = next(iter(params.values())).dtype
    union = _Union([inst], kind, cfg.width, dtype=dtype)
    y, _ = _forward_union(template, params, cfg, union)
    return float(y[0])


def evaluate_mae(template: str, params: dict, cfg: TrainConfig, instances) -> float:
    kind, _ = TEMPLATES[template]
    dtype = next(iter(params.values())).dtype
    union = _Union(instances, kind, cfg.width, dtype=dtype)
    y, _ = _forward_union(template, params, cfg, union)
    return float(np.mean(np.abs(y - union.targets)))


class _FlatParams:
    """Parameter dict whose arrays are views into one contiguous buffer.

    Lets the optimizer run a handful of whole-buffer vector operations per
    step instead of a dozen per parameter tensor.
    """

    def __init__(self, params: dict[str, np.ndarray], dtype=np.float64):
        total = sum(v.size for v in params.values())
        self.flat = np.empty(total, dtype=dtype)
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, value in params.items():
            view = self.flat[offset : offset + value.size].reshape(value.shape)
            view[...] = value
            self.views[name] = view
            offset += value.size

    def zeros_like(self) -> "_FlatParams":
        return _FlatParams(
            {name: np.zeros_like(v) for name, v in self.views.items()}, dtype=self.flat.dtype
        )


class _Adam:
    """Adaptive-moment descent on a flat parameter vector."""

    def __init__(self, cfg: TrainConfig, size: int, dtype=np.float64):
        self.cfg = cfg
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.step_count = 0

    def step(self, flat_params: np.ndarray, flat_grads: np.ndarray) -> None:
        self.step_count += 1
        if self.cfg.clip_norm > 0:
            norm = float(np.linalg.norm(flat_grads))
            if norm > self.cfg.clip_norm:
                flat_grads = flat_grads * (self.cfg.clip_norm / norm)
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        self.m *= b1
        self.m += (1.0 - b1) * flat_grads
        self.v *= b2
        self.v += (1.0 - b2) * flat_grads * flat_grads
        m_hat = self.m / (1.0 - b1**self.step_count)
        v_hat = self.v / (1.0 - b2**self.step_count)
        flat_params -= self.cfg.learning_rate * m_hat / (np.sqrt(v_hat) + self.cfg.adam_eps)


@dataclass(frozen=True)
class RestartResult:
    train_mae_curve: tuple[float, ...]
    test_mae: float
    rel_mae: float


@dataclass(frozen=True)
class TrainResult:
    template: str
    restarts: tuple[RestartResult, ...]
    diverged: int

    @property
    def mae_mean(self) -> float:
        return float(np.mean([r.test_mae for r in self.restarts]))

    @property
    def mae_std(self) -> float:
        values = [r.test_mae for r in self.restarts]
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    @property
    def rel_mae_mean(self) -> float:
        return float(np.mean([r.rel_mae for r in self.restarts]))


def dataset_mean_degree(dataset: Dataset) -> float:
    return float(np.mean([2.0 * inst.graph.edge_count / inst.graph.n for inst in dataset.train]))


def _train_one_restart(template: str, dataset: Dataset, cfg: TrainConfig, restart: int) -> RestartResult:
    template_id = sorted(TEMPLATES).index(template)
    base = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x7E, template_id, restart))
    init_seed, shuffle_seed = (int(x) for x in base.generate_state(2, dtype=np.uint64))
    # single-precision training: plenty for MAE-level targets, twice the speed
    dtype = np.float32
    flat = _FlatParams(
        init_params(template, cfg, init_seed, mean_degree=dataset_mean_degree(dataset)),
        dtype=dtype,
    )
    grad_buf = flat.zeros_like()
    optimizer = _Adam(cfg, flat.flat.size, dtype=dtype)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    kind, _ = TEMPLATES[template]
    # fixed batch partition per restart; only the visiting order reshuffles
    partition = shuffle_rng.permutation(len(dataset.train))
    unions = [
        _Union(
            [dataset.train[i] for i in partition[s : s + cfg.batch_size]],
            kind,
            cfg.width,
            dtype=dtype,
        )
        for s in range(0, len(partition), cfg.batch_size)
    ]
    curve = []
    for _ in range(cfg.epochs):
        epoch_losses = []
        for b in shuffle_rng.permutation(len(unions)):
            loss, _ = loss_and_grads(template, flat.views, cfg, unions[b], grads=grad_buf.views)
            epoch_losses.append(loss)
            optimizer.step(flat.flat, grad_buf.flat)
        curve.append(float(np.mean(epoch_losses)))
    test_mae = evaluate_mae(template, flat.views, cfg, dataset.test)
    target_scale = float(np.mean([abs(inst.target) for inst in dataset.test]))
    return RestartResult(
        train_mae_curve=tuple(curve),
        test_mae=test_mae,
        rel_mae=test_mae / target_scale,
    )


def train(templates, dataset: Dataset, cfg: TrainConfig) -> dict[str, TrainResult]:
    """Train each template with `cfg.restarts` seeded restarts; deterministic per seed."""
    if not dataset.train or not dataset.test:
        raise SquashscopeError("dataset must have nonempty train and test splits")
    results = {}
    for template in templates:
        if template not in TEMPLATES:
            raise SquashscopeError(f"unknown template {template!r}")
        outcomes = []
        diverged = 0
        for restart in range(cfg.restarts):
            try:
                outcomes.append(_train_one_restart(template, dataset, cfg, restart))
            except TrainingDiverged:
                diverged += 1
        if not outcomes:
            raise TrainingDiverged(f"all restarts of {template} diverged")
        results[template] = TrainResult(template=template, restarts=tuple(outcomes), diverged=diverged)
    return results


# ---------------------------------------------------------------------------
# Companion over-squashing score and ablations
# ---------------------------------------------------------------------------


def mean_reference_osq(dataset: Dataset, kind: str, depth: int) -> float:
    """Mean over-squashing proxy of the dataset pairs at unit admissible constants."""
    values = []
    for inst in dataset.instances:
        a = build_message_matrix(inst.graph, kind)
        values.append(osq_tilde(inst.graph, a, REFERENCE_CONSTANTS, depth, inst.pair))
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.12g}"
    return str(x)


@dataclass(frozen=True)
class AblationResult:
    kind: str
    columns: tuple[str, ...]
    rows: tuple[dict, ...]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row[c]) for c in self.columns))
        return "\n".join(lines) + "\n"


_BASE_COLUMNS = ("grid_value", "model", "mae_mean", "mae_std", "rel_mae_mean", "osq_mean", "status")


def ablation(
    kind: str,
    grid=None,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    templates=None,
    corpus=None,
) -> AblationResult:
    """Sweep one factor (commute_time, depth, mixing) and report MAE plus mean OSQ.

    Cells that diverge are recorded with an error status rather than aborting
    the sweep. Rows come out sorted by grid value.
    """
    templates = sorted(TEMPLATES) if templates is None else list(templates)
    corpus = default_corpus(seed) if corpus is None else tuple(corpus)
    floor = under_reach_floor(corpus)
    if kind == "commute_time":
        grid = list(ALPHA_GRID) if grid is None else sorted(grid)
        rows = []
        for alpha in grid:
            dataset = build_dataset(
                TaskSpec("tanh_sum", (0.0, 1.0), alpha, corpus, seed)
            )
            run_cfg = replace(cfg or TrainConfig(depth=floor), depth=floor, seed=seed)
            rows.extend(_run_cell(str(alpha), dataset, run_cfg, templates))
        return AblationResult(kind, _BASE_COLUMNS, tuple(rows))
    if kind == "depth":
        dataset = build_dataset(TaskSpec("tanh_sum", (0.0, 1.0), 0.8, corpus, seed))
        if grid is None:
            grid = sorted({task_depth_floor(dataset), floor, 16})
        else:
            grid = sorted(grid)
        rows = []
        for depth in grid:
            run_cfg = replace(cfg or TrainConfig(depth=depth), depth=depth, seed=seed)
            rows.extend(_run_cell(str(depth), dataset, run_cfg, templates))
        return AblationResult(kind, _BASE_COLUMNS, tuple(rows))
    if kind == "mixing":
        grid = (
            [("tanh_sum", (0.0, 1.0)), ("exp_sum", (0.0, 1.0)), ("exp_sum", (0.0, 1.5))]
            if grid is None
            else list(grid)
        )
        rows = []
        for mixing_kind, interval in grid:
            dataset = build_dataset(TaskSpec(mixing_kind, interval, 0.8, corpus, seed))
            run_cfg = replace(cfg or TrainConfig(depth=floor), depth=floor, seed=seed)
            label = f"{mixing_kind}({interval[0]:g},{interval[1]:g})"
            analytic = analytic_max_mixing(mixing_kind, interval)
            for row in _run_cell(label, dataset, run_cfg, templates):
                row["analytic_mixing"] = analytic
                rows.append(row)
        return AblationResult(kind, _BASE_COLUMNS + ("analytic_mixing",), tuple(rows))
    raise SquashscopeError(f"unknown ablation kind {kind!r}")


def _run_cell(grid_value: str, dataset: Dataset, cfg: TrainConfig, templates) -> list[dict]:
    rows = []
    for template in templates:
        matrix_kind, _ = TEMPLATES[template]
        osq_mean = mean_reference_osq(dataset, matrix_kind, cfg.depth)
        try:
            result = train([template], dataset, cfg)[template]
            rows.append(
                {
                    "grid_value": grid_value,
                    "model": template,
                    "mae_mean": result.mae_mean,
                    "mae_std": result.mae_std,
                    "rel_mae_mean": result.rel_mae_mean,
                    "osq_mean": osq_mean,
                    "status": "ok" if result.diverged == 0 else f"diverged:{result.diverged}",
                }
            )
        except TrainingDiverged as exc:
            rows.append(
                {
                    "grid_value": grid_value,
                    "model": template,
                    "mae_mean": math.nan,
                    "mae_std": math.nan,
                    "rel_mae_mean": math.nan,
                    "osq_mean": osq_mean,
                    "status": f"error:{exc}",
                }
            )
    return rows
