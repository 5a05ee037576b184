"""Executable message-passing networks with certified constants and FD derivative probes.

Models are plain weight containers evaluated with numpy; no autodiff. The
finite-difference routines act as the empirical side of every bound check:
central differences with step 1e-5 for first derivatives and 1e-3 for the
cross second differences, where the f64 cancellation/truncation trade-off
sits near its optimum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .bounds import MixingConstants, build_message_matrix, mixing_bound
from .errors import CertificationError, DimensionMismatch, SquashscopeError
from .graphs import Graph, NodePair
from .spectral import eigendecompose

FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-3
MAX_TIE_GAP = 1e-6

ACTIVATIONS = ("tanh", "gelu", "identity")
READOUTS = ("sum", "mean", "max")

# documented certified bounds on max{|act'|, |act''|}
ACTIVATION_CSIGMA = {"tanh": 1.0, "identity": 1.0, "gelu": 1.13}

_SIGMOID_D1_SUP = 0.25
_SIGMOID_D2_SUP = 1.0 / (6.0 * math.sqrt(3.0))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_erf = np.vectorize(math.erf, otypes=[float])


def apply_activation(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "identity":
        return x
    if name == "gelu":
        # exact error-function form, not the tanh approximation
        return x * 0.5 * (1.0 + _erf(x / math.sqrt(2.0)))
    raise SquashscopeError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class LinearMessage:
    """Message c1_matrix @ x + c2_matrix @ y; zero Hessian by construction."""

    c1_matrix: np.ndarray
    c2_matrix: np.ndarray

    @property
    def family(self) -> str:
        return "linear"

    def evaluate_aggregate(self, a_values: np.ndarray, states: np.ndarray) -> np.ndarray:
        row_sums = a_values.sum(axis=1)
        return row_sums[:, None] * (states @ self.c1_matrix.T) + (a_values @ states) @ self.c2_matrix.T


@dataclass(frozen=True)
class GatedMessage:
    """Message sigmoid(g1 @ x + g2 @ y) * (u @ y); twice differentiable."""

    g1: np.ndarray
    g2: np.ndarray
    u: np.ndarray

    @property
    def family(self) -> str:
        return "gated"

    def evaluate_aggregate(self, a_values: np.ndarray, states: np.ndarray) -> np.ndarray:
        z1 = states @ self.g1.T
        z2 = states @ self.g2.T
        uy = states @ self.u.T
        gate = _sigmoid(z1[:, None, :] + z2[None, :, :])
        return np.einsum("vu,vuc,uc->vc", a_values, gate, uy)


@dataclass(frozen=True)
class MpnnLayer:
    omega: np.ndarray
    w: np.ndarray
    message: LinearMessage | GatedMessage


@dataclass(frozen=True)
class MpnnModel:
    """Concrete layer weights plus activation, readout, and unit-norm output vector."""

    layers: tuple[MpnnLayer, ...]
    activation: str
    readout: str
    theta: np.ndarray
    matrix_kind: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise SquashscopeError(f"unknown activation {self.activation!r}")
        if self.readout not in READOUTS:
            raise SquashscopeError(f"unknown readout {self.readout!r}")
        d = self.width
        for i, layer in enumerate(self.layers):
            shapes = [layer.omega.shape, layer.w.shape]
            if isinstance(layer.message, LinearMessage):
                shapes += [layer.message.c1_matrix.shape, layer.message.c2_matrix.shape]
            else:
                shapes += [layer.message.g1.shape, layer.message.g2.shape, layer.message.u.shape]
            for shape in shapes:
                if shape != (d, d):
                    raise DimensionMismatch(f"layer {i} has a {shape} matrix; expected {(d, d)}")
        norm = float(np.linalg.norm(self.theta))
        if abs(norm - 1.0) > 1e-12:
            raise SquashscopeError(f"theta must have unit norm within 1e-12, got {norm!r}")

    @property
    def width(self) -> int:
        return int(self.theta.shape[0])

    @property
    def depth(self) -> int:
        return len(self.layers)


def unit_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=float)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise SquashscopeError("cannot normalize the zero vector")
    return vec / norm


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------


def node_states(model: MpnnModel, g: Graph, features: np.ndarray) -> np.ndarray:
    """Run all layers and return the final node-state matrix."""
    x = np.asarray(features, dtype=float)
    if x.shape != (g.n, model.width):
        raise DimensionMismatch(
            f"features shape {x.shape} does not match (n, d) = {(g.n, model.width)}"
        )
    a_values = build_message_matrix(g, model.matrix_kind).values
    h = x
    for layer in model.layers:
        pre = h @ layer.omega.T + layer.message.evaluate_aggregate(a_values, h) @ layer.w.T
        h = apply_activation(model.activation, pre)
    return h


def readout_value(model: MpnnModel, states: np.ndarray) -> float:
    if model.readout == "sum":
        pooled = states.sum(axis=0)
    elif model.readout == "mean":
        pooled = states.mean(axis=0)
    else:
        pooled = states.max(axis=0)
    return float(model.theta @ pooled)


def forward(model: MpnnModel, g: Graph, features: np.ndarray) -> tuple[np.ndarray, float]:
    """Node states after every layer plus the scalar graph-level output."""
    states = node_states(model, g, features)
    return states, readout_value(model, states)


def check_max_readout_ties(model: MpnnModel, states: np.ndarray) -> None:
    """Reject inputs whose per-channel maxima are nearly tied under MAX readout."""
    if model.readout != "max" or states.shape[0] < 2:
        return
    top_two = np.sort(states, axis=0)[-2:, :]
    gaps = top_two[1] - top_two[0]
    if np.any(gaps <= MAX_TIE_GAP):
        channel = int(np.argmin(gaps))
        raise SquashscopeError(
            f"MAX readout tie in channel {channel}: gap {gaps[channel]:.3g} <= {MAX_TIE_GAP}; "
            "derivatives would straddle a nondifferentiable point"
        )


# ---------------------------------------------------------------------------
# Operator norms and constant certification
# ---------------------------------------------------------------------------


def operator_norm(matrix: np.ndarray, tol: float = 1e-13, max_iter: int = 2000) -> float:
    """Spectral norm via power iteration on the Gram matrix, residual-checked.

    Falls back to a full Jacobi eigendecomposition when the iteration stalls
    (near-degenerate top eigenvalues), so the result is always reliable.
    """
    m = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(m)):
        raise SquashscopeError("operator_norm: matrix has non-finite entries")
    if np.abs(m).max() == 0.0:
        return 0.0
    gram = m.T @ m
    scale = float(np.abs(gram).max())
    d = gram.shape[0]
    x = unit_vector(np.ones(d) + 1e-3 * np.arange(d))
    rho = 0.0
    for _ in range(max_iter):
        y = gram @ x
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        rho = float(x @ gram @ x)
        residual = float(np.linalg.norm(gram @ x - rho * x))
        if residual <= tol * max(scale, 1.0):
            return math.sqrt(max(rho + residual, 0.0))
    top = float(eigendecompose(gram, which_laplacian="gram").eigenvalues[-1])
    return math.sqrt(max(top, 0.0))


def _row_sum_norm(matrix: np.ndarray) -> float:
    return float(np.abs(matrix).sum(axis=1).max())


@dataclass(frozen=True)
class CertifiedConstants:
    """Mixing constants plus the per-layer norms and formulas that produced them."""

    constants: MixingConstants
    per_layer: tuple[dict, ...]
    domain_bound: float | None = None


def propagate_state_bound(model: MpnnModel, g: Graph, input_box: tuple[float, float]) -> list[float]:
    """Certified sup-norm bounds on node-state entries before each layer.

    Interval-arithmetic propagation through the layer map; tanh clamps to 1,
    gelu and identity pass the pre-activation bound through (|x*Phi(x)| <= |x|).
    """
    lo, hi = input_box
    a_values = build_message_matrix(g, model.matrix_kind).values
    agg_row_max = float(a_values.sum(axis=1).max())
    bound = max(abs(lo), abs(hi))
    bounds = [bound]
    for layer in model.layers:
        if isinstance(layer.message, LinearMessage):
            msg = (_row_sum_norm(layer.message.c1_matrix) + _row_sum_norm(layer.message.c2_matrix)) * bound
        else:
            msg = _row_sum_norm(layer.message.u) * bound
        pre = _row_sum_norm(layer.omega) * bound + _row_sum_norm(layer.w) * agg_row_max * msg
        bound = min(pre, 1.0) if model.activation == "tanh" else pre
        bounds.append(bound)
    return bounds


def certify_constants(
    model: MpnnModel,
    g: Graph | None = None,
    input_box: tuple[float, float] | None = None,
) -> CertifiedConstants:
    """Certified upper bounds on weight norms and message-function derivatives.

    Linear messages certify from operator norms alone. Gated messages also
    need the reachable input domain: the declared input box, tightened by
    state-bound propagation when a graph is supplied; the sigmoid derivative
    suprema (1/4 and 1/(6*sqrt(3))) then give conservative product-rule bounds.
    """
    has_gated = any(isinstance(layer.message, GatedMessage) for layer in model.layers)
    domain = None
    state_bounds = None
    if has_gated:
        if input_box is None:
            raise CertificationError(
                "gated message functions need a declared input box to bound the Hessian"
            )
        if g is not None:
            state_bounds = propagate_state_bound(model, g, input_box)
        elif model.activation == "tanh":
            domain = max(abs(input_box[0]), abs(input_box[1]), 1.0)
        else:
            raise CertificationError(
                f"cannot bound hidden states for activation {model.activation!r} without a graph"
            )
    omega = w = c1 = c2 = c2nd = 0.0
    per_layer = []
    for t, layer in enumerate(model.layers):
        omega_t = operator_norm(layer.omega)
        w_t = operator_norm(layer.w)
        entry = {"layer": t, "omega": omega_t, "w": w_t, "family": layer.message.family}
        if isinstance(layer.message, LinearMessage):
            c1_t = operator_norm(layer.message.c1_matrix)
            c2_t = operator_norm(layer.message.c2_matrix)
            c2nd_t = 0.0
        else:
            g1_n = operator_norm(layer.message.g1)
            g2_n = operator_norm(layer.message.g2)
            u_n = operator_norm(layer.message.u)
            layer_domain = state_bounds[t] if state_bounds is not None else domain
            gate_scale = _SIGMOID_D1_SUP * _row_sum_norm(layer.message.u) * layer_domain
            c1_t = gate_scale * g1_n
            c2_t = gate_scale * g2_n + u_n
            c2nd_t = (
                _SIGMOID_D2_SUP * _row_sum_norm(layer.message.u) * layer_domain * (g1_n + g2_n) ** 2
                + 2.0 * _SIGMOID_D1_SUP * u_n * (g1_n + g2_n)
            )
            entry.update({"g1": g1_n, "g2": g2_n, "u": u_n, "domain": layer_domain})
        entry.update({"c1": c1_t, "c2": c2_t, "c2nd": c2nd_t})
        per_layer.append(entry)
        omega = max(omega, omega_t)
        w = max(w, w_t)
        c1 = max(c1, c1_t)
        c2 = max(c2, c2_t)
        c2nd = max(c2nd, c2nd_t)
    constants = MixingConstants(
        omega=omega,
        w=w,
        c1=c1,
        c2=c2,
        c2nd=c2nd,
        c_sigma=ACTIVATION_CSIGMA[model.activation],
    )
    if state_bounds is not None:
        domain = max(state_bounds[:-1]) if state_bounds[:-1] else None
    return CertifiedConstants(constants=constants, per_layer=tuple(per_layer), domain_bound=domain)


# ---------------------------------------------------------------------------
# Finite-difference probes
# ---------------------------------------------------------------------------


def fd_jacobian(
    model: MpnnModel, g: Graph, features: np.ndarray, source: int, step: float = FD_STEP_FIRST
) -> np.ndarray:
    """Central-difference Jacobian blocks of final node states w.r.t. one input node.

    Returns an (n, d, d) array: block [v, alpha, beta] holds the derivative of
    state entry (v, alpha) in input entry (source, beta).
    """
    x = np.asarray(features, dtype=float)
    if not (0 <= source < g.n):
        raise SquashscopeError(f"source node {source} out of range")
    d = model.width
    blocks = np.zeros((g.n, d, d))
    for beta in range(d):
        x_plus = x.copy()
        x_minus = x.copy()
        x_plus[source, beta] += step
        x_minus[source, beta] -= step
        h_plus = node_states(model, g, x_plus)
        h_minus = node_states(model, g, x_minus)
        if not (np.all(np.isfinite(h_plus)) and np.all(np.isfinite(h_minus))):
            raise SquashscopeError("non-finite node states; weights explode under this input")
        blocks[:, :, beta] = (h_plus - h_minus) / (2.0 * step)
    return blocks


def _cross_difference(evaluate, x, v, u, alpha, beta, step):
    deltas = []
    for sv, su in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        x_mod = x.copy()
        x_mod[v, alpha] += sv * step
        x_mod[u, beta] += su * step
        deltas.append((sv * su, evaluate(x_mod)))
    return sum(sign * val for sign, val in deltas) / (4.0 * step * step)


def fd_mixing(
    model: MpnnModel, g: Graph, features: np.ndarray, pair: NodePair, step: float = FD_STEP_SECOND
) -> tuple[np.ndarray, float]:
    """Cross second derivatives of the graph output in the pair's features.

    Four-point central scheme per entry; returns the d x d block and its
    largest absolute entry (the empirical mixing at this input).
    """
    pair.check(g.n)
    x = np.asarray(features, dtype=float)
    if model.readout == "max":
        check_max_readout_ties(model, node_states(model, g, x))

    def evaluate(x_mod):
        states = node_states(model, g, x_mod)
        return readout_value(model, states)

    d = model.width
    hess = np.zeros((d, d))
    for alpha in range(d):
        for beta in range(d):
            hess[alpha, beta] = _cross_difference(evaluate, x, pair.v, pair.u, alpha, beta, step)
    if not np.all(np.isfinite(hess)):
        raise SquashscopeError("non-finite second differences; weights explode under this input")
    return hess, float(np.abs(hess).max())


def fd_node_hessian(
    model: MpnnModel, g: Graph, features: np.ndarray, pair: NodePair, step: float = FD_STEP_SECOND
) -> np.ndarray:
    """Cross second derivatives of every node state: (i, alpha, beta, gamma) tensor.

    Entry [i, alpha, beta, gamma] is the derivative of state (i, alpha) in
    x_v^beta and x_u^gamma.
    """
    pair.check(g.n)
    x = np.asarray(features, dtype=float)
    d = model.width
    tensor = np.zeros((g.n, d, d, d))

    for beta in range(d):
        for gamma in range(d):
            acc = np.zeros((g.n, d))
            for sv, su in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                x_mod = x.copy()
                x_mod[pair.v, beta] += sv * step
                x_mod[pair.u, gamma] += su * step
                acc += (sv * su) * node_states(model, g, x_mod)
            tensor[:, :, beta, gamma] = acc / (4.0 * step * step)
    return tensor


def node_hessian_norms(tensor: np.ndarray) -> np.ndarray:
    """Operator norm of each node's d x (d*d) Hessian block."""
    n, d = tensor.shape[0], tensor.shape[1]
    return np.array([operator_norm(tensor[i].reshape(d, d * d)) for i in range(n)])


def empirical_max_mixing(
    model: MpnnModel,
    g: Graph,
    pair: NodePair,
    input_box: tuple[float, float],
    samples: int,
    seed: int,
) -> float:
    """Sampled lower approximation of the maximal mixing over the input box.

    Mixes uniform draws with random corner assignments; per-sample seeds are
    derived by index, so enlarging `samples` never loses earlier candidates.
    """
    if samples < 1:
        raise SquashscopeError(f"need at least one sample, got {samples}")
    lo, hi = input_box
    if lo > hi:
        raise SquashscopeError(f"input box is empty: ({lo}, {hi})")
    sample_seeds = np.random.SeedSequence(entropy=seed, spawn_key=(0x4D58,)).generate_state(
        samples, dtype=np.uint64
    )
    best = 0.0
    for i in range(samples):
        rng = np.random.default_rng(int(sample_seeds[i]))
        if i % 4 == 3:
            x = lo + (hi - lo) * rng.integers(0, 2, size=(g.n, model.width)).astype(float)
        else:
            x = lo + (hi - lo) * rng.random((g.n, model.width))
        _, max_abs = fd_mixing(model, g, x, pair)
        best = max(best, max_abs)
    return best


def verify_bound(
    model: MpnnModel,
    g: Graph,
    pair: NodePair,
    input_box: tuple[float, float] = (0.0, 1.0),
    samples: int = 3,
    seed: int = 0,
    constants: MixingConstants | None = None,
) -> dict:
    """Compare sampled empirical mixing against the theoretical bound for one pair.

    Violations are reported, not raised. `constants` overrides certification
    (used to test the harness against deliberately wrong constants).
    """
    if model.depth < 1:
        raise SquashscopeError("bound verification needs at least one layer")
    if constants is None:
        constants = certify_constants(model, g=g, input_box=input_box).constants
    a = build_message_matrix(g, model.matrix_kind)
    report = mixing_bound(g, a, constants, model.depth, pair)
    theoretical = report.total_bound
    empirical = empirical_max_mixing(model, g, pair, input_box, samples, seed)
    tolerance = 1e-4 * max(1.0, theoretical)
    return {
        "pair": [pair.v, pair.u],
        "empirical": empirical,
        "theoretical": theoretical,
        "fd_tolerance": tolerance,
        "satisfied": bool(empirical <= theoretical + tolerance),
        "slack": theoretical - empirical,
    }


# ---------------------------------------------------------------------------
# Construction and serialization
# ---------------------------------------------------------------------------


def random_model(
    width: int,
    depth: int,
    family: str = "linear",
    activation: str = "tanh",
    readout: str = "sum",
    matrix_kind: str = "sym",
    seed: int = 0,
    scale: float = 0.5,
) -> MpnnModel:
    """Seeded random model; weights uniform in [-scale, scale], theta random unit."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x6D,)))

    def mat():
        return rng.uniform(-scale, scale, size=(width, width))

    layers = []
    for _ in range(depth):
        if family == "linear":
            message = LinearMessage(c1_matrix=mat(), c2_matrix=mat())
        elif family == "gated":
            message = GatedMessage(g1=mat(), g2=mat(), u=mat())
        else:
            raise SquashscopeError(f"unknown message family {family!r}")
        layers.append(MpnnLayer(omega=mat(), w=mat(), message=message))
    theta = unit_vector(rng.normal(size=width))
    return MpnnModel(
        layers=tuple(layers),
        activation=activation,
        readout=readout,
        theta=theta,
        matrix_kind=matrix_kind,
    )


def model_to_json_dict(model: MpnnModel) -> dict:
    def flat(matrix):
        return [float(v) for v in np.asarray(matrix).ravel()]

    layers = []
    for layer in model.layers:
        if isinstance(layer.message, LinearMessage):
            message = {
                "family": "linear",
                "c1": flat(layer.message.c1_matrix),
                "c2": flat(layer.message.c2_matrix),
            }
        else:
            message = {
                "family": "gated",
                "g1": flat(layer.message.g1),
                "g2": flat(layer.message.g2),
                "u": flat(layer.message.u),
            }
        layers.append({"omega": flat(layer.omega), "w": flat(layer.w), "message": message})
    return {
        "width": model.width,
        "activation": model.activation,
        "readout": model.readout,
        "matrix_kind": model.matrix_kind,
        "theta": [float(v) for v in model.theta],
        "layers": layers,
    }


def model_from_json_dict(data: dict) -> MpnnModel:
    d = int(data["width"])

    def mat(flat):
        arr = np.asarray(flat, dtype=float)
        if arr.size != d * d:
            raise SquashscopeError(f"weight array has {arr.size} entries; expected {d * d}")
        return arr.reshape(d, d)

    layers = []
    for spec in data["layers"]:
        message_spec = spec["message"]
        if message_spec["family"] == "linear":
            message = LinearMessage(c1_matrix=mat(message_spec["c1"]), c2_matrix=mat(message_spec["c2"]))
        elif message_spec["family"] == "gated":
            message = GatedMessage(
                g1=mat(message_spec["g1"]), g2=mat(message_spec["g2"]), u=mat(message_spec["u"])
            )
        else:
            raise SquashscopeError(f"unknown message family {message_spec['family']!r}")
        layers.append(MpnnLayer(omega=mat(spec["omega"]), w=mat(spec["w"]), message=message))
    return MpnnModel(
        layers=tuple(layers),
        activation=data["activation"],
        readout=data["readout"],
        theta=np.asarray(data["theta"], dtype=float),
        matrix_kind=data["matrix_kind"],
    )


def save_model(model: MpnnModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json_dict(model), fh)
        fh.write("\n")


def load_model(path: str) -> MpnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json_dict(json.load(fh))
