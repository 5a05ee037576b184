"""Theoretical mixing bounds, over-squashing scores, and capacity lower bounds.

Everything here is a deterministic function of a graph, a message-passing
matrix, and certified constants. Matrix powers are cached per call; nothing
is approximated except where a closed spectral form is explicitly requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PremiseViolation, SquashscopeError
from .graphs import Graph, NodePair, require_connected
from .spectral import spectral_data, spectral_summary

MATRIX_KINDS = ("sym", "rw", "raw")


@dataclass(frozen=True)
class MessagePassingMatrix:
    """Nonnegative aggregation matrix whose support equals the adjacency support."""

    kind: str
    values: np.ndarray


@dataclass(frozen=True)
class MixingConstants:
    """Certified bounds on weight norms and message-function derivatives.

    omega bounds the self-term weights, w the aggregation weights, c1/c2 the
    message Jacobians in each argument, c2nd the message Hessian, and c_sigma
    the first two activation derivatives (1 for tanh and identity).
    """

    omega: float
    w: float
    c1: float
    c2: float
    c2nd: float = 0.0
    c_sigma: float = 1.0

    def __post_init__(self):
        for name in ("omega", "w", "c1", "c2", "c2nd", "c_sigma"):
            if getattr(self, name) < 0:
                raise SquashscopeError(f"constant {name} must be nonnegative")

    def to_json_dict(self) -> dict:
        return {
            "omega": self.omega,
            "w": self.w,
            "c1": self.c1,
            "c2": self.c2,
            "c2nd": self.c2nd,
            "c_sigma": self.c_sigma,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MixingConstants":
        known = {"omega", "w", "c1", "c2", "c2nd", "c_sigma"}
        unknown = set(data) - known
        if unknown:
            raise SquashscopeError(f"unknown constants fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class BoundReport:
    """Per-depth-index breakdown of the mixing bound for one node pair."""

    pair: NodePair
    depth: int
    kind: str
    per_k_terms: tuple[float, ...]
    total_bound: float
    osq_tilde: float
    note: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "pair": [self.pair.v, self.pair.u],
            "depth": self.depth,
            "kind": self.kind,
            "per_k_terms": list(self.per_k_terms),
            "total_bound": self.total_bound,
            "osq_tilde": serialize_extended(self.osq_tilde),
            "note": self.note,
        }


def serialize_extended(x: float):
    """Extended reals serialize with an explicit 'inf' string, never a float sentinel."""
    return "inf" if math.isinf(x) else x


def build_message_matrix(g: Graph, kind: str) -> MessagePassingMatrix:
    """Adjacency (raw), row-stochastic (rw), or symmetrically normalized (sym) matrix."""
    require_connected(g, "build_message_matrix")
    if kind not in MATRIX_KINDS:
        raise SquashscopeError(f"unknown matrix kind {kind!r}; expected one of {MATRIX_KINDS}")
    adj = g.adjacency.astype(float)
    if kind == "raw":
        values = adj
    elif kind == "rw":
        values = adj / g.degrees.astype(float)[:, None]
    else:
        d_inv_sqrt = 1.0 / np.sqrt(g.degrees.astype(float))
        values = adj * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    values.setflags(write=False)
    return MessagePassingMatrix(kind=kind, values=values)


def propagation_matrix(a: MessagePassingMatrix, c: MixingConstants) -> np.ndarray:
    """The one-layer information-flow operator: self-term, degree term, neighbor term."""
    if c.w == 0:
        raise SquashscopeError("w = 0 gives a degenerate capacity; the flow operator is undefined")
    row_sums = a.values.sum(axis=1)
    return (c.omega / c.w) * np.eye(a.values.shape[0]) + c.c1 * np.diag(row_sums) + c.c2 * a.values


def matrix_powers(s: np.ndarray, m: int) -> list[np.ndarray]:
    """All powers s^0 .. s^m, computed incrementally."""
    powers = [np.eye(s.shape[0])]
    for _ in range(m):
        powers.append(powers[-1] @ s)
    return powers


def message_hessian_term(
    a: MessagePassingMatrix,
    c: MixingConstants,
    m: int,
    k: int,
    powers: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Symmetric correction matrix carrying the message-function curvature at index k."""
    if not (0 <= k <= m - 1):
        raise SquashscopeError(f"index k={k} out of range for depth m={m}")
    s = propagation_matrix(a, c)
    if powers is None:
        powers = matrix_powers(s, m)
    ell = m - k - 1
    col_weight = powers[k].sum(axis=0)  # column sums of s^k
    p_k = powers[ell].T @ (col_weight[:, None] * (a.values @ powers[ell]))
    deg_plus_a = np.diag(a.values.sum(axis=1)) + a.values
    mixed_weight = col_weight @ deg_plus_a
    third = powers[ell].T @ (mixed_weight[:, None] * powers[ell])
    return p_k + p_k.T + third


def _bound_matrices(
    a: MessagePassingMatrix, c: MixingConstants, m: int
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-k bound matrices and their sum; entry (v,u) is the pairwise bound."""
    s = propagation_matrix(a, c)
    powers = matrix_powers(s, m)
    terms = []
    for k in range(m):
        col_weight = powers[k].sum(axis=0)
        first = powers[m - k].T @ (col_weight[:, None] * powers[m - k])
        term = c.w * first
        if c.c2nd > 0:
            term = term + c.c2nd * message_hessian_term(a, c, m, k, powers)
        terms.append((c.c_sigma * c.w) ** (2 * m - k - 1) * term)
    return terms, sum(terms)


def mixing_bound(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, pair: NodePair
) -> BoundReport:
    """Upper bound on the cross-Hessian of the graph output for one node pair.

    Zero total (infinite over-squashing) whenever the depth under-reaches the
    pair, i.e. 2m is smaller than their distance.
    """
    if m < 1:
        raise SquashscopeError(f"depth must be >= 1, got {m}")
    pair.check(g.n, allow_equal=True)
    note = (
        "column-sum weighting is asymmetric for the rw kind; the row-sum variant differs"
        if a.kind == "rw"
        else None
    )
    if c.w == 0:
        per_k = tuple(0.0 for _ in range(m))
        return BoundReport(pair, m, a.kind, per_k, 0.0, math.inf, note)
    terms, total = _bound_matrices(a, c, m)
    per_k = tuple(float(t[pair.v, pair.u]) for t in terms)
    total_vu = float(total[pair.v, pair.u])
    osq = math.inf if total_vu == 0.0 else 1.0 / total_vu
    return BoundReport(pair, m, a.kind, per_k, total_vu, osq, note)


def osq_tilde(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, pair: NodePair
) -> float:
    """Over-squashing proxy: reciprocal of the pairwise mixing bound."""
    return mixing_bound(g, a, c, m, pair).osq_tilde


def all_pairs_bound_totals(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int
) -> np.ndarray:
    """Matrix of bound totals over every ordered node pair (diagonal included)."""
    if m < 1:
        raise SquashscopeError(f"depth must be >= 1, got {m}")
    if c.w == 0:
        return np.zeros((g.n, g.n))
    _, total = _bound_matrices(a, c, m)
    return total


def osq_relative(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, pair: NodePair
) -> float:
    """Pair bound normalized by the best-mixed pair on the graph, then reciprocated.

    Always >= 1; equals 1 for the pair(s) achieving the maximal bound.
    """
    pair.check(g.n, allow_equal=True)
    totals = all_pairs_bound_totals(g, a, c, m)
    best = float(totals.max())
    if best == 0.0:
        raise SquashscopeError("every pair under-reaches; relative over-squashing is undefined")
    mine = float(totals[pair.v, pair.u])
    return math.inf if mine == 0.0 else best / mine


def osq_heatmap_csv(g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int) -> str:
    totals = all_pairs_bound_totals(g, a, c, m)
    lines = ["v,u,bound,osq_tilde"]
    for v in range(g.n):
        for u in range(v + 1, g.n):
            total = float(totals[v, u])
            osq = "inf" if total == 0.0 else f"{1.0 / total:.12g}"
            lines.append(f"{v},{u},{total:.12g},{osq}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class WeightBound:
    """Lower bounds on the weight norm needed to reach a target mixing at minimal depth."""

    pair: NodePair
    distance: int
    path_count: int
    depth: int
    exact: float
    degree_based: float

    def to_json_dict(self) -> dict:
        return {
            "pair": [self.pair.v, self.pair.u],
            "distance": self.distance,
            "path_count": self.path_count,
            "depth": self.depth,
            "exact": self.exact,
            "degree_based": self.degree_based,
        }


def min_weight_bound(
    g: Graph, pair: NodePair, c2: float, target_mixing: float, kind: str = "sym"
) -> WeightBound:
    """Minimal weight norm for a depth-minimal network to generate the target mixing.

    The exact form inverts the r-step entry of the aggregation matrix; the
    degree-based form replaces it with the shortest-path count over the
    minimal degree and is never larger.
    """
    from .graphs import count_shortest_paths, shortest_distance

    if target_mixing <= 0:
        raise SquashscopeError(f"target mixing must be positive, got {target_mixing}")
    if c2 <= 0:
        raise SquashscopeError(f"c2 must be positive, got {c2}")
    pair.check(g.n)
    r = shortest_distance(g, pair)
    a = build_message_matrix(g, kind)
    entry = float(np.linalg.matrix_power(a.values, r)[pair.v, pair.u])
    q = count_shortest_paths(g, pair)
    exact = (target_mixing / entry) ** (1.0 / r) / c2
    d_min = float(g.degrees.min())
    degree_based = (d_min / c2) * (target_mixing / q) ** (1.0 / r)
    return WeightBound(
        pair=pair,
        distance=r,
        path_count=q,
        depth=math.ceil(r / 2),
        exact=exact,
        degree_based=degree_based,
    )


def check_capacity_premise(c: MixingConstants, gamma: float) -> None:
    """The depth and spectral bounds need max{w, omega/w + c1*gamma + c2} <= 1."""
    tol = 1e-12
    if c.w <= 0:
        raise PremiseViolation("premise requires w > 0")
    if c.w > 1 + tol:
        raise PremiseViolation(f"premise w <= 1 fails: w = {c.w}")
    combined = c.omega / c.w + c.c1 * gamma + c.c2
    if combined > 1 + tol:
        raise PremiseViolation(
            f"premise omega/w + c1*gamma + c2 <= 1 fails: "
            f"{c.omega}/{c.w} + {c.c1}*{gamma:.6g} + {c.c2} = {combined:.6g}"
        )
    if c.c_sigma > 1 + tol:
        raise PremiseViolation(f"premise c_sigma <= 1 fails: c_sigma = {c.c_sigma}")


@dataclass(frozen=True)
class DepthBound:
    """Depth lower bound split into its commute-time part and the spectral correction."""

    pair: NodePair
    tau: float
    tau_term: float
    correction_term: float
    total: float
    mu: float
    lambda_1: float
    lambda_star: float
    gamma: float

    def to_json_dict(self) -> dict:
        return {
            "pair": [self.pair.v, self.pair.u],
            "tau": self.tau,
            "tau_term": self.tau_term,
            "correction_term": self.correction_term,
            "total": self.total,
            "mu": self.mu,
            "lambda_1": self.lambda_1,
            "lambda_star": self.lambda_star,
            "gamma": self.gamma,
        }


def min_depth_bound(
    g: Graph, pair: NodePair, c: MixingConstants, target_mixing: float
) -> DepthBound:
    """Minimal depth needed to generate the target mixing under bounded weights.

    Grows with the pair's commute time; the correction term involves the
    spectral gap and the message-function curvature. Returned unrounded; a
    non-positive total means no constraint binds beyond under-reaching.
    """
    from .graphs import shortest_distance
    from .spectral import commute_time_spectral

    if target_mixing <= 0:
        raise SquashscopeError(f"target mixing must be positive, got {target_mixing}")
    pair.check(g.n)
    summary = spectral_summary(g, c.c2)
    check_capacity_premise(c, summary.gamma)
    contraction = summary.contraction(c.c2)
    if contraction >= 1.0:
        raise PremiseViolation(
            f"premise |1 - c2*lambda*| < 1 fails: |1 - {c.c2}*{summary.lambda_star:.6g}| = {contraction:.6g}"
        )
    tau = float(commute_time_spectral(g).tau[pair.v, pair.u])
    r = shortest_distance(g, pair)
    mu = 1.0 + 2.0 * c.c2nd * (1.0 + summary.gamma)
    d_v = float(g.degrees[pair.v])
    d_u = float(g.degrees[pair.u])
    tau_term = tau / (4.0 * c.c2)
    bracket = target_mixing / (summary.gamma * mu) - (1.0 / c.c2) * (
        (summary.gamma + contraction ** (r - 1)) / summary.lambda_1 + 2.0 * c.c2nd / mu
    )
    correction = (g.edge_count / math.sqrt(d_v * d_u)) * bracket
    return DepthBound(
        pair=pair,
        tau=tau,
        tau_term=tau_term,
        correction_term=correction,
        total=tau_term + correction,
        mu=mu,
        lambda_1=summary.lambda_1,
        lambda_star=summary.lambda_star,
        gamma=summary.gamma,
    )


def spectral_mixing_bound(
    g: Graph, c: MixingConstants, m: int, pair: NodePair, kind: str = "sym"
) -> float:
    """Closed spectral form dominating the exact mixing bound under the capacity premise.

    Expressed through the normalized-Laplacian eigenpairs; requires a
    non-bipartite graph so the resolvent factor stays invertible.
    """
    if kind not in ("sym", "rw"):
        raise SquashscopeError(f"spectral bound supports kinds 'sym' and 'rw', got {kind!r}")
    if m < 1:
        raise SquashscopeError(f"depth must be >= 1, got {m}")
    pair.check(g.n, allow_equal=True)
    summary = spectral_summary(g, c.c2)
    check_capacity_premise(c, summary.gamma)
    k_exp, s_exp = (1, 1) if kind == "sym" else (4, 2)
    gamma = summary.gamma
    gamma_k = gamma**k_exp
    gamma_s = gamma**s_exp
    s = spectral_data(g, "normalized", nonbipartite=True)
    values = s.eigenvalues[1:]
    vectors = s.eigenvectors[:, 1:]
    z_values = 1.0 - c.c2 * values
    geom = (1.0 - z_values ** (2 * m)) / ((2.0 - c.c2 * values) * values)
    pair_products = vectors[pair.v, :] * vectors[pair.u, :]
    resolvent_sq = float(np.sum(z_values**2 * geom * pair_products))
    resolvent_shift = float(np.sum((1.0 + gamma_s - values) * geom * pair_products))
    d_v = float(g.degrees[pair.v])
    d_u = float(g.degrees[pair.u])
    mass = m * math.sqrt(d_v * d_u) / (2.0 * g.edge_count)
    first = gamma_k * (mass * (1.0 + 2.0 * c.c2nd * (1.0 + gamma_s)) + resolvent_sq / c.c2)
    second = 2.0 * (c.c2nd / c.c2) * gamma_k * resolvent_shift
    return first + second


def coupling_vector(
    a: MessagePassingMatrix, powers: list[np.ndarray], ell: int, pair: NodePair
) -> np.ndarray:
    """Per-node vector coupling walks from both pair endpoints through each node."""
    s_ell = powers[ell]
    a_s_ell = a.values @ s_ell
    deg_plus_a = np.diag(a.values.sum(axis=1)) + a.values
    sv, su = s_ell[:, pair.v], s_ell[:, pair.u]
    return sv * a_s_ell[:, pair.u] + su * a_s_ell[:, pair.v] + (deg_plus_a @ (sv * su))


def node_second_order_denominators(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, pair: NodePair
) -> np.ndarray:
    """Per-node mixing-bound denominators; their weighted sum rebuilds the pair bound."""
    if m < 1:
        raise SquashscopeError(f"depth must be >= 1, got {m}")
    pair.check(g.n, allow_equal=True)
    if c.w == 0:
        return np.zeros(g.n)
    s = propagation_matrix(a, c)
    powers = matrix_powers(s, m)
    denom = np.zeros(g.n)
    for k in range(m):
        s_mk = powers[m - k]
        weighted = powers[k] * (c.w ** (2 * m - k))
        denom += weighted @ (s_mk[:, pair.v] * s_mk[:, pair.u])
    if c.c2nd > 0:
        for ell in range(m):
            vec = coupling_vector(a, powers, ell, pair)
            denom += c.c2nd * (c.w ** (m + ell)) * (powers[m - 1 - ell] @ vec)
    return denom


def node_osq_first_order(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, pair: NodePair
) -> float:
    """Reciprocal first-derivative sensitivity proxy for node-level tasks."""
    if m < 0:
        raise SquashscopeError(f"depth must be >= 0, got {m}")
    pair.check(g.n, allow_equal=True)
    if c.w == 0:
        return math.inf
    s = propagation_matrix(a, c)
    entry = float(np.linalg.matrix_power(s, m)[pair.v, pair.u])
    denom = (c.c_sigma * c.w) ** m * entry
    return math.inf if denom == 0.0 else 1.0 / denom


def node_osq_second_order(
    g: Graph, a: MessagePassingMatrix, c: MixingConstants, m: int, node: int, pair: NodePair
) -> float:
    """Reciprocal second-order mixing proxy at one specific node."""
    if not (0 <= node < g.n):
        raise SquashscopeError(f"node {node} out of range for n={g.n}")
    denom = float(node_second_order_denominators(g, a, c, m, pair)[node])
    return math.inf if denom == 0.0 else 1.0 / denom


def score_rewiring(
    g_before: Graph,
    g_after: Graph,
    c: MixingConstants,
    m: int,
    pairs: list[NodePair],
    kind: str = "sym",
) -> list[dict]:
    """Per-pair over-squashing before and after a rewiring of the same node set."""
    if g_before.n != g_after.n:
        raise SquashscopeError(
            f"rewiring must preserve the node set: {g_before.n} != {g_after.n}"
        )
    a_before = build_message_matrix(g_before, kind)
    a_after = build_message_matrix(g_after, kind)
    out = []
    for pair in pairs:
        before = osq_tilde(g_before, a_before, c, m, pair)
        after = osq_tilde(g_after, a_after, c, m, pair)
        if math.isinf(before) and math.isinf(after):
            delta = 0.0
        else:
            delta = after - before
        out.append(
            {
                "pair": [pair.v, pair.u],
                "osq_before": serialize_extended(before),
                "osq_after": serialize_extended(after),
                "delta": serialize_extended(delta),
            }
        )
    return out
