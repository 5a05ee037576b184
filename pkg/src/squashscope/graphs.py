"""Undirected simple graphs: representation, generators, I/O, combinatorial primitives.

Nodes are dense integers 0..n-1. Graphs are immutable after construction and
carry the results of connectivity and bipartiteness checks; a graph is
``validated`` when it is connected and non-bipartite, which is the standing
assumption of the spectral and bound machinery.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, GraphValidationError, ParseError

_RESAMPLE_CAP = 1000


@dataclass(frozen=True)
class NodePair:
    """An ordered pair of node indices."""

    v: int
    u: int

    def check(self, n: int, allow_equal: bool = False) -> None:
        if not (0 <= self.v < n and 0 <= self.u < n):
            raise GraphValidationError(f"pair ({self.v},{self.u}) out of range for n={n}")
        if self.v == self.u and not allow_equal:
            raise GraphValidationError(f"pair requires distinct nodes, got ({self.v},{self.u})")


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with cached adjacency, degrees and validation flags."""

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    edge_count: int
    connected: bool
    bipartite: bool

    @property
    def validated(self) -> bool:
        """True when the graph is connected and non-bipartite."""
        return self.connected and not self.bipartite

    def neighbors(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))


def from_edges(n: int, edges) -> Graph:
    """Build a graph from an iterable of (u, v) pairs, checking simple-graph invariants."""
    if n < 2:
        raise GraphValidationError(f"need at least 2 nodes, got n={n}")
    adj = np.zeros((n, n), dtype=np.int64)
    canonical = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise GraphValidationError(f"self-loop at node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphValidationError(f"edge ({u},{v}) out of range for n={n}")
        key = (min(u, v), max(u, v))
        if key in canonical:
            raise GraphValidationError(f"duplicate edge ({u},{v})")
        canonical.add(key)
        adj[u, v] = adj[v, u] = 1
    degrees = adj.sum(axis=1)
    connected, bipartite = _connectivity_and_bipartiteness(adj)
    adj.setflags(write=False)
    degrees.setflags(write=False)
    return Graph(
        n=n,
        edges=tuple(sorted(canonical)),
        adjacency=adj,
        degrees=degrees,
        edge_count=len(canonical),
        connected=connected,
        bipartite=bipartite,
    )


def _connectivity_and_bipartiteness(adj: np.ndarray) -> tuple[bool, bool]:
    """Single BFS 2-coloring; returns (connected, bipartite)."""
    n = adj.shape[0]
    color = np.full(n, -1, dtype=np.int64)
    color[0] = 0
    queue = deque([0])
    seen = 1
    bipartite = True
    while queue:
        v = queue.popleft()
        for u in np.flatnonzero(adj[v]):
            if color[u] == -1:
                color[u] = 1 - color[v]
                seen += 1
                queue.append(int(u))
            elif color[u] == color[v]:
                bipartite = False
    connected = seen == n
    if not connected:
        # bipartiteness of the remaining components does not matter for validation
        bipartite = True
    return connected, bipartite


def components(g: Graph) -> list[list[int]]:
    """Connected components as sorted node lists."""
    unvisited = set(range(g.n))
    out = []
    while unvisited:
        start = min(unvisited)
        comp = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for u in g.neighbors(v):
                if int(u) in unvisited - comp:
                    comp.add(int(u))
                    queue.append(int(u))
        out.append(sorted(comp))
        unvisited -= comp
    return out


def require_connected(g: Graph, operation: str = "operation") -> None:
    if not g.connected:
        raise GraphValidationError(
            f"{operation} requires a connected graph; components: {components(g)}"
        )


def require_validated(g: Graph, operation: str = "operation") -> None:
    require_connected(g, operation)
    if g.bipartite:
        raise GraphValidationError(f"{operation} requires a non-bipartite graph")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def generate(kind: str, n: int | None = None, seed: int | None = None, **params) -> Graph:
    """Generate a graph of the given kind.

    Deterministic for fixed (kind, params, seed). Randomized kinds
    (erdos_renyi, molecule_like) resample until the result is connected and
    non-bipartite, up to a cap of 1000 attempts.

    Kinds and parameters:
      path, cycle, complete        n
      tree                         arity, depth
      grid                         width, height
      erdos_renyi                  n, p, seed
      molecule_like                n, extra_cycles, seed
    """
    if kind == "path":
        _need_n(n, 2)
        return from_edges(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "cycle":
        _need_n(n, 3)
        return from_edges(n, [(i, (i + 1) % n) for i in range(n)])
    if kind == "complete":
        _need_n(n, 2)
        return from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if kind == "tree":
        return _tree(params.get("arity"), params.get("depth"))
    if kind == "grid":
        return _grid(params.get("width"), params.get("height"))
    if kind == "erdos_renyi":
        _need_n(n, 2)
        return _erdos_renyi(n, params.get("p"), seed)
    if kind == "molecule_like":
        _need_n(n, 3)
        return _molecule_like(n, params.get("extra_cycles", 1), seed)
    raise GenerationError(f"unknown graph kind {kind!r}")


def _need_n(n, minimum):
    if n is None or n < minimum:
        raise GenerationError(f"node count must be >= {minimum}, got {n}")


def _need_seed(seed):
    if seed is None:
        raise GenerationError("randomized generators require a seed")


def _tree(arity, depth) -> Graph:
    if arity is None or depth is None or arity < 1 or depth < 1:
        raise GenerationError(f"tree needs arity >= 1 and depth >= 1, got {arity!r}, {depth!r}")
    edges = []
    next_id = 1
    frontier = [0]
    for _ in range(depth):
        new_frontier = []
        for parent in frontier:
            for _ in range(arity):
                edges.append((parent, next_id))
                new_frontier.append(next_id)
                next_id += 1
        frontier = new_frontier
    return from_edges(next_id, edges)


def _grid(width, height) -> Graph:
    if width is None or height is None or width < 1 or height < 1 or width * height < 2:
        raise GenerationError(f"grid needs width*height >= 2, got {width!r}x{height!r}")
    edges = []
    for r in range(height):
        for c in range(width):
            v = r * width + c
            if c + 1 < width:
                edges.append((v, v + 1))
            if r + 1 < height:
                edges.append((v, v + width))
    return from_edges(width * height, edges)


def _erdos_renyi(n, p, seed) -> Graph:
    if p is None or not (0.0 < p <= 1.0):
        raise GenerationError(f"erdos_renyi needs edge probability in (0,1], got {p!r}")
    _need_seed(seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x45,)))
    for _ in range(_RESAMPLE_CAP):
        mask = rng.random((n, n)) < p
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
        if len(edges) < n - 1:
            continue
        g = from_edges(n, edges)
        if g.validated:
            return g
    raise GenerationError(
        f"no connected non-bipartite erdos_renyi graph after {_RESAMPLE_CAP} attempts "
        f"(n={n}, p={p}); try a larger p"
    )


def _molecule_like(n, extra_cycles, seed) -> Graph:
    """Uniform random labeled tree plus `extra_cycles` chord edges."""
    if extra_cycles is None or extra_cycles < 0:
        raise GenerationError(f"extra_cycles must be >= 0, got {extra_cycles!r}")
    max_chords = n * (n - 1) // 2 - (n - 1)
    if extra_cycles > max_chords:
        raise GenerationError(f"extra_cycles={extra_cycles} exceeds available chords ({max_chords})")
    _need_seed(seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x4D,)))
    for _ in range(_RESAMPLE_CAP):
        tree_edges = _pruefer_tree(n, rng)
        present = set(tree_edges)
        non_edges = [
            (i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present
        ]
        if extra_cycles:
            picks = rng.choice(len(non_edges), size=extra_cycles, replace=False)
            chords = [non_edges[int(i)] for i in picks]
        else:
            chords = []
        g = from_edges(n, tree_edges + chords)
        if g.validated:
            return g
    raise GenerationError(
        f"no connected non-bipartite molecule_like graph after {_RESAMPLE_CAP} attempts "
        f"(n={n}, extra_cycles={extra_cycles}); trees need at least one chord to carry an odd cycle"
    )


def _pruefer_tree(n, rng) -> list[tuple[int, int]]:
    """Decode a random Pruefer sequence into a uniform labeled tree."""
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, int(x)), max(leaf, int(x))))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, int(x))
    a, b = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((min(a, b), max(a, b)))
    return edges


# ---------------------------------------------------------------------------
# Distances and path counts
# ---------------------------------------------------------------------------


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Distances from `source` to every node; -1 for unreachable."""
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for u in g.neighbors(v):
            if dist[u] == -1:
                dist[u] = dist[v] + 1
                queue.append(int(u))
    return dist


def shortest_distance(g: Graph, pair: NodePair) -> int:
    """Geodesic distance between the pair's nodes."""
    require_connected(g, "shortest_distance")
    pair.check(g.n, allow_equal=True)
    if pair.v == pair.u:
        return 0
    return int(bfs_distances(g, pair.v)[pair.u])


def diameter(g: Graph) -> int:
    require_connected(g, "diameter")
    return int(max(bfs_distances(g, v).max() for v in range(g.n)))


def count_shortest_paths(g: Graph, pair: NodePair) -> int:
    """Number of shortest paths between two distinct nodes.

    Computed as the (v,u) entry of the r-th adjacency power for r the
    geodesic distance; walks of that exact length are necessarily simple,
    so the walk count equals the path count. Exact integer arithmetic.
    """
    require_connected(g, "count_shortest_paths")
    pair.check(g.n)
    r = shortest_distance(g, pair)
    neighbor_lists = [list(map(int, g.neighbors(v))) for v in range(g.n)]
    walks = [0] * g.n
    walks[pair.v] = 1
    for _ in range(r):
        nxt = [0] * g.n
        for v, count in enumerate(walks):
            if count:
                for u in neighbor_lists[v]:
                    nxt[u] += count
        walks = nxt
    return walks[pair.u]


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def save(g: Graph, path: str, format: str = "edge_list") -> None:
    """Write a graph to disk as whitespace edge list or JSON."""
    if format == "edge_list":
        lines = [f"{u} {v}" for u, v in g.edges]
        text = "# squashscope edge list\n" + "\n".join(lines) + "\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"n": g.n, "edges": [list(e) for e in g.edges]}, fh)
            fh.write("\n")
    else:
        raise ParseError(f"unknown graph format {format!r}")


def load(path: str, format: str | None = None) -> Graph:
    """Read a graph file; disconnected inputs load fine but are not validated."""
    if format is None:
        format = "json" if str(path).endswith(".json") else "edge_list"
    if format == "json":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict) or "n" not in data or "edges" not in data:
            raise ParseError("JSON graph needs keys 'n' and 'edges'")
        try:
            return from_edges(int(data["n"]), data["edges"])
        except GraphValidationError as exc:
            raise ParseError(str(exc)) from exc
    if format == "edge_list":
        edges = []
        max_node = -1
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                tokens = line.split()
                if len(tokens) != 2:
                    raise ParseError(f"expected 'u v', got {raw.strip()!r}", line=lineno)
                try:
                    u, v = int(tokens[0]), int(tokens[1])
                except ValueError:
                    raise ParseError(f"non-integer node id in {raw.strip()!r}", line=lineno)
                if u == v:
                    raise ParseError(f"self-loop at node {u}", line=lineno)
                if u < 0 or v < 0:
                    raise ParseError(f"negative node id in {raw.strip()!r}", line=lineno)
                edges.append((u, v))
                max_node = max(max_node, u, v)
        if max_node < 1:
            raise ParseError("edge list contains no edges")
        try:
            return from_edges(max_node + 1, edges)
        except GraphValidationError as exc:
            raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown graph format {format!r}")
