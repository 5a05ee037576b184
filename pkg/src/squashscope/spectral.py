"""Spectral graph machinery: eigendecomposition, commute times, effective resistance.

Two independent routes compute the commute time: the Lovasz spectral formula
over the normalized Laplacian, and effective resistance through the dense
inverse of the shifted combinatorial Laplacian. A seeded random-walk
estimator provides a third, statistical cross-check.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SquashscopeError
from .graphs import Graph, NodePair, require_connected, require_validated

_JACOBI_SWEEP_CAP = 100
_JACOBI_REL_TOL = 1e-12
_KERNEL_REL_TOL = 1e-9
_WALK_STEP_CAP = 10_000_000


@dataclass(frozen=True)
class SpectralData:
    """Eigenpairs of a graph Laplacian, eigenvalues ascending, eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    which_laplacian: str


@dataclass(frozen=True)
class CommuteTable:
    """Pairwise commute times and effective resistances; tau = 2|E| * resistance."""

    tau: np.ndarray
    resistance: np.ndarray

    def to_csv(self) -> str:
        n = self.tau.shape[0]
        lines = ["row,col,tau,resistance"]
        for v in range(n):
            for u in range(v + 1, n):
                lines.append(f"{v},{u},{self.tau[v, u]:.12g},{self.resistance[v, u]:.12g}")
        return "\n".join(lines) + "\n"


def normalized_laplacian(g: Graph) -> np.ndarray:
    d_inv_sqrt = 1.0 / np.sqrt(g.degrees.astype(float))
    a_sym = g.adjacency * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return np.eye(g.n) - a_sym


def unnormalized_laplacian(g: Graph) -> np.ndarray:
    return np.diag(g.degrees.astype(float)) - g.adjacency.astype(float)


def eigendecompose(matrix: np.ndarray, which_laplacian: str = "normalized") -> SpectralData:
    """Full eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Converges when the off-diagonal Frobenius norm drops below 1e-12 times the
    input Frobenius norm; 100-sweep cap. Eigenvector signs are fixed by making
    each column's largest-magnitude entry positive.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SquashscopeError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-12 * scale:
        raise SquashscopeError("matrix is not symmetric within 1e-12")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    vectors = np.eye(n)
    target = _JACOBI_REL_TOL * max(np.linalg.norm(a), np.finfo(float).tiny)
    for _ in range(_JACOBI_SWEEP_CAP):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
                vec_p, vec_q = vectors[:, p].copy(), vectors[:, q].copy()
                vectors[:, p] = c * vec_p - s * vec_q
                vectors[:, q] = s * vec_p + c * vec_q
    else:
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge in {_JACOBI_SWEEP_CAP} sweeps"
        )
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    for col in range(n):
        pivot = int(np.argmax(np.abs(vectors[:, col])))
        if vectors[pivot, col] < 0:
            vectors[:, col] = -vectors[:, col]
    values.setflags(write=False)
    vectors.setflags(write=False)
    return SpectralData(values, vectors, which_laplacian)


_spectral_cache: dict = {}


def spectral_data(g: Graph, which: str = "normalized", nonbipartite: bool = False) -> SpectralData:
    """Eigendecomposition of a graph Laplacian; connectivity always required.

    Results are memoized per graph: SpectralData is immutable and graphs are
    hashable by structure, so repeated bound evaluations reuse one solve.
    """
    guard = require_validated if nonbipartite else require_connected
    guard(g, f"{which} Laplacian spectrum")
    key = (g.n, g.edges, which)
    if key not in _spectral_cache:
        lap = normalized_laplacian(g) if which == "normalized" else unnormalized_laplacian(g)
        _spectral_cache[key] = eigendecompose(lap, which_laplacian=which)
    return _spectral_cache[key]


def laplacian_pseudo_inverse(s: SpectralData) -> np.ndarray:
    """Pseudo-inverse built from the eigenpairs, skipping the kernel direction."""
    values = s.eigenvalues
    zero_tol = _KERNEL_REL_TOL * max(np.abs(values).max(), np.finfo(float).tiny)
    kernel = np.abs(values) < zero_tol
    if kernel.sum() != 1:
        raise SquashscopeError(
            f"expected a single zero eigenvalue, found {int(kernel.sum())} "
            "(disconnected graph leaked past validation?)"
        )
    inv = np.where(kernel, 0.0, 1.0 / np.where(kernel, 1.0, values))
    return (s.eigenvectors * inv[None, :]) @ s.eigenvectors.T


def commute_time_spectral(g: Graph) -> CommuteTable:
    """Commute times from the normalized-Laplacian spectrum (Lovasz representation)."""
    require_connected(g, "commute_time_spectral")
    s = spectral_data(g, "normalized")
    values = s.eigenvalues
    zero_tol = _KERNEL_REL_TOL * max(np.abs(values).max(), np.finfo(float).tiny)
    if (np.abs(values) < zero_tol).sum() != 1:
        raise SquashscopeError("normalized Laplacian has a repeated zero eigenvalue")
    scaled = s.eigenvectors[:, 1:] / np.sqrt(g.degrees.astype(float))[:, None]
    scaled = scaled / np.sqrt(values[1:])[None, :]
    gram = scaled @ scaled.T
    sq = np.diag(gram)
    resistance = sq[:, None] + sq[None, :] - 2.0 * gram
    resistance = np.maximum(resistance, 0.0)
    np.fill_diagonal(resistance, 0.0)
    resistance = 0.5 * (resistance + resistance.T)
    tau = 2.0 * g.edge_count * resistance
    tau.setflags(write=False)
    resistance.setflags(write=False)
    return CommuteTable(tau=tau, resistance=resistance)


def resistance_via_moore_penrose(g: Graph) -> np.ndarray:
    """Effective resistance through the dense inverse of L + J/n.

    The all-ones shift makes the combinatorial Laplacian nonsingular on
    connected graphs, and the shifted inverse agrees with the Moore-Penrose
    inverse on the complement of the kernel.
    """
    require_connected(g, "resistance_via_moore_penrose")
    n = g.n
    shifted = unnormalized_laplacian(g) + np.ones((n, n)) / n
    try:
        gamma = np.linalg.inv(shifted)
    except np.linalg.LinAlgError as exc:
        raise SquashscopeError(
            "shifted Laplacian is singular despite connectivity; internal inconsistency"
        ) from exc
    diag = np.diag(gamma)
    resistance = diag[:, None] + diag[None, :] - 2.0 * gamma
    resistance = np.maximum(0.5 * (resistance + resistance.T), 0.0)
    np.fill_diagonal(resistance, 0.0)
    resistance.setflags(write=False)
    return resistance


def commute_time_monte_carlo(
    g: Graph, pair: NodePair, walkers: int, seed: int
) -> tuple[float, float]:
    """Random-walk estimate of the commute time with its standard error.

    Each walker runs on its own stream seeded from (seed, walker index), so
    the estimate does not depend on execution order. Walkers exceeding the
    1e7-step cap abort the estimate.
    """
    require_connected(g, "commute_time_monte_carlo")
    pair.check(g.n, allow_equal=True)
    if pair.v == pair.u:
        return 0.0, 0.0
    if walkers < 100:
        raise SquashscopeError(f"need at least 100 walkers, got {walkers}")
    neighbor_lists = [list(map(int, g.neighbors(v))) for v in range(g.n)]
    walker_seeds = np.random.SeedSequence(entropy=seed, spawn_key=(0x57,)).generate_state(
        walkers, dtype=np.uint64
    )
    totals = np.empty(walkers, dtype=float)
    for i in range(walkers):
        rng = random.Random(int(walker_seeds[i]))
        steps = 0
        node = pair.v
        for target in (pair.u, pair.v):
            while node != target:
                nbrs = neighbor_lists[node]
                node = nbrs[rng.randrange(len(nbrs))]
                steps += 1
                if steps > _WALK_STEP_CAP:
                    raise ConvergenceError(
                        f"walker {i} exceeded {_WALK_STEP_CAP} steps between "
                        f"nodes {pair.v} and {pair.u}; graph or seed looks wrong"
                    )
        totals[i] = steps
    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / np.sqrt(walkers)) if walkers > 1 else 0.0
    return mean, stderr


@dataclass(frozen=True)
class SpectralSummary:
    lambda_1: float
    lambda_max: float
    lambda_star: float
    gamma: float

    def contraction(self, c2: float) -> float:
        return abs(1.0 - c2 * self.lambda_star)


def spectral_summary(g: Graph, c2: float) -> SpectralSummary:
    """Spectral gap, top eigenvalue, the |1 - c2*lambda| maximizer, and the degree ratio.

    Ties between the gap and the top eigenvalue break toward the gap.
    """
    require_validated(g, "spectral_summary")
    if not (0.0 < c2 <= 1.0):
        raise SquashscopeError(f"c2 must lie in (0, 1], got {c2}")
    s = spectral_data(g, "normalized", nonbipartite=True)
    lam1 = float(s.eigenvalues[1])
    lam_max = float(s.eigenvalues[-1])
    star = lam1 if abs(1.0 - c2 * lam1) >= abs(1.0 - c2 * lam_max) else lam_max
    gamma = float(np.sqrt(g.degrees.max() / g.degrees.min()))
    return SpectralSummary(lambda_1=lam1, lambda_max=lam_max, lambda_star=star, gamma=gamma)


def foster_residual(g: Graph) -> float:
    """|sum of edge resistances - (n - 1)|; zero for an exact resistance solver."""
    resistance = resistance_via_moore_penrose(g)
    total = sum(resistance[u, v] for u, v in g.edges)
    return abs(total - (g.n - 1))
