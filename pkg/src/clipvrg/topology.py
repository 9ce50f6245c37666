"""Communication graphs and doubly stochastic mixing matrices.

Graphs are undirected and immutable; a mixing matrix is only built for a
connected graph, using Metropolis weights: w_ij = 1/(1 + max(deg_i, deg_j))
on edges and a diagonal absorbing the remainder. The resulting matrix is
symmetric, doubly stochastic, supported on graph edges plus the diagonal,
and has second-largest eigenvalue magnitude beta < 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import NumericalFailure


@dataclass(frozen=True)
class Graph:
    """Undirected agent topology: node count, canonical edge set, optional 2D positions."""

    n: int
    edges: tuple[tuple[int, int], ...]
    positions: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i > j:
                raise ValueError(f"edge ({i}, {j}) not in canonical (i < j) order")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != (self.n, 2):
                raise ValueError(f"positions must be ({self.n}, 2), got {pos.shape}")
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbor_lists(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic weights with spectral gap beta = |lambda_2|."""

    n: int
    w: np.ndarray
    beta: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.n, self.n):
            raise ValueError(f"weight matrix must be ({self.n}, {self.n}), got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def diagnostics(self) -> dict[str, float]:
        """Numbers behind the mixing-matrix assumptions, for validation reports."""
        row_dev = float(np.abs(self.w.sum(axis=1) - 1.0).max())
        asym = float(np.abs(self.w - self.w.T).max())
        return {"max_row_sum_dev": row_dev, "asymmetry": asym, "beta": self.beta}


def _edges_from_positions(pos: np.ndarray, radius: float) -> tuple[tuple[int, int], ...]:
    n = len(pos)
    r2 = radius * radius
    edges = []
    for i in range(n):
        d2 = np.sum((pos[i + 1:] - pos[i]) ** 2, axis=1)
        for off in np.nonzero(d2 <= r2)[0]:
            edges.append((i, i + 1 + int(off)))
    return tuple(edges)


def build_grid(rows: int, cols: int, link_radius: float) -> Graph:
    """Agents on a unit-spaced lattice; edge iff Euclidean distance <= link_radius.

    link_radius = sqrt(2) links each agent to its side and diagonal neighbors.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"grid needs positive rows and cols, got {rows}x{cols}")
    if rows * cols < 2:
        raise ValueError("grid needs at least two agents")
    if link_radius <= 0:
        raise ValueError(f"link_radius must be positive, got {link_radius}")
    pos = np.array([(r, c) for r in range(rows) for c in range(cols)], dtype=float)
    return Graph(rows * cols, _edges_from_positions(pos, link_radius), positions=pos)


def build_random_geometric(n: int, radius: float, seed: int) -> Graph:
    """n points uniform on the unit square; edge iff distance <= radius. Seed-deterministic."""
    if n < 2:
        raise ValueError(f"geometric graph needs n >= 2, got {n}")
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    pos = np.random.default_rng(seed).random((n, 2))
    return Graph(n, _edges_from_positions(pos, radius), positions=pos)


def build_cycle_k(n: int, k: int) -> Graph:
    """Ring of n agents, each linked to its k/2 nearest neighbors on both sides."""
    if n < 2:
        raise ValueError(f"cycle needs n >= 2, got {n}")
    if k <= 0 or k % 2 != 0:
        raise ValueError(f"neighbor count k must be a positive even integer, got {k}")
    if k >= n:
        raise ValueError(f"k must be smaller than n, got k={k}, n={n}")
    edges = set()
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            edges.add((min(i, j), max(i, j)))
    return Graph(n, tuple(sorted(edges)))


def build_complete(n: int) -> Graph:
    """All n(n-1)/2 links present."""
    if n < 2:
        raise ValueError(f"complete graph needs n >= 2, got {n}")
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def is_connected(g: Graph) -> bool:
    """True iff a BFS from node 0 reaches every node."""
    if g.n == 1:
        return True
    nbrs = g.neighbor_lists()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    count = 1
    while frontier:
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    nxt.append(v)
        frontier = nxt
    return count == g.n


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Metropolis mixing matrix of a connected graph, with its spectral gap."""
    if not is_connected(g):
        raise ValueError("mixing matrix requires a connected graph")
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        wij = 1.0 / (1.0 + max(deg[i], deg[j]))
        w[i, j] = wij
        w[j, i] = wij
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(g.n, w, spectral_gap(w))


def spectral_gap(w, rtol: float = 1e-10, max_iter: int = 100_000) -> float:
    """|lambda_2| of a symmetric doubly stochastic matrix.

    Power iteration on the deflated matrix B = W - (1/n)11^T, squared so the
    Rayleigh quotient is monotone even when lambda_2 < 0. The all-ones top
    eigenvector is removed analytically (subtracting column means), never
    estimated.
    """
    mat = np.asarray(w.w if isinstance(w, MixingMatrix) else w, dtype=float)
    n = mat.shape[0]
    if n == 1:
        return 0.0

    def deflated(vec: np.ndarray) -> np.ndarray:
        out = mat @ vec
        return out - out.mean()

    rng = np.random.default_rng(1234)
    x = rng.standard_normal(n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    # Stagnation is checked over a window of iterations: a single-step check can
    # fire early when two distinct eigenvalue magnitudes are close.
    window = 8
    history: list[float] = []
    for _ in range(max_iter):
        y = deflated(x)
        ny = float(np.linalg.norm(y))
        if ny < 1e-12:
            # below float noise of the deflation itself (exact for the n=1
            # projector, ~1e-16 per entry for any uniform-like W): beta is 0
            return 0.0
        est = ny  # sqrt of the Rayleigh quotient of B^2 at unit x
        z = deflated(y)
        nz = float(np.linalg.norm(z))
        if nz < 1e-154:
            return est
        x = z / nz
        history.append(est)
        if len(history) > window:
            if abs(history[-1] - history[-1 - window]) <= rtol * max(est, 1e-30):
                return est
            del history[0]
    raise NumericalFailure(f"spectral gap power iteration did not converge in {max_iter} iterations")


def write_edgelist(g: Graph, f: IO[str]) -> None:
    """Snapshot format: first line n, then one 'i j' pair per line, 0-indexed."""
    f.write(f"{g.n}\n")
    for i, j in g.edges:
        f.write(f"{i} {j}\n")


def read_edgelist(f: IO[str]) -> Graph:
    lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ValueError("empty edge list")
    n = int(lines[0])
    edges = []
    for ln in lines[1:]:
        i, j = (int(tok) for tok in ln.split())
        edges.append((min(i, j), max(i, j)))
    return Graph(n, tuple(sorted(set(edges))))
