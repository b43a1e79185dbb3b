"""Communication topology and neighbor-based formation error."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Invalid topology or desired formation geometry."""


def is_connected(adjacency: np.ndarray) -> bool:
    """Breadth-first reachability from node 0 over edges with a_ij > 0."""
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    if n == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adjacency[i] > 0):
            j = int(j)
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == n


@dataclass(frozen=True, eq=False)
class LaplacianView:
    degree: np.ndarray
    laplacian: np.ndarray


@dataclass(frozen=True, eq=False)
class FormationGraph:
    """Undirected weighted topology plus the desired offset p_i^d of every vehicle.

    Vehicle indices are zero-based.  Construction fails unless the adjacency is
    symmetric, nonnegative, loop-free and connected.
    """

    adjacency: np.ndarray
    desired_offsets: np.ndarray
    _laplacian: LaplacianView = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        offsets = np.array(self.desired_offsets, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise GraphError("adjacency has non-finite entries")
        if np.any(adj < 0):
            raise GraphError("adjacency weights must be nonnegative")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric (undirected graph)")
        if np.any(np.diag(adj) != 0):
            raise GraphError("self-loops are not allowed (a_ii must be 0)")
        n = adj.shape[0]
        if offsets.shape != (n, 2):
            raise GraphError(f"expected {n} desired offsets of shape (2,), got array of shape {offsets.shape}")
        if not is_connected(adj):
            raise GraphError("communication graph is not connected")
        adj.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "desired_offsets", offsets)
        object.__setattr__(self, "_laplacian", _laplacian_of(adj))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def laplacian(self) -> LaplacianView:
        return self._laplacian

    def algebraic_connectivity(self) -> float:
        """Second-smallest Laplacian eigenvalue (diagnostic only)."""
        eig = np.linalg.eigvalsh(self._laplacian.laplacian)
        return float(eig[1]) if eig.size > 1 else 0.0


def _laplacian_of(adj: np.ndarray) -> LaplacianView:
    degree = adj.sum(axis=1)
    lap = np.diag(degree) - adj
    degree.setflags(write=False)
    lap.setflags(write=False)
    return LaplacianView(degree=degree, laplacian=lap)


def build_laplacian(g: FormationGraph) -> LaplacianView:
    return g.laplacian()


def neighbor_set(g: FormationGraph, i: int) -> set[int]:
    if not 0 <= i < g.n:
        raise IndexError(f"vehicle index {i} out of range for {g.n} vehicles")
    return {int(j) for j in np.flatnonzero(g.adjacency[i] > 0)}


def formation_error(g: FormationGraph, positions) -> np.ndarray:
    """z1_i = sum_j a_ij [(p_i - p_j) - (p_i^d - p_j^d)] for every vehicle, shape (n, 2)."""
    p = np.asarray(positions, dtype=float)
    if p.shape != (g.n, 2):
        raise ValueError(f"expected positions of shape ({g.n}, 2), got {p.shape}")
    q = p - g.desired_offsets
    return g._laplacian.degree[:, None] * q - g.adjacency @ q


def relative_rate(g: FormationGraph, velocities) -> np.ndarray:
    """Time derivative of the formation error: sum_j a_ij (v_i - v_j)."""
    v = np.asarray(velocities, dtype=float)
    return g._laplacian.degree[:, None] * v - g.adjacency @ v


def cycle_graph(n: int, desired_offsets, weight: float = 1.0) -> FormationGraph:
    adj = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        if i != j:
            adj[i, j] = adj[j, i] = weight
    return FormationGraph(adj, desired_offsets)


def square_offsets(side: float) -> np.ndarray:
    """Offsets (0,0), (d,0), (d,d), (0,d) of the four-vehicle square."""
    return np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]])
