"""Undirected weighted communication networks between energy nodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

ZERO_EIG_TOL = 1e-10


class GraphError(ValueError):
    """Invalid topology parameters or network data."""


class AnalysisError(RuntimeError):
    """A numerical analysis step (eigensolver, sector scan, oracle) failed."""


@dataclass(frozen=True)
class Network:
    """Symmetric nonnegative weight matrix with zero diagonal.

    Only ``weights`` is stored; neighbour lists, CSR arrays and link ids are
    derived on construction. Instances are treated as immutable.
    """

    weights: np.ndarray
    neighbors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GraphError("weight matrix has non-finite entries")
        if np.any(w < 0):
            raise GraphError("weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise GraphError("weight matrix diagonal must be zero")
        if not np.array_equal(w, w.T):
            raise GraphError("weight matrix must be symmetric (undirected network)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(
            self, "neighbors", tuple(tuple(np.flatnonzero(row).tolist()) for row in w)
        )

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected links ``(i, j, w)`` with ``i < j``, in row-major order."""
        iu, ju = np.nonzero(np.triu(self.weights, 1))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors])

    @property
    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        ncomp, _ = connected_components(self.weights > 0, directed=False)
        return ncomp == 1

    def csr(self):
        """``(indptr, indices, weights, link_of)`` with link ids from :attr:`edges`."""
        link_id = {(i, j): e for e, (i, j, _) in enumerate(self.edges)}
        indptr = [0]
        indices, vals, link_of = [], [], []
        for i, nb in enumerate(self.neighbors):
            for j in nb:
                indices.append(j)
                vals.append(self.weights[i, j])
                link_of.append(link_id[(min(i, j), max(i, j))])
            indptr.append(len(indices))
        return (np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64),
                np.array(vals, dtype=float), np.array(link_of, dtype=np.int64))


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    lambda2: float
    lambdaN: float

    @property
    def connected(self) -> bool:
        return self.lambda2 > 0.0


def from_edges(n: int, edges: Sequence, weight: float = 1.0) -> Network:
    """Network from ``(i, j)`` or ``(i, j, w)`` tuples; duplicates overwrite."""
    if n < 1:
        raise GraphError("need at least one node")
    w = np.zeros((n, n))
    for e in edges:
        if len(e) == 2:
            i, j, wij = e[0], e[1], weight
        elif len(e) == 3:
            i, j, wij = e
        else:
            raise GraphError(f"edge must be (i, j) or (i, j, w), got {e!r}")
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not wij > 0:
            raise GraphError(f"edge ({i}, {j}) weight must be positive")
        w[i, j] = w[j, i] = float(wij)
    return Network(w)


def build_k_hop_cycle(n: int, k: int, w: float = 1.0) -> Network:
    """Ring where each node links to its ``k`` nearest neighbours on each side."""
    if k < 1:
        raise GraphError(f"hop radius must be >= 1, got {k}")
    if n <= 2 * k:
        raise GraphError(f"k-hop cycle needs n >= 2k+1 (n={n}, k={k})")
    if not w > 0:
        raise GraphError("link weight must be positive")
    edges = [(i, (i + h) % n) for i in range(n) for h in range(1, k + 1)]
    return from_edges(n, edges, weight=w)


def build_cycle(n: int, w: float = 1.0) -> Network:
    if n < 3:
        raise GraphError(f"cycle needs at least 3 nodes, got {n}")
    return build_k_hop_cycle(n, 1, w)


def laplacian(net: Network) -> np.ndarray:
    """``L = D - W`` with ``D = diag(row sums of W)``."""
    w = net.weights
    return np.diag(w.sum(axis=1)) - w


def spectrum(net: Network) -> Spectrum:
    try:
        eig = np.linalg.eigvalsh(laplacian(net))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise AnalysisError(f"Laplacian eigensolver failed: {exc}") from exc
    eig = np.where(np.abs(eig) <= ZERO_EIG_TOL, 0.0, eig)
    eig.sort()
    if eig[0] < 0:
        raise AnalysisError(f"Laplacian has negative eigenvalue {eig[0]:.3e}")
    lam2 = float(eig[1]) if eig.size > 1 else 0.0
    return Spectrum(eigenvalues=eig, lambda2=lam2, lambdaN=float(eig[-1]))


def check_uniform_connectivity(nets: Sequence[Network], window: int) -> bool:
    """True iff every window of ``window`` consecutive snapshots has a connected union.

    With fewer snapshots than ``window`` the single union of all of them is
    checked.
    """
    if not nets:
        raise GraphError("need at least one network snapshot")
    if window < 1:
        raise GraphError("window must be >= 1")
    n = nets[0].n
    if any(net.n != n for net in nets):
        raise GraphError("all snapshots must have the same node count")
    adj = [net.weights > 0 for net in nets]
    span = min(window, len(adj))
    for start in range(len(adj) - span + 1):
        union = np.logical_or.reduce(adj[start:start + span])
        if n > 1 and connected_components(union, directed=False)[0] != 1:
            return False
    return True
