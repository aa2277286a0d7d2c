"""Proximity matrices, connected components and the two graph spectra.

Two spectral decompositions are used by the identifiability checks:

* the normalised adjacency ``D^{-1/2} W D^{-1/2} = Gamma Lambda Gamma^T``,
  which diagonalises the CAR precision blocks, and
* the Laplacian ``D - W = P Omega P^T``, whose eigenvectors define the
  spectral coordinates of the Leroux CAR model.
"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GraphError, ZeroDegree

log = logging.getLogger(__name__)

ASYMMETRY_WARN = 1e-12
DEFAULT_EIG_TOL = 1e-8


@dataclass(frozen=True)
class ProximityMatrix:
    """Symmetric, nonnegative ``n x n`` matrix with zero diagonal.

    Holds either neighbour weights (areal data) or pairwise distances
    (geostatistical data). The array is copied and made read-only.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise GraphError(f"proximity matrix must be square and nonempty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("proximity matrix has non-finite entries")
        asym = float(np.max(np.abs(a - a.T)))
        if asym > 0.0:
            if asym > ASYMMETRY_WARN:
                warnings.warn(
                    f"proximity matrix asymmetric by {asym:.3g}; symmetrising",
                    stacklevel=3,
                )
            a = 0.5 * (a + a.T)
        if np.any(np.diag(a) != 0.0):
            raise GraphError("proximity matrix must have a zero diagonal")
        if np.any(a < 0.0):
            raise GraphError("proximity matrix entries must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.entries == 0.0) | (self.entries == 1.0)))

    def off_diagonal_values(self) -> np.ndarray:
        """Entries ``W[i, j]`` for ``i < j``."""
        iu = np.triu_indices(self.n, k=1)
        return self.entries[iu]

    def submatrix(self, idx) -> "ProximityMatrix":
        idx = np.asarray(idx, dtype=int)
        return ProximityMatrix(self.entries[np.ix_(idx, idx)])


def as_proximity(W) -> ProximityMatrix:
    if isinstance(W, ProximityMatrix):
        return W
    return ProximityMatrix(np.asarray(W, dtype=float))


@dataclass(frozen=True)
class DegreeMatrix:
    diag: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


@dataclass(frozen=True)
class ComponentPartition:
    blocks: list[list[int]]
    component_of: np.ndarray

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def __len__(self):
        return len(self.blocks)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def degree_matrix(W) -> DegreeMatrix:
    W = as_proximity(W)
    return DegreeMatrix(W.entries.sum(axis=0))


def connected_components(W) -> ComponentPartition:
    """Partition locations into path-connected blocks (iterative BFS)."""
    W = as_proximity(W)
    n = W.n
    adj = [np.flatnonzero(W.entries[i] > 0.0) for i in range(n)]
    comp = np.full(n, -1, dtype=int)
    blocks = []
    for start in range(n):
        if comp[start] >= 0:
            continue
        label = len(blocks)
        comp[start] = label
        members = [start]
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for j in adj[i]:
                if comp[j] < 0:
                    comp[j] = label
                    members.append(int(j))
                    queue.append(j)
        blocks.append(sorted(members))
    # scanning starts in index order already sorts blocks by smallest member
    return ComponentPartition(blocks=blocks, component_of=comp)


def _sorted_desc(values, vectors) -> SpectralDecomposition:
    order = np.argsort(-values, kind="stable")
    return SpectralDecomposition(values[order], vectors[:, order])


def normalized_spectrum(W, D: DegreeMatrix | None = None) -> SpectralDecomposition:
    """Eigendecomposition of ``D^{-1/2} W D^{-1/2}``, assembled per component.

    Eigenvectors are supported on a single connected component, so repeated
    eigenvalues (e.g. the eigenvalue 1 once per component) do not mix blocks.
    """
    W = as_proximity(W)
    if D is None:
        D = degree_matrix(W)
    d = np.asarray(D.diag, dtype=float)
    if np.any(d <= 0.0):
        bad = np.flatnonzero(d <= 0.0).tolist()
        raise ZeroDegree(f"locations {bad} have zero degree")
    s = 1.0 / np.sqrt(d)
    n = W.n
    values = np.empty(n)
    vectors = np.zeros((n, n))
    col = 0
    for block in connected_components(W).blocks:
        idx = np.asarray(block)
        sub = s[idx, None] * W.entries[np.ix_(idx, idx)] * s[None, idx]
        lam, vec = np.linalg.eigh(sub)
        k = len(idx)
        values[col:col + k] = lam
        vectors[np.ix_(idx, np.arange(col, col + k))] = vec
        col += k
    return _sorted_desc(values, vectors)


def laplacian(W) -> np.ndarray:
    W = as_proximity(W)
    return np.diag(W.entries.sum(axis=0)) - W.entries


def laplacian_spectrum(W) -> SpectralDecomposition:
    """Eigendecomposition of ``D - W``; eigenvalues are nonnegative up to rounding."""
    lam, vec = np.linalg.eigh(laplacian(W))
    return _sorted_desc(lam, vec)


def count_distinct(values, rel_tol: float = DEFAULT_EIG_TOL) -> int:
    """Number of clusters after merging sorted values closer than the tolerance.

    Two neighbouring sorted values are merged when their gap is at most
    ``rel_tol * max(1, spread)`` where ``spread = max - min``.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        return 0
    spread = float(v[-1] - v[0])
    gaps = np.diff(v)
    return 1 + int(np.sum(gaps > rel_tol * max(1.0, spread)))


def distinct_clusters(values, rel_tol: float = DEFAULT_EIG_TOL) -> list[float]:
    """Representative (first) value of each cluster used by :func:`count_distinct`."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        return []
    spread = float(v[-1] - v[0])
    keep = np.concatenate([[True], np.diff(v) > rel_tol * max(1.0, spread)])
    return v[keep].tolist()


def is_fully_connected(W) -> bool:
    """True when ``W`` is the binary complete graph ``11^T - I``."""
    W = as_proximity(W)
    off = ~np.eye(W.n, dtype=bool)
    return W.n >= 2 and bool(np.all(W.entries[off] == 1.0))


# ---------------------------------------------------------------------------
# standard graphs

def ring_graph(n: int) -> ProximityMatrix:
    if n < 3:
        raise GraphError("a ring needs at least 3 nodes")
    W = np.zeros((n, n))
    for i in range(n):
        W[i, (i + 1) % n] = W[(i + 1) % n, i] = 1.0
    return ProximityMatrix(W)


def complete_graph(n: int) -> ProximityMatrix:
    return ProximityMatrix(np.ones((n, n)) - np.eye(n))


def circulant_graph(n: int, offsets) -> ProximityMatrix:
    W = np.zeros((n, n))
    for i in range(n):
        for k in offsets:
            j = (i + k) % n
            if j != i:
                W[i, j] = W[j, i] = 1.0
    return ProximityMatrix(W)


def graph_from_edges(n: int, edges) -> ProximityMatrix:
    W = np.zeros((n, n))
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        W[i, j] = W[j, i] = w
    return ProximityMatrix(W)


def figure1_graphs() -> dict[str, ProximityMatrix]:
    """The four six-node neighbourhood structures of the CAR comparison.

    Nodes are numbered 0..5 counter-clockwise starting at 60 degrees.
    """
    return {
        "a": graph_from_edges(6, [(0, 1), (2, 3), (4, 5)]),
        "b": complete_graph(6),
        "c": graph_from_edges(6, [(0, 1), (2, 3), (3, 4), (4, 2), (2, 5)]),
        "d": ring_graph(6),
    }


def distance_matrix(coords) -> ProximityMatrix:
    """Euclidean distances between rows of ``coords``."""
    x = np.asarray(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    D = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(D, 0.0)
    return ProximityMatrix(D)


# ---------------------------------------------------------------------------
# ingestion

def read_edge_list(path, n: int | None = None) -> ProximityMatrix:
    """Read whitespace-separated ``i j [w]`` lines (0-based, symmetric closure)."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"{path}:{lineno}: expected 'i j w', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from None
        if i < 0 or j < 0:
            raise GraphError(f"{path}:{lineno}: negative index")
        edges.append((i, j, w))
    if not edges and n is None:
        raise GraphError(f"{path}: no edges and no node count given")
    m = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    n = m if n is None else n
    if m > n:
        raise GraphError(f"{path}: index {m - 1} out of range for n={n}")
    return graph_from_edges(n, edges)


def read_dense_csv(path) -> ProximityMatrix:
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise GraphError(f"{path}: {exc}") from None
    return ProximityMatrix(a)


def load_graph(path) -> ProximityMatrix:
    """Dense CSV for ``*.csv`` files, otherwise an edge list."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_dense_csv(path)
    return read_edge_list(path)


def write_dense_csv(W, path) -> None:
    np.savetxt(path, as_proximity(W).entries, delimiter=",", fmt="%.17g")
