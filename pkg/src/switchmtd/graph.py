"""Agent-layer and control-sublayer graphs.

Control sublayers are undirected graphs with selfloops, encoded by a
*modified* Laplacian: the usual weighted Laplacian plus the selfloop weights
on the diagonal.  A sublayer whose every connected component carries at least
one selfloop has a strictly positive spectrum.

Node indices are 0-based in this module.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .errors import NonPositiveMuMin, NotSymmetric, WeightStructureMismatch

SYMMETRY_RTOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AgentLayerGraph:
    """Signed interconnection graph of the agent layer (selfloops allowed)."""

    adjacency: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.adjacency, dtype=float))
        if A.shape[0] < 1 or A.shape[0] != A.shape[1]:
            raise ValueError("agent-layer adjacency must be a non-empty square matrix")
        object.__setattr__(self, "adjacency", _frozen(A))

    @property
    def n_agents(self):
        return self.adjacency.shape[0]

    @property
    def neighbor_sets(self):
        return tuple(frozenset(np.flatnonzero(row).tolist()) for row in self.adjacency)

    def bounds(self, gamma_cy, gamma_f):
        return DesignerBounds(operator_norm(self.adjacency), gamma_cy, gamma_f)


@dataclass(frozen=True)
class DesignerBounds:
    """The only scalars about the agent layer the control designer may see."""

    norm_Aa: float
    gamma_cy: float
    gamma_f: float

    def __post_init__(self):
        if self.norm_Aa < 0:
            raise ValueError("norm_Aa must be nonnegative")
        if self.gamma_cy <= 0 or self.gamma_f <= 0:
            raise ValueError("gamma_cy and gamma_f must be positive")


@dataclass(frozen=True)
class SublayerStructure:
    """Binary structure of one control sublayer.

    ``edges`` is the symmetric 0/1 off-diagonal pattern and ``selfloops`` the
    0/1 selfloop vector.  ``targets`` optionally keeps the directed assignment
    produced by synthesis (``-1`` for a selfloop node, otherwise the index of
    the node it points to) before symmetrisation.
    """

    edges: np.ndarray
    selfloops: np.ndarray
    targets: tuple = None

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.edges, dtype=int))
        s = np.asarray(self.selfloops, dtype=int).reshape(-1)
        n = s.shape[0]
        if E.shape != (n, n):
            raise ValueError("edges must be N x N with N = len(selfloops)")
        if not (np.isin(E, (0, 1)).all() and np.isin(s, (0, 1)).all()):
            raise ValueError("structure entries must be 0 or 1")
        if np.any(np.diag(E)):
            raise ValueError("selfloops belong in `selfloops`, not on the edge diagonal")
        if not np.array_equal(E, E.T):
            raise NotSymmetric("sublayer edge pattern must be symmetric")
        object.__setattr__(self, "edges", _frozen(E, int))
        object.__setattr__(self, "selfloops", _frozen(s, int))
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    @property
    def n_nodes(self):
        return self.selfloops.shape[0]

    @classmethod
    def from_targets(cls, targets):
        n = len(targets)
        E = np.zeros((n, n), dtype=int)
        s = np.zeros(n, dtype=int)
        for i, t in enumerate(targets):
            if t < 0:
                s[i] = 1
            else:
                E[i, t] = E[t, i] = 1
        return cls(E, s, tuple(targets))

    def edge_list(self):
        """Undirected edges as sorted ``(i, j)`` pairs with ``i < j``."""
        i, j = np.nonzero(np.triu(self.edges, 1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def selfloop_nodes(self):
        return [int(i) for i in np.flatnonzero(self.selfloops)]

    def depth(self):
        """Hop distance of every node to the nearest selfloop node (``-1`` if none)."""
        n = self.n_nodes
        dist = [-1] * n
        frontier = self.selfloop_nodes()
        for r in frontier:
            dist[r] = 0
        while frontier:
            nxt = []
            for u in frontier:
                for w in np.flatnonzero(self.edges[u]):
                    if dist[w] < 0:
                        dist[w] = dist[u] + 1
                        nxt.append(int(w))
            frontier = nxt
        return dist


@dataclass(frozen=True)
class SublayerTopology:
    structure: SublayerStructure
    edge_weights: np.ndarray
    selfloop_weights: np.ndarray
    laplacian: np.ndarray = field(repr=False)
    spectrum: np.ndarray

    @property
    def n_nodes(self):
        return self.structure.n_nodes

    @property
    def mu_1(self):
        return float(self.spectrum[0])


@dataclass(frozen=True)
class ControlLayer:
    sublayers: tuple
    mu_min: float

    def __post_init__(self):
        if len(self.sublayers) < 1:
            raise ValueError("a control layer needs at least one sublayer")

    @classmethod
    def from_sublayers(cls, sublayers):
        sublayers = tuple(sublayers)
        return cls(sublayers, mu_min(sublayers))

    @property
    def M(self):
        return len(self.sublayers)


@dataclass(frozen=True)
class ValidityReport:
    components: tuple
    flagged: tuple

    @property
    def valid(self):
        return not self.flagged


def laplacian_from_weights(edge_weights, selfloop_weights):
    """``h_ij = -a_ij`` off the diagonal, ``h_ii = sum_j a_ij + s_i``."""
    W = np.asarray(edge_weights, dtype=float)
    s = np.asarray(selfloop_weights, dtype=float)
    H = -W.copy()
    np.fill_diagonal(H, W.sum(axis=1) - np.diag(W) + s)
    return H


def build_modified_laplacian(structure, edge_weights, selfloop_weights, rtol=SYMMETRY_RTOL):
    W = np.asarray(edge_weights, dtype=float)
    s = np.asarray(selfloop_weights, dtype=float).reshape(-1)
    n = structure.n_nodes
    if W.shape != (n, n) or s.shape != (n,):
        raise ValueError("weight dimensions do not match the structure")
    if np.any(W < 0) or np.any(s < 0):
        raise WeightStructureMismatch("weights must be nonnegative")
    if np.any(np.diag(W) != 0):
        raise WeightStructureMismatch("edge weights must have a zero diagonal")
    if not _linalg.is_symmetric(W, rtol):
        raise NotSymmetric("edge weights must be symmetric")
    if np.any((W != 0) != (structure.edges == 1)):
        bad = np.argwhere((W != 0) != (structure.edges == 1))
        raise WeightStructureMismatch(f"edge weight / structure mismatch at {bad[0].tolist()}")
    if np.any((s > 0) != (structure.selfloops == 1)):
        bad = np.flatnonzero((s > 0) != (structure.selfloops == 1))
        raise WeightStructureMismatch(f"selfloop weight / structure mismatch at node {int(bad[0])}")
    W = 0.5 * (W + W.T)
    H = laplacian_from_weights(W, s)
    return SublayerTopology(structure, _frozen(W), _frozen(s), _frozen(H), _frozen(laplacian_spectrum(H, rtol)))


def laplacian_spectrum(H, rtol=SYMMETRY_RTOL):
    """Ascending eigenvalues of a symmetric (modified Laplacian) matrix."""
    return _linalg.sym_eigvals(np.asarray(H, dtype=float), rtol)


def connected_components(edges):
    """Components of the undirected graph given by a 0/1 (or weighted) pattern."""
    E = np.asarray(edges)
    n = E.shape[0]
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in np.flatnonzero(E[u]):
                if w != u and not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        comps.append(tuple(sorted(comp)))
    return comps


def validate_sublayer(structure):
    comps = connected_components(structure.edges)
    flagged = tuple(c for c in comps if not any(structure.selfloops[i] for i in c))
    return ValidityReport(tuple(comps), flagged)


def mu_min(layer):
    """Smallest first eigenvalue over a sequence of sublayer topologies."""
    layer = list(layer)
    if not layer:
        raise ValueError("mu_min needs at least one sublayer")
    value = min(float(t.spectrum[0]) for t in layer)
    if value <= 0:
        raise NonPositiveMuMin(f"smallest sublayer eigenvalue {value:g} is not positive")
    return value


def operator_norm(A, rtol=1e-15, max_iter=20000):
    """Largest singular value by power iteration on ``A.T @ A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise ValueError("operator_norm needs finite entries")
    G = A.T @ A
    if not np.any(G):
        return 0.0
    # deterministic start vector with components along every axis
    x = np.linspace(1.0, 2.0, G.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # start vector in the null space; restart along a column of G
            x = G[:, np.argmax(np.linalg.norm(G, axis=0))]
            x = x / np.linalg.norm(x)
            continue
        y /= ny
        new = float(y @ G @ y)
        done = abs(new - lam) <= rtol * new or np.linalg.norm(y - x) < 1e-9
        lam = new
        x = y
        if done:
            break
    return float(np.sqrt(max(lam, 0.0)))
