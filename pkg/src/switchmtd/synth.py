"""Security-constrained synthesis of edge-disjoint control sublayer structures.

Each sublayer is first built as a *directed* assignment in which every node
either keeps a selfloop or points at exactly one other node.  The constraints
on that assignment are

``binary``
    every variable is 0 or 1;
``selfloop_capability``
    only capable nodes may hold a selfloop;
``selfloop_budget``
    exactly ``T`` selfloops;
``risk``
    high-risk links are never used;
``non_overlap``
    links used by an earlier sublayer are never reused;
``path_rule``
    if ``i -> j`` and ``j -> k`` (``k != j``) then ``k`` holds a selfloop and
    ``j`` does not;
``single_out``
    each node has exactly one outgoing entry (selfloop included).

Together these force a forest of in-trees of depth at most two rooted at the
selfloop nodes.  The directed result is symmetrised into an undirected
structure afterwards.
"""

import random
from dataclasses import dataclass, field

import numpy as np

from .errors import Unsatisfiable
from .graph import SublayerStructure, validate_sublayer

SELF = -1

CONSTRAINTS = (
    "binary",
    "selfloop_capability",
    "selfloop_budget",
    "risk",
    "non_overlap",
    "path_rule",
    "single_out",
)


@dataclass(frozen=True)
class SynthesisProblem:
    n_sublayers: int
    n_nodes: int
    selfloop_budget: int
    selfloop_capability: tuple
    risk_mask: np.ndarray

    def __post_init__(self):
        n = self.n_nodes
        if n < 1 or self.n_sublayers < 1:
            raise ValueError("need at least one node and one sublayer")
        cap = tuple(int(c) for c in self.selfloop_capability)
        if len(cap) != n or any(c not in (0, 1) for c in cap):
            raise ValueError("selfloop_capability must be a 0/1 vector of length N")
        r = np.array(self.risk_mask, dtype=int)
        if r.shape != (n, n) or not np.isin(r, (0, 1)).all():
            raise ValueError("risk_mask must be an N x N 0/1 matrix")
        if not np.array_equal(r, r.T):
            raise ValueError("risk_mask must be symmetric")
        r.setflags(write=False)
        object.__setattr__(self, "selfloop_capability", cap)
        object.__setattr__(self, "risk_mask", r)

    @classmethod
    def from_risk_pairs(cls, n_sublayers, n_nodes, budget, capability, risky_pairs=()):
        r = np.ones((n_nodes, n_nodes), dtype=int)
        for i, j in risky_pairs:
            r[i, j] = r[j, i] = 0
        return cls(n_sublayers, n_nodes, budget, tuple(capability), r)


@dataclass(frozen=True)
class NonOverlapMemory:
    """``eta[i, j] == 1`` iff link ``{i, j}`` is unused by all earlier sublayers."""

    eta: np.ndarray

    @classmethod
    def fresh(cls, n_nodes):
        eta = np.ones((n_nodes, n_nodes), dtype=int)
        np.fill_diagonal(eta, 0)
        return cls(eta)

    def __post_init__(self):
        eta = np.array(self.eta, dtype=int)
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    def after(self, structure):
        eta = self.eta & (1 - structure.edges)
        np.fill_diagonal(eta, 0)
        return NonOverlapMemory(eta)


@dataclass
class ConstraintReport:
    violations: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not any(self.violations.values())

    def failed(self):
        return [name for name, v in self.violations.items() if v]

    def lines(self):
        for name, v in self.violations.items():
            yield f"{name}: {'ok' if not v else 'FAIL ' + repr(v)}"


class _Search:
    """Depth-first search over per-node decisions with forward checking."""

    def __init__(self, problem, memory, rng=None):
        self.p = problem
        self.n = problem.n_nodes
        self.T = problem.selfloop_budget
        self.cap = problem.selfloop_capability
        self.allowed = problem.risk_mask & memory.eta
        self.risk = problem.risk_mask
        self.eta = memory.eta
        self.rng = rng
        self.targets = [None] * self.n
        self.required = [0] * self.n
        self.n_self = 0
        # capable nodes at index >= i
        self.cap_tail = [0] * (self.n + 1)
        for i in range(self.n - 1, -1, -1):
            self.cap_tail[i] = self.cap_tail[i + 1] + self.cap[i]
        self.rejections = {}
        self.last_rejection = None

    def _reject(self, name):
        self.rejections[name] = self.rejections.get(name, 0) + 1
        self.last_rejection = name
        return False

    def _candidates(self, i):
        cands = []
        if self.cap[i]:
            cands.append(SELF)
        else:
            self._reject("selfloop_capability")
        for j in range(self.n):
            if j == i:
                continue
            if not self.risk[i, j]:
                self._reject("risk")
            elif not self.eta[i, j]:
                self._reject("non_overlap")
            else:
                cands.append(j)
        if self.rng is not None:
            self.rng.shuffle(cands)
        return cands

    def _pending_self(self, after):
        return sum(1 for k in range(after, self.n) if self.required[k])

    def _try(self, i, c, undo):
        """Tentatively assign ``targets[i] = c``; record undo actions."""
        t = self.targets
        if c == SELF:
            if self.n_self + 1 + self._pending_self(i + 1) > self.T:
                return self._reject("selfloop_budget")
            t[i] = SELF
            self.n_self += 1
            undo.append(("self",))
            return True
        if self.required[i]:
            return self._reject("path_rule")
        if self.n_self + self.cap_tail[i + 1] < self.T:
            return self._reject("selfloop_budget")
        t[i] = c
        undo.append(("assign",))
        need = []
        # i -> c -> k
        if t[c] is not None and t[c] != SELF:
            k = t[c]
            if k == i:
                return self._reject("path_rule")
            need.append(k)
        # a -> i -> c
        for a in range(self.n):
            if t[a] == i and a != i:
                if c == a:
                    return self._reject("path_rule")
                need.append(c)
        for k in need:
            if t[k] is None:
                if not self.cap[k]:
                    return self._reject("path_rule")
                self.required[k] += 1
                undo.append(("req", k))
            elif t[k] != SELF:
                return self._reject("path_rule")
        if self.n_self + self._pending_self(i + 1) > self.T:
            return self._reject("selfloop_budget")
        return True

    def _undo(self, i, undo):
        for action in reversed(undo):
            if action[0] == "self":
                self.n_self -= 1
            elif action[0] == "req":
                self.required[action[1]] -= 1
        self.targets[i] = None

    def solutions(self):
        if self.T > sum(self.cap) or self.T < 0:
            self._reject("selfloop_budget")
            return
        yield from self._rec(0)

    def _rec(self, i):
        if i == self.n:
            if self.n_self == self.T:
                yield tuple(self.targets)
            else:
                self._reject("selfloop_budget")
            return
        for c in self._candidates(i):
            undo = []
            if self._try(i, c, undo):
                yield from self._rec(i + 1)
            self._undo(i, undo)


def iter_structures(problem, memory=None, seed=None):
    """Every satisfying directed assignment, as symmetrised structures."""
    memory = memory or NonOverlapMemory.fresh(problem.n_nodes)
    rng = random.Random(seed) if seed is not None else None
    for targets in _Search(problem, memory, rng).solutions():
        yield SublayerStructure.from_targets(targets)


def generate_one_graph(problem, memory=None, sigma=1, seed=None):
    """First satisfying sublayer structure for sublayer ``sigma`` (1-based)."""
    memory = memory or NonOverlapMemory.fresh(problem.n_nodes)
    rng = random.Random(_mix(seed, sigma)) if seed is not None else None
    search = _Search(problem, memory, rng)
    for targets in search.solutions():
        return SublayerStructure.from_targets(targets)
    raise Unsatisfiable(
        f"sublayer {sigma}: no assignment satisfies the constraints "
        f"(last candidate eliminated by {search.last_rejection})",
        constraint=search.last_rejection,
        sublayer=sigma,
        rejections=search.rejections,
    )


def _mix(seed, sigma):
    return None if seed is None else (int(seed) * 1_000_003 + int(sigma)) & 0xFFFFFFFFFFFFFFFF


def _feasible_rest(problem, memory, remaining):
    """Cheap necessary conditions for ``remaining`` more sublayers."""
    if remaining == 0:
        return True
    n, T = problem.n_nodes, problem.selfloop_budget
    allowed = problem.risk_mask & memory.eta
    np.fill_diagonal(allowed, 0)
    if np.triu(allowed, 1).sum() < remaining * (n - T):
        return False
    deg = allowed.sum(axis=1)
    forced_roots = 0
    for v in range(n):
        need = max(0, remaining - int(deg[v]))
        if need and not problem.selfloop_capability[v]:
            return False
        forced_roots += need
    return forced_roots <= remaining * T


def generate_all_graphs(problem, seed=None, backtrack=True):
    """``M`` pairwise edge-disjoint sublayer structures.

    Sublayers are generated in order with the non-overlap memory updated after
    each one.  When sublayer ``k`` turns out unsatisfiable and ``backtrack``
    is set, the search revisits alternative assignments for earlier sublayers
    before giving up.
    """
    M = problem.n_sublayers
    chosen = []
    deepest = {"k": 0, "err": None}

    def rec(k, memory):
        if k == M:
            return True
        rng = random.Random(_mix(seed, k + 1)) if seed is not None else None
        search = _Search(problem, memory, rng)
        found_any = False
        for targets in search.solutions():
            found_any = True
            s = SublayerStructure.from_targets(targets)
            nxt = memory.after(s)
            if not _feasible_rest(problem, nxt, M - k - 1):
                continue
            chosen.append(s)
            if rec(k + 1, nxt):
                return True
            chosen.pop()
            if not backtrack:
                return False
        if not found_any and k >= deepest["k"]:
            deepest["k"] = k
            deepest["err"] = (search.last_rejection, search.rejections)
        elif found_any and k + 1 > deepest["k"]:
            # every candidate here left later sublayers without enough links
            deepest["k"] = k + 1
            deepest["err"] = ("non_overlap", {})
        return False

    fresh = NonOverlapMemory.fresh(problem.n_nodes)
    per_layer = problem.n_nodes - problem.selfloop_budget
    usable = int(np.triu(problem.risk_mask & fresh.eta, 1).sum())
    if per_layer > 0 and usable < M * per_layer:
        k = usable // per_layer + 1
        raise Unsatisfiable(
            f"sublayer {k} of {M} cannot be generated: {usable} usable links, "
            f"{per_layer} needed per sublayer (last candidate eliminated by non_overlap)",
            constraint="non_overlap",
            sublayer=k,
        )
    if rec(0, fresh):
        return list(chosen)
    k = min(deepest["k"], M - 1)
    constraint, rejections = deepest["err"] or (None, {})
    raise Unsatisfiable(
        f"sublayer {k + 1} of {M} cannot be generated "
        f"(last candidate eliminated by {constraint})",
        constraint=constraint,
        sublayer=k + 1,
        rejections=rejections,
    )


def orient(structure):
    """Recover a directed assignment by pointing every edge toward its root.

    Returns ``None`` if the undirected structure is not a forest with exactly
    one selfloop node per component.
    """
    n = structure.n_nodes
    parent = [None] * n
    for r in structure.selfloop_nodes():
        parent[r] = SELF
    E = structure.edges
    frontier = structure.selfloop_nodes()
    while frontier:
        nxt = []
        for u in frontier:
            for w in np.flatnonzero(E[u]):
                w = int(w)
                if parent[w] is None:
                    parent[w] = u
                    nxt.append(w)
        frontier = nxt
    if any(p is None for p in parent):
        return None
    # a forest oriented this way has exactly one edge per non-root node
    if int(np.triu(E, 1).sum()) != sum(1 for p in parent if p != SELF):
        return None
    return tuple(parent)


def _alpha(targets, n):
    a = np.zeros((n, n), dtype=int)
    for i, t in enumerate(targets):
        a[i, i if t == SELF else t] = 1
    return a


def check_constraints(structure, problem, memory=None):
    """Independently re-evaluate every constraint on a synthesised structure.

    The directed rules are evaluated on ``structure.targets`` when present,
    otherwise on an orientation recovered from the undirected structure.
    """
    memory = memory or NonOverlapMemory.fresh(problem.n_nodes)
    n = problem.n_nodes
    v = {name: [] for name in CONSTRAINTS}
    v["tree_shape"] = []
    v["component_selfloop"] = []
    if structure.n_nodes != n:
        v["binary"].append(("size", structure.n_nodes))
        return ConstraintReport(v)

    targets = structure.targets if structure.targets is not None else orient(structure)
    if targets is None:
        v["single_out"].append("no directed assignment with one outgoing entry per node")
        alpha = np.array(structure.edges)
        np.fill_diagonal(alpha, structure.selfloops)
    else:
        alpha = _alpha(targets, n)
        sym = alpha.copy()
        np.fill_diagonal(sym, 0)
        sym = ((sym + sym.T) > 0).astype(int)
        if not np.array_equal(sym, structure.edges) or not np.array_equal(
            np.diag(alpha), structure.selfloops
        ):
            v["single_out"].append("directed assignment disagrees with symmetric structure")

    if not np.isin(alpha, (0, 1)).all():
        v["binary"].extend(map(tuple, np.argwhere(~np.isin(alpha, (0, 1))).tolist()))
    for i in range(n):
        if alpha[i, i] > problem.selfloop_capability[i]:
            v["selfloop_capability"].append(i)
    if int(np.trace(alpha)) != problem.selfloop_budget:
        v["selfloop_budget"].extend(int(i) for i in np.flatnonzero(np.diag(alpha)))
    for i in range(n):
        for j in range(n):
            if i == j or not alpha[i, j]:
                continue
            if not problem.risk_mask[i, j]:
                v["risk"].append((i, j))
            if not memory.eta[i, j]:
                v["non_overlap"].append((i, j))
    for i in range(n):
        for j in range(n):
            if j == i or not alpha[i, j]:
                continue
            for k in range(n):
                if k == j or not alpha[j, k]:
                    continue
                if not (alpha[k, k] == 1 and alpha[j, j] == 0):
                    v["path_rule"].append((i, j, k))
    for i in range(n):
        if int(alpha[i].sum()) != 1:
            v["single_out"].append(i)

    if targets is not None:
        for i in range(n):
            hops, node = 0, i
            while targets[node] != SELF and hops <= 2:
                node = targets[node]
                hops += 1
            if hops > 2:
                v["tree_shape"].append(i)
    v["component_selfloop"] = [list(c) for c in validate_sublayer(structure).flagged]
    return ConstraintReport(v)
