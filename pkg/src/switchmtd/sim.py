"""Closed-loop simulation of the two-layer system under switching and DoS.

The stacked dynamics integrated here are::

    xdot = Abar x + Bubar (H_eff kron I) Kbar x + Bfbar f(y, t) + Bdbar d(t)
    y    = Cybar (A_a kron I) x

where ``H_eff`` is the active sublayer's modified Laplacian with every link
blocked by the attacker zeroed out.  Integration is fixed-step RK4; switching
and attack events must sit on the integration grid.
"""

import bisect
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .errors import DimensionMismatch, EventOffGrid, UnknownCatalogId
from .graph import laplacian_from_weights

DEFAULT_STEP = 1e-3
DEFAULT_CEILING = 1e6


# -- nonlinearity and disturbance catalogs ----------------------------------
#
# Every entry is elementwise in z and vectorised over per-element gain and
# frequency arrays, so the simulator can evaluate all agents of one kind at once.

def _zero(z, t, g, w):
    return np.zeros_like(z)


def _linear(z, t, g, w):
    return g * z


def _tanh(z, t, g, w):
    return g * np.tanh(z)


def _sin(z, t, g, w):
    return g * np.sin(z)


def _sin_t_tanh(z, t, g, w):
    return g * np.sin(w * t) * np.tanh(z)


def _sin_t_sin(z, t, g, w):
    return g * np.sin(w * t) * np.sin(z)


NONLINEARITIES = {
    "zero": _zero,
    "linear": _linear,
    "tanh": _tanh,
    "sin": _sin,
    "sin_t_tanh": _sin_t_tanh,
    "sin_t_sin": _sin_t_sin,
}


def _d_zero(t, a, w):
    return np.zeros_like(a)


def _d_sin(t, a, w):
    return a * np.sin(w * t)


def _d_constant(t, a, w):
    return a.copy()


DISTURBANCES = {"zero": _d_zero, "sin": _d_sin, "constant": _d_constant}


def _split(entry):
    entry = dict(entry or {"id": "zero"})
    return entry.pop("id", "zero"), entry


def _f_params(p):
    return float(p.get("gain", 1.0)), float(p.get("omega", 1.0))


def _d_params(d_id, p):
    if d_id == "constant":
        return float(p.get("value", 0.0)), 0.0
    return float(p.get("amp", 1.0)), 2.0 * math.pi * float(p.get("hz", 1.0))


def nonlinearity_catalog(f_id, params=None):
    """``f(z, t)`` for a catalog id; see :func:`sector_bound` for its gamma_f."""
    if f_id not in NONLINEARITIES:
        raise UnknownCatalogId(f"unknown nonlinearity id {f_id!r}")
    fn = NONLINEARITIES[f_id]
    g, w = _f_params(params or {})
    return lambda z, t: fn(np.asarray(z, dtype=float), t, g, w)


def sector_bound(f_id, params=None):
    """Smallest ``g`` with ``f'f <= g y'y`` for the catalog entry."""
    if f_id not in NONLINEARITIES:
        raise UnknownCatalogId(f"unknown nonlinearity id {f_id!r}")
    if f_id == "zero":
        return 0.0
    return _f_params(params or {})[0] ** 2


def disturbance_catalog(d_id, params=None):
    if d_id not in DISTURBANCES:
        raise UnknownCatalogId(f"unknown disturbance id {d_id!r}")
    fn = DISTURBANCES[d_id]
    a, w = _d_params(d_id, params or {})
    a, w = np.array([a]), np.array([w])
    return lambda t: float(fn(t, a, w)[0])



# -- schedules and attacks ----------------------------------------------------

@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant switching signal; ``modes`` are 0-based sublayer ids."""

    times: tuple
    modes: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        modes = tuple(int(m) for m in self.modes)
        if not times or times[0] != 0.0 or len(times) != len(modes):
            raise ValueError("schedule must start at t=0 with one mode per interval")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switching times must be strictly increasing")
        if any(m < 0 for m in modes):
            raise ValueError("modes must be nonnegative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "modes", modes)

    @classmethod
    def fixed(cls, mode):
        return cls((0.0,), (mode,))

    @classmethod
    def random(cls, n_modes, dwell, horizon, seed=0, step=DEFAULT_STEP):
        """Uniformly drawn modes, never repeating back to back, one per dwell."""
        rng = np.random.default_rng(seed)
        k = int(round(dwell / step))
        n = int(math.ceil(horizon / dwell - 1e-9))
        modes, prev = [], -1
        for _ in range(n):
            m = int(rng.integers(n_modes - 1)) if n_modes > 1 else 0
            if n_modes > 1 and m >= prev >= 0:
                m += 1
            modes.append(m)
            prev = m
        return cls(tuple(i * k * step for i in range(n)), tuple(modes))

    @property
    def dwell(self):
        if len(self.times) == 1:
            return math.inf
        return min(b - a for a, b in zip(self.times, self.times[1:]))

    def mode_at(self, t):
        idx = bisect.bisect_right(self.times, t) - 1
        return self.modes[max(idx, 0)]


@dataclass(frozen=True)
class LinkBlock:
    """Links silenced by the attacker.

    ``pairs`` are undirected node pairs, ``selfloops`` node indices.  ``start``
    and ``end`` bound the interval ``[start, end)``; ``end=None`` means until
    the end of the run.  ``sublayer`` restricts the block to one sublayer
    (0-based); ``None`` applies it to all of them.
    """

    pairs: frozenset = frozenset()
    selfloops: frozenset = frozenset()
    start: float = 0.0
    end: float = None
    sublayer: int = None

    def __post_init__(self):
        pairs = frozenset(tuple(sorted((int(i), int(j)))) for i, j in self.pairs)
        if any(i == j for i, j in pairs):
            raise ValueError("a blocked pair must join two distinct nodes")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "selfloops", frozenset(int(i) for i in self.selfloops))
        if self.end is not None and self.end <= self.start:
            raise ValueError("attack interval must have end > start")

    def active(self, t, sigma=None):
        if self.sublayer is not None and sigma is not None and sigma != self.sublayer:
            return False
        return t >= self.start and (self.end is None or t < self.end)


@dataclass(frozen=True)
class AttackScenario:
    permanent: LinkBlock = field(default_factory=LinkBlock)
    timed: tuple = ()

    def blocks_at(self, t, sigma):
        pairs, loops = set(self.permanent.pairs), set(self.permanent.selfloops)
        for b in self.timed:
            if b.active(t, sigma):
                pairs |= b.pairs
                loops |= b.selfloops
        return frozenset(pairs), frozenset(loops)

    def event_times(self):
        ts = set()
        for b in self.timed:
            ts.add(b.start)
            if b.end is not None:
                ts.add(b.end)
        return sorted(ts)

    def validate_nodes(self, n_nodes, n_sublayers):
        for b in (self.permanent,) + tuple(self.timed):
            for i, j in b.pairs:
                if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                    raise ValueError(f"attack pair {(i, j)} references an unknown node")
            for i in b.selfloops:
                if not 0 <= i < n_nodes:
                    raise ValueError(f"attacked selfloop {i} references an unknown node")
            if b.sublayer is not None and not 0 <= b.sublayer < n_sublayers:
                raise ValueError(f"attack references unknown sublayer {b.sublayer}")


def _blocked_laplacian(topology, pairs, loops):
    W = np.array(topology.edge_weights)
    s = np.array(topology.selfloop_weights)
    for i, j in pairs:
        W[i, j] = W[j, i] = 0.0
    for i in loops:
        s[i] = 0.0
    return laplacian_from_weights(W, s)


def effective_laplacian(topology, attack, t, sigma=None):
    """Modified Laplacian of ``topology`` with the blocks active at ``t`` removed."""
    pairs, loops = attack.blocks_at(t, sigma)
    if not pairs and not loops:
        return np.array(topology.laplacian)
    return _blocked_laplacian(topology, pairs, loops)


def select_attack_links(topology, design, n_links, n_selfloops):
    """Worst-case links for a budget-limited attacker who knows one sublayer.

    Tries every combination of ``n_links`` edges and ``n_selfloops``
    selfloops of the sublayer and returns the one maximising the spectral
    abscissa of the linear closed loop (ties broken lexicographically).
    """
    edges = topology.structure.edge_list()
    roots = topology.structure.selfloop_nodes()
    n_links = min(n_links, len(edges))
    n_selfloops = min(n_selfloops, len(roots))
    A, Bu, K = design.Abar, design.Bubar, design.Kbar
    eye = np.eye(design.n_u)
    best = None
    for pairs in itertools.combinations(edges, n_links):
        for loops in itertools.combinations(roots, n_selfloops):
            H = _blocked_laplacian(topology, pairs, loops)
            a = _linalg.spectral_abscissa(A + Bu @ np.kron(H, eye) @ K)
            key = (-round(a, 12), pairs, loops)
            if best is None or key < best[0]:
                best = (key, pairs, loops, a)
    return frozenset(best[1]), frozenset(best[2]), best[3]


# -- dynamics -----------------------------------------------------------------

class ClosedLoop:
    """Pre-assembled stacked matrices and catalog callables for one run."""

    def __init__(self, design, layer, adjacency, disturbance=True):
        agents = design.agents
        N = len(agents)
        Aa = np.asarray(adjacency, dtype=float)
        if Aa.shape != (N, N):
            raise DimensionMismatch("agent-layer adjacency does not match the number of agents")
        if len({a.n_x for a in agents}) != 1:
            raise DimensionMismatch("all agents must share the state dimension")
        for top in layer.sublayers:
            if top.n_nodes != N:
                raise DimensionMismatch("sublayer size does not match the number of agents")
        self.design = design
        self.layer = layer
        self.N = N
        self.n_x = agents[0].n_x
        self.n_u = design.n_u
        self.Abar = design.Abar
        self.Bu = design.Bubar
        self.Bf = design.Bfbar
        self.Bd = design.Bdbar
        self.K = design.Kbar
        self.CyAa = design.Cybar @ np.kron(Aa, np.eye(self.n_x))
        f_rows, d_rows, y0 = [], [], 0
        for a in agents:
            fid, fp = _split(a.f)
            if fid not in NONLINEARITIES:
                raise UnknownCatalogId(f"unknown nonlinearity id {fid!r}")
            if a.B_f.shape[1] != a.C_y.shape[0] and fid != "zero":
                raise DimensionMismatch("catalog nonlinearities need n_g == n_y")
            n_y = a.C_y.shape[0]
            if fid == "zero":
                f_rows += [("zero", 0.0, 0.0, -1)] * a.B_f.shape[1]
            else:
                f_rows += [(fid,) + _f_params(fp) + (y0 + r,) for r in range(n_y)]
            y0 += n_y
            did, dp = _split(a.d) if disturbance else ("zero", {})
            if did not in DISTURBANCES:
                raise UnknownCatalogId(f"unknown disturbance id {did!r}")
            d_rows += [(did,) + _d_params(did, dp) + (-1,)] * a.B_d.shape[1]
        self._f_groups = _groups(NONLINEARITIES, f_rows)
        self._d_groups = _groups(DISTURBANCES, d_rows)
        self._n_g, self._n_d = len(f_rows), len(d_rows)
        self.disturbance = disturbance
        self._lin_cache = {}

    def linear_part(self, H):
        key = H.tobytes()
        M = self._lin_cache.get(key)
        if M is None:
            M = self.Abar + self.Bu @ np.kron(H, np.eye(self.n_u)) @ self.K
            self._lin_cache[key] = M
        return M

    def f(self, x, t):
        y = self.CyAa @ x
        out = np.zeros(self._n_g)
        for fn, idx, src, g, w in self._f_groups:
            out[idx] = fn(y[src], t, g, w)
        return out, y

    def d(self, t):
        out = np.zeros(self._n_d)
        for fn, idx, _, a, w in self._d_groups:
            out[idx] = fn(t, a, w)
        return out

    def _rhs(self, x, t, lin):
        return lin @ x + self.Bf @ self.f(x, t)[0] + self.Bd @ self.d(t)

    def rhs(self, x, t, H):
        return self._rhs(x, t, self.linear_part(H))


def _groups(table, rows):
    # (fn, output indices, source indices, first param, second param) per kind;
    # zero kinds are dropped since the output buffer starts at zero
    out = []
    for kind in sorted({r[0] for r in rows} - {"zero"}):
        sel = [k for k, r in enumerate(rows) if r[0] == kind]
        col = lambda c: np.array([rows[k][c] for k in sel])
        out.append((table[kind], np.array(sel, dtype=int), col(3).astype(int), col(1), col(2)))
    return out


def agent_dynamics(x, t, sigma, design, layer, adjacency, attack=None, disturbance=True):
    """Right-hand side of the stacked closed loop with sublayer ``sigma`` active."""
    x = np.asarray(x, dtype=float)
    cl = ClosedLoop(design, layer, adjacency, disturbance)
    if x.shape != (cl.N * cl.n_x,):
        raise DimensionMismatch(f"state must have {cl.N * cl.n_x} entries")
    top = layer.sublayers[sigma]
    H = effective_laplacian(top, attack or AttackScenario(), t, sigma)
    return cl.rhs(x, t, H)


@dataclass
class SimulationResult:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    d: np.ndarray
    sigma: np.ndarray
    attack_active: np.ndarray
    laplacian_ids: np.ndarray
    laplacians: list
    events: list
    h: float
    diverged: bool = False
    diverged_at: float = None

    @property
    def norms(self):
        return np.linalg.norm(self.x, axis=1)


def _grid_index(t, h, what):
    k = round(t / h)
    if abs(k * h - t) > 1e-9 * max(1.0, abs(t)):
        raise EventOffGrid(f"{what} at t={t!r} is not a multiple of the step {h!r}")
    return int(k)


def simulate(design, layer, adjacency, schedule, attack, x0, horizon, h=DEFAULT_STEP,
             ceiling=DEFAULT_CEILING, disturbance=True):
    """Fixed-step RK4 run; stops early once ``||x|| > ceiling``."""
    cl = ClosedLoop(design, layer, adjacency, disturbance)
    x = np.array(x0, dtype=float)
    if x.shape != (cl.N * cl.n_x,):
        raise DimensionMismatch(f"x0 must have {cl.N * cl.n_x} entries")
    attack = attack or AttackScenario()
    n_steps = _grid_index(horizon, h, "horizon")
    for t in schedule.times:
        _grid_index(t, h, "switch")
    for t in attack.event_times():
        _grid_index(t, h, "attack event")
    if max(schedule.modes) >= layer.M:
        raise ValueError("schedule references a sublayer that does not exist")
    attack.validate_nodes(cl.N, layer.M)

    n = n_steps + 1
    ts = np.arange(n) * h
    X = np.empty((n, x.size))
    U = np.empty((n, cl.N * cl.n_u))
    Y = np.empty((n, cl.CyAa.shape[0]))
    D = np.empty((n, cl.Bd.shape[1]))
    S = np.empty(n, dtype=int)
    ATT = np.zeros(n, dtype=bool)
    LID = np.empty(n, dtype=int)
    laplacians, lap_index, input_maps = [], {}, []
    events = []
    eye_u = np.eye(cl.n_u)

    prev_sigma, prev_blocks = None, None
    diverged, diverged_at, last = False, None, n - 1
    for k in range(n):
        t = ts[k]
        # mid-step lookups keep grid-aligned events immune to rounding in k * h
        t_eval = t + 0.5 * h if k < n - 1 else t
        sigma = schedule.mode_at(t_eval)
        blocks = attack.blocks_at(t_eval, sigma)
        top = layer.sublayers[sigma]
        H = effective_laplacian(top, attack, t_eval, sigma)
        key = H.tobytes()
        if key not in lap_index:
            lap_index[key] = len(laplacians)
            laplacians.append(H)
            input_maps.append(np.kron(H, eye_u) @ cl.K)
        if sigma != prev_sigma:
            events.append((t, "switch", f"sigma={sigma + 1}"))
        if blocks != prev_blocks:
            events.append((t, "attack", _describe_blocks(blocks)))
        prev_sigma, prev_blocks = sigma, blocks

        X[k] = x
        fv, yv = cl.f(x, t)
        Y[k] = yv
        D[k] = cl.d(t)
        U[k] = input_maps[lap_index[key]] @ x
        S[k] = sigma
        ATT[k] = not np.array_equal(H, top.laplacian)
        LID[k] = lap_index[key]
        nx = np.linalg.norm(x)
        if not np.isfinite(nx) or nx > ceiling:
            diverged, diverged_at, last = True, float(t), k
            events.append((t, "diverged", f"norm={nx!r}"))
            break
        if k == n - 1:
            break
        lin = cl.linear_part(H)
        k1 = cl._rhs(x, t, lin)
        k2 = cl._rhs(x + 0.5 * h * k1, t + 0.5 * h, lin)
        k3 = cl._rhs(x + 0.5 * h * k2, t + 0.5 * h, lin)
        k4 = cl._rhs(x + h * k3, t + h, lin)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    sl = slice(0, last + 1)
    return SimulationResult(
        ts[sl], X[sl], U[sl], Y[sl], D[sl], S[sl], ATT[sl], LID[sl], laplacians, events, h,
        diverged, diverged_at,
    )


def _describe_blocks(blocks):
    pairs, loops = blocks
    if not pairs and not loops:
        return "none"
    parts = [f"{i + 1}-{j + 1}" for i, j in sorted(pairs)]
    parts += [f"self{i + 1}" for i in sorted(loops)]
    return " ".join(parts)
