"""JSON scenario files: parsing, validation, serialisation and the bundled example.

Indices in scenario files are 1-based (agents, nodes, sublayers); the library
is 0-based and the conversion happens in :mod:`switchmtd.pipeline`.  A parsed
:class:`Scenario` holds normalised plain data (lists, floats, ints) so that
``parse(serialize(s)) == s``.  See ``docs/scenario.md`` for the schema.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScenarioError

SCHEMA = "switchmtd-scenario/1"

SCHEDULE_KINDS = ("fixed", "random", "explicit")
EXPECT = ("diverged", "iss_bounded", "exponential", "any")


@dataclass
class Scenario:
    name: str
    agents: list
    agent_layer: dict
    synthesis: dict
    sublayer_weights: dict
    weights: dict
    sim: dict
    experiments: list
    seed: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def n_x(self):
        return len(self.agents[0]["A"])

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "name": self.name,
            "seed": self.seed,
            "agents": self.agents,
            "agent_layer": self.agent_layer,
            "synthesis": self.synthesis,
            "sublayer_weights": self.sublayer_weights,
            "weights": self.weights,
            "sim": self.sim,
            "experiments": self.experiments,
            "notes": self.notes,
        }

    def experiment(self, name):
        for e in self.experiments:
            if e["name"] == name:
                return e
        raise KeyError(name)


# -- field validators -----------------------------------------------------------

def _fail(path, msg):
    raise ScenarioError(msg, path)


def _get(d, key, path, default=...):
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    if key not in d:
        if default is ...:
            _fail(f"{path}.{key}", "missing required field")
        return default
    return d[key]


def _number(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        _fail(path, "number must be finite")
    if positive and v <= 0:
        _fail(path, "must be positive")
    if nonneg and v < 0:
        _fail(path, "must be nonnegative")
    return v


def _integer(v, path, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            _fail(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        _fail(path, f"must be >= {lo}")
    if hi is not None and v > hi:
        _fail(path, f"must be <= {hi}")
    return int(v)


def _matrix(v, path, rows=None, cols=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [[v]]
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        _fail(path, "expected a non-empty nested array (row-major)")
    width = len(v[0])
    if width == 0 or any(len(r) != width for r in v):
        _fail(path, "rows must be non-empty and of equal length")
    if rows is not None and len(v) != rows:
        _fail(path, f"expected {rows} rows, got {len(v)}")
    if cols is not None and width != cols:
        _fail(path, f"expected {cols} columns, got {width}")
    return [[_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(v)]


def _vector(v, path, length=None):
    if not isinstance(v, list):
        _fail(path, "expected an array")
    if length is not None and len(v) != length:
        _fail(path, f"expected {length} entries, got {len(v)}")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _catalog(v, path):
    if v is None:
        return {"id": "zero"}
    if not isinstance(v, dict) or not isinstance(v.get("id"), str):
        _fail(path, "expected an object with a string 'id'")
    out = {"id": v["id"]}
    for k in sorted(v):
        if k != "id":
            out[k] = _number(v[k], f"{path}.{k}")
    return out


def _pairs(v, n, path):
    if not isinstance(v, list):
        _fail(path, "expected an array of [i, j] pairs")
    out = []
    for k, p in enumerate(v):
        if not isinstance(p, list) or len(p) != 2:
            _fail(f"{path}[{k}]", "expected a pair [i, j]")
        i = _integer(p[0], f"{path}[{k}][0]", 1, n)
        j = _integer(p[1], f"{path}[{k}][1]", 1, n)
        if i == j:
            _fail(f"{path}[{k}]", "pair must join two distinct nodes")
        out.append([i, j])
    return out


def _nodes(v, n, path):
    if not isinstance(v, list):
        _fail(path, "expected an array of node indices")
    return [_integer(x, f"{path}[{k}]", 1, n) for k, x in enumerate(v)]


# -- blocks ---------------------------------------------------------------------

def _parse_agent(a, k):
    path = f"agents[{k}]"
    A = _matrix(_get(a, "A", path), f"{path}.A")
    n = len(A)
    if len(A[0]) != n:
        _fail(f"{path}.A", "must be square")
    out = {"A": A}
    for key in ("B_u", "B_f", "B_d"):
        out[key] = _matrix(_get(a, key, path), f"{path}.{key}", rows=n)
    out["C_y"] = _matrix(_get(a, "C_y", path), f"{path}.C_y", cols=n)
    out["f"] = _catalog(a.get("f"), f"{path}.f")
    out["d"] = _catalog(a.get("d"), f"{path}.d")
    return out


def _parse_agent_layer(b, N):
    path = "agent_layer"
    out = {
        "gamma_cy": _number(_get(b, "gamma_cy", path), f"{path}.gamma_cy", positive=True),
        "gamma_f": _number(_get(b, "gamma_f", path), f"{path}.gamma_f", positive=True),
        "adjacency": None,
        "norm_Aa": None,
    }
    if b.get("adjacency") is not None:
        out["adjacency"] = _matrix(b["adjacency"], f"{path}.adjacency", rows=N, cols=N)
    if b.get("norm_Aa") is not None:
        out["norm_Aa"] = _number(b["norm_Aa"], f"{path}.norm_Aa", nonneg=True)
    if out["adjacency"] is None and out["norm_Aa"] is None:
        _fail(path, "give either 'adjacency' or an asserted 'norm_Aa'")
    return out


def _parse_synthesis(b, N):
    path = "synthesis"
    M = _integer(_get(b, "M", path), f"{path}.M", 1)
    T = _integer(_get(b, "T", path), f"{path}.T", 0)
    theta = b.get("selfloop_capable", [1] * N)
    theta = [_integer(x, f"{path}.selfloop_capable[{i}]", 0, 1) for i, x in enumerate(theta)]
    if len(theta) != N:
        _fail(f"{path}.selfloop_capable", f"expected {N} entries")
    seed = b.get("seed")
    if seed is not None:
        seed = _integer(seed, f"{path}.seed", 0)
    return {
        "M": M,
        "T": T,
        "selfloop_capable": theta,
        "risky_pairs": _pairs(b.get("risky_pairs", []), N, f"{path}.risky_pairs"),
        "seed": seed,
    }


def _parse_sublayer_weights(b, N, M):
    path = "sublayer_weights"
    if "rule" in b:
        r = b["rule"]
        return {
            "rule": {
                "root_edge": _number(_get(r, "root_edge", f"{path}.rule"), f"{path}.rule.root_edge", positive=True),
                "relay_edge": _number(_get(r, "relay_edge", f"{path}.rule"), f"{path}.rule.relay_edge", positive=True),
                "selfloop": _number(_get(r, "selfloop", f"{path}.rule"), f"{path}.rule.selfloop", positive=True),
            }
        }
    blocks = _get(b, "explicit", path)
    if not isinstance(blocks, list) or len(blocks) != M:
        _fail(f"{path}.explicit", f"expected {M} sublayer blocks")
    out = []
    for k, blk in enumerate(blocks):
        p = f"{path}.explicit[{k}]"
        edges = []
        for m, e in enumerate(_get(blk, "edges", p)):
            if not isinstance(e, list) or len(e) != 3:
                _fail(f"{p}.edges[{m}]", "expected [i, j, weight]")
            i, j = _pairs([e[:2]], N, f"{p}.edges[{m}]")[0]
            edges.append([i, j, _number(e[2], f"{p}.edges[{m}][2]", positive=True)])
        loops = []
        for m, e in enumerate(_get(blk, "selfloops", p)):
            if not isinstance(e, list) or len(e) != 2:
                _fail(f"{p}.selfloops[{m}]", "expected [i, weight]")
            loops.append([_integer(e[0], f"{p}.selfloops[{m}][0]", 1, N),
                          _number(e[1], f"{p}.selfloops[{m}][1]", positive=True)])
        out.append({"edges": edges, "selfloops": loops})
    return {"explicit": out}


def _per_agent(v, N, path, dim):
    # one matrix for everybody, or a list with one matrix per agent
    if isinstance(v, list) and len(v) == N and v and isinstance(v[0], list) and v[0] and isinstance(v[0][0], list):
        return [_matrix(m, f"{path}[{i}]", dim, dim) for i, m in enumerate(v)]
    return _matrix(v, path, dim, dim)


def _parse_weights(b, N, n_x, n_u):
    path = "weights"
    return {
        "Q": _per_agent(_get(b, "Q", path), N, f"{path}.Q", n_x),
        "R": _per_agent(_get(b, "R", path), N, f"{path}.R", n_u),
        "a_f": _number(_get(b, "a_f", path), f"{path}.a_f", positive=True),
        "a_d": _number(_get(b, "a_d", path), f"{path}.a_d", positive=True),
    }


def _parse_sim(b, N, n_x):
    path = "sim"
    return {
        "h": _number(b.get("h", 1e-3), f"{path}.h", positive=True),
        "horizon": _number(_get(b, "horizon", path), f"{path}.horizon", positive=True),
        "x0": _vector(_get(b, "x0", path), f"{path}.x0", N * n_x),
        "ceiling": _number(b.get("ceiling", 1e6), f"{path}.ceiling", positive=True),
    }


def _parse_schedule(b, M, path):
    kind = _get(b, "kind", path)
    if kind not in SCHEDULE_KINDS:
        _fail(f"{path}.kind", f"expected one of {SCHEDULE_KINDS}")
    if kind == "fixed":
        return {"kind": kind, "sublayer": _integer(_get(b, "sublayer", path), f"{path}.sublayer", 1, M)}
    if kind == "random":
        return {"kind": kind, "dwell": _number(_get(b, "dwell", path), f"{path}.dwell", positive=True)}
    times = _vector(_get(b, "times", path), f"{path}.times")
    modes = [_integer(m, f"{path}.modes[{i}]", 1, M) for i, m in enumerate(_get(b, "modes", path))]
    if len(times) != len(modes) or not times or times[0] != 0.0:
        _fail(path, "times must start at 0 and match modes in length")
    if any(b2 <= a for a, b2 in zip(times, times[1:])):
        _fail(f"{path}.times", "must be strictly increasing")
    return {"kind": kind, "times": times, "modes": modes}


def _parse_block(b, N, M, path, timed):
    out = {
        "pairs": _pairs(b.get("pairs", []), N, f"{path}.pairs"),
        "selfloops": _nodes(b.get("selfloops", []), N, f"{path}.selfloops"),
    }
    if timed:
        start = _number(b.get("start", 0.0), f"{path}.start", nonneg=True)
        end = b.get("end")
        if end is not None:
            end = _number(end, f"{path}.end")
            if end <= start:
                _fail(f"{path}.end", "must exceed start")
        sub = b.get("sublayer")
        if sub is not None:
            sub = _integer(sub, f"{path}.sublayer", 1, M)
        auto = b.get("auto")
        if auto is not None:
            if sub is None:
                _fail(f"{path}.auto", "automatic link selection needs a 'sublayer'")
            auto = {
                "links": _integer(_get(auto, "links", f"{path}.auto"), f"{path}.auto.links", 0),
                "selfloops": _integer(_get(auto, "selfloops", f"{path}.auto"), f"{path}.auto.selfloops", 0),
            }
        out.update(start=start, end=end, sublayer=sub, auto=auto)
    return out


def _parse_experiment(e, k, N, M):
    path = f"experiments[{k}]"
    name = _get(e, "name", path)
    if not isinstance(name, str) or not name or not all(c.isalnum() or c in "_-" for c in name):
        _fail(f"{path}.name", "expected a non-empty [A-Za-z0-9_-] name")
    att = e.get("attack") or {}
    timed = att.get("timed", [])
    if not isinstance(timed, list):
        _fail(f"{path}.attack.timed", "expected an array")
    expect = e.get("expect", "any")
    if expect not in EXPECT:
        _fail(f"{path}.expect", f"expected one of {EXPECT}")
    return {
        "name": name,
        "schedule": _parse_schedule(_get(e, "schedule", path), M, f"{path}.schedule"),
        "attack": {
            "permanent": _parse_block(att.get("permanent") or {}, N, M, f"{path}.attack.permanent", False),
            "timed": [_parse_block(b, N, M, f"{path}.attack.timed[{i}]", True) for i, b in enumerate(timed)],
        },
        "disturbance": bool(e.get("disturbance", True)),
        "expect": expect,
    }


def parse_scenario(data):
    """Validate a decoded JSON object and return a normalised :class:`Scenario`."""
    if not isinstance(data, dict):
        _fail("$", "scenario must be a JSON object")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        _fail("schema", f"unsupported schema {schema!r} (expected {SCHEMA!r})")
    agents = _get(data, "agents", "$")
    if not isinstance(agents, list) or not agents:
        _fail("agents", "expected a non-empty array")
    agents = [_parse_agent(a, k) for k, a in enumerate(agents)]
    N = len(agents)
    n_x = len(agents[0]["A"])
    n_u = len(agents[0]["B_u"][0])
    for k, a in enumerate(agents):
        if len(a["A"]) != n_x:
            _fail(f"agents[{k}].A", "all agents must share the state dimension")
        if len(a["B_u"][0]) != n_u:
            _fail(f"agents[{k}].B_u", "all agents must share the input dimension")
    synthesis = _parse_synthesis(_get(data, "synthesis", "$"), N)
    M = synthesis["M"]
    experiments = data.get("experiments", [])
    if not isinstance(experiments, list):
        _fail("experiments", "expected an array")
    experiments = [_parse_experiment(e, k, N, M) for k, e in enumerate(experiments)]
    names = [e["name"] for e in experiments]
    if len(set(names)) != len(names):
        _fail("experiments", "experiment names must be unique")
    notes = data.get("notes", {})
    if not isinstance(notes, dict) or not all(isinstance(v, str) for v in notes.values()):
        _fail("notes", "expected an object of strings")
    return Scenario(
        name=str(data.get("name", "scenario")),
        agents=agents,
        agent_layer=_parse_agent_layer(_get(data, "agent_layer", "$"), N),
        synthesis=synthesis,
        sublayer_weights=_parse_sublayer_weights(_get(data, "sublayer_weights", "$"), N, M),
        weights=_parse_weights(_get(data, "weights", "$"), N, n_x, n_u),
        sim=_parse_sim(_get(data, "sim", "$"), N, n_x),
        experiments=experiments,
        seed=_integer(data.get("seed", 0), "seed", 0),
        notes=dict(notes),
    )


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"column {exc.colno}: {exc.msg}", f"line {exc.lineno}") from None
    return parse_scenario(data)


def load_scenario(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return loads(text)


def dumps(scenario):
    return json.dumps(scenario.to_dict(), indent=2) + "\n"


def save_scenario(scenario, path):
    Path(path).write_text(dumps(scenario), encoding="utf-8")


# -- bundled example ------------------------------------------------------------

def _bundled_agents():
    A_l, B_l = [[0.0, 1.0], [-1.0, 0.25]], [[0.0], [1.0]]
    A_m, B_m = [[0.0, 1.0], [0.25, -1.0]], [[0.25], [-1.0]]
    B_f = [B_l, [[0.5], [-1.0]], [[0.25], [-0.75]], B_l, [[-0.5], [0.5]], [[0.0], [1.0]], [[0.0], [-1.0]], B_m]
    B_d = [B_l, [[0.25], [-0.75]], [[0.5], [1.0]], B_l, B_m, [[0.0], [1.0]], [[0.5], [0.5]], [[0.0], [1.0]]]
    f = [
        {"id": "tanh", "gain": 0.5},
        {"id": "sin", "gain": -0.4},
        {"id": "sin_t_tanh", "gain": 0.5, "omega": 1.0},
        {"id": "tanh", "gain": -0.4},
        {"id": "sin", "gain": -0.5},
        {"id": "sin_t_sin", "gain": 0.4, "omega": 1.0},
        {"id": "linear", "gain": 0.5},
        {"id": "tanh", "gain": 0.4},
    ]
    agents = []
    for i in range(8):
        leader = i < 4
        agents.append({
            "A": A_l if leader else A_m,
            "B_u": B_l if leader else B_m,
            "B_f": B_f[i],
            "B_d": B_d[i],
            "C_y": [[0.0, 1.0]] if leader else [[-1.0, 0.0]],
            "f": f[i],
            # agents 1, 3, 5, 7: sin(pi t) / 3; agents 2, 4, 6, 8: sin(2 pi t) / 3
            "d": {"id": "sin", "amp": 1.0 / 3.0, "hz": 0.5 if i % 2 == 0 else 1.0},
        })
    return agents


RING_SIGNS = (1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0)


def _ring_adjacency(signs):
    n = len(signs)
    A = [[0.0] * n for _ in range(n)]
    for i, s in enumerate(signs):
        A[i][(i + 1) % n] = s
    return A


def bundled_scenario_dict():
    """The bundled eight-agent, five-sublayer example as a plain dict."""
    risky = [[1, 4], [3, 7], [3, 8]]
    auto = {"links": 2, "selfloops": 1}
    # sublayer 5 attacked first, then 4, 3, 2 and finally 1 until the end
    timed = [
        {"sublayer": 5 - k, "start": 2.0 * k, "end": 2.0 * (k + 1) if k < 4 else None, "auto": auto}
        for k in range(5)
    ]
    x0 = [0.5, -0.5] * 8
    return {
        "schema": SCHEMA,
        "name": "two-layer-mas-8-agents",
        "seed": 0,
        "agents": _bundled_agents(),
        "agent_layer": {"adjacency": _ring_adjacency(RING_SIGNS), "gamma_cy": 1.0, "gamma_f": 0.25},
        "synthesis": {
            "M": 5,
            "T": 3,
            "selfloop_capable": [1, 0, 1, 1, 0, 1, 1, 1],
            "risky_pairs": risky,
            "seed": None,
        },
        "sublayer_weights": {"rule": {"root_edge": 4.0, "relay_edge": 2.0, "selfloop": 16.0}},
        "weights": {"Q": [[10.0, 0.0], [0.0, 10.0]], "R": [[1.0]], "a_f": 10.0, "a_d": 1.0},
        "sim": {"h": 0.001, "horizon": 10.0, "x0": x0, "ceiling": 1e6},
        "experiments": [
            {
                "name": "fixed_sublayer_attack",
                "schedule": {"kind": "fixed", "sublayer": 1},
                "attack": {"timed": [{"sublayer": 1, "start": 0.0, "end": None, "auto": auto}]},
                "disturbance": True,
                "expect": "diverged",
            },
            {
                "name": "switching_under_dos",
                "schedule": {"kind": "random", "dwell": 0.01},
                "attack": {"permanent": {"pairs": risky}, "timed": timed},
                "disturbance": True,
                "expect": "iss_bounded",
            },
            {
                "name": "nominal_decay",
                "schedule": {"kind": "random", "dwell": 0.001},
                "disturbance": False,
                "expect": "exponential",
            },
            {
                "name": "fast_switching_disturbed",
                "schedule": {"kind": "random", "dwell": 0.001},
                "disturbance": True,
                "expect": "iss_bounded",
            },
        ],
        "notes": {
            "agent_layer": "signed directed ring i -> i+1 (mod 8) with unit weights; ||A_a|| = 1",
            "gamma_f": "max squared slope of the catalog nonlinearities: 0.5^2",
            "gamma_cy": "every output row C_i has unit norm",
            "sublayer_weights": "weight 4 on edges into a selfloop node, 2 on relay edges, 16 on selfloops",
            "weights": "Q_i = 10 I, R_i = 1, a_f = 10, a_d = 1; unit weights fail the validation test here",
        },
    }


def bundled_scenario():
    return parse_scenario(bundled_scenario_dict())


def bundled_path():
    return Path(__file__).with_name("data") / "example_scenario.json"
