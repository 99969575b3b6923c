"""Scenario-to-library glue: synthesis, weighting, design, simulation, artifact IO.

Scenario and artifact files are 1-based; everything handed to the library is
0-based.
"""

import json
from pathlib import Path

import numpy as np

from . import analysis, design as dsg, graph, sim, synth
from .errors import ScenarioError

STRUCTURES_SCHEMA = "switchmtd-structures/1"
GAINS_SCHEMA = "switchmtd-gains/1"


# -- scenario -> library objects ----------------------------------------------

def build_agents(sc):
    return tuple(
        dsg.AgentModel(a["A"], a["B_u"], a["B_f"], a["B_d"], a["C_y"], dict(a["f"]), dict(a["d"]))
        for a in sc.agents
    )


def adjacency(sc):
    A = sc.agent_layer["adjacency"]
    return None if A is None else np.array(A, dtype=float)


def designer_bounds(sc):
    al = sc.agent_layer
    if al["norm_Aa"] is not None:
        return graph.DesignerBounds(al["norm_Aa"], al["gamma_cy"], al["gamma_f"])
    return graph.AgentLayerGraph(adjacency(sc)).bounds(al["gamma_cy"], al["gamma_f"])


def synthesis_problem(sc):
    s = sc.synthesis
    pairs = [(i - 1, j - 1) for i, j in s["risky_pairs"]]
    return synth.SynthesisProblem.from_risk_pairs(s["M"], sc.n_agents, s["T"], s["selfloop_capable"], pairs)


def run_synthesis(sc):
    return synth.generate_all_graphs(synthesis_problem(sc), seed=sc.synthesis["seed"])


def sublayer_weights(sc, structures):
    """``(W, s)`` per sublayer from the scenario's explicit weights or weight rule."""
    N = sc.n_agents
    spec = sc.sublayer_weights
    out = []
    if "rule" in spec:
        rule = spec["rule"]
        for st in structures:
            W, s = np.zeros((N, N)), np.zeros(N)
            depth = st.depth()
            for i, j in st.edge_list():
                # edges touching a selfloop node are "root" edges, the rest relay
                w = rule["root_edge"] if min(depth[i], depth[j]) == 0 else rule["relay_edge"]
                W[i, j] = W[j, i] = w
            s[st.selfloops == 1] = rule["selfloop"]
            out.append((W, s))
        return out
    for k, blk in enumerate(spec["explicit"]):
        W, s = np.zeros((N, N)), np.zeros(N)
        for i, j, w in blk["edges"]:
            W[i - 1, j - 1] = W[j - 1, i - 1] = w
        for i, w in blk["selfloops"]:
            s[i - 1] = w
        out.append((W, s))
    return out


def build_layer(sc, structures):
    if len(structures) != sc.synthesis["M"]:
        raise ScenarioError(f"expected {sc.synthesis['M']} structures, got {len(structures)}", "structures")
    tops = [graph.build_modified_laplacian(st, W, s) for st, (W, s) in zip(structures, sublayer_weights(sc, structures))]
    return graph.ControlLayer.from_sublayers(tops)


def design_weights(sc):
    w = sc.weights
    N = sc.n_agents

    def per_agent(m):
        return tuple(m) if isinstance(m[0][0], list) else (m,) * N

    return dsg.DesignWeights(per_agent(w["Q"]), per_agent(w["R"]), w["a_f"], w["a_d"])


def run_design(sc, layer):
    return dsg.design_gains(build_agents(sc), design_weights(sc), designer_bounds(sc), layer)


def schedule_for(sc, exp, layer, seed):
    s = exp["schedule"]
    h = sc.sim["h"]
    if s["kind"] == "fixed":
        return sim.SwitchingSchedule.fixed(s["sublayer"] - 1)
    if s["kind"] == "random":
        idx = [e["name"] for e in sc.experiments].index(exp["name"])
        return sim.SwitchingSchedule.random(layer.M, s["dwell"], sc.sim["horizon"], seed=[seed, idx], step=h)
    return sim.SwitchingSchedule(tuple(s["times"]), tuple(m - 1 for m in s["modes"]))


def attack_for(exp, layer, design):
    """Resolve a scenario attack block, picking ``auto`` links on the named sublayer."""
    a = exp["attack"]
    perm = sim.LinkBlock(
        [(i - 1, j - 1) for i, j in a["permanent"]["pairs"]],
        [i - 1 for i in a["permanent"]["selfloops"]],
    )
    timed = []
    for b in a["timed"]:
        pairs = {(i - 1, j - 1) for i, j in b["pairs"]}
        loops = {i - 1 for i in b["selfloops"]}
        sub = None if b["sublayer"] is None else b["sublayer"] - 1
        if b["auto"] is not None:
            p, l, _ = sim.select_attack_links(layer.sublayers[sub], design, b["auto"]["links"], b["auto"]["selfloops"])
            pairs |= p
            loops |= l
        timed.append(sim.LinkBlock(pairs, loops, b["start"], b["end"], sub))
    return sim.AttackScenario(perm, tuple(timed))


def run_experiment(sc, exp, design, layer, seed=None):
    seed = sc.seed if seed is None else seed
    A = adjacency(sc)
    if A is None:
        raise ScenarioError("simulation needs an explicit agent-layer adjacency", "agent_layer.adjacency")
    return sim.simulate(
        design, layer, A,
        schedule_for(sc, exp, layer, seed),
        attack_for(exp, layer, design),
        np.array(sc.sim["x0"]),
        sc.sim["horizon"],
        h=sc.sim["h"],
        ceiling=sc.sim["ceiling"],
        disturbance=exp["disturbance"],
    )


# -- structures file -------------------------------------------------------------

def structures_to_dict(structures):
    blocks = []
    for k, st in enumerate(structures):
        blk = {
            "sublayer": k + 1,
            "edges": [[i + 1, j + 1] for i, j in st.edge_list()],
            "selfloops": [i + 1 for i in st.selfloop_nodes()],
        }
        if st.targets is not None:
            # every node's parent in its in-tree; a selfloop node is its own parent
            blk["parent"] = [i + 1 if t < 0 else t + 1 for i, t in enumerate(st.targets)]
        blocks.append(blk)
    return {"schema": STRUCTURES_SCHEMA, "structures": blocks}


def structures_from_dict(data, n_nodes):
    if not isinstance(data, dict) or data.get("schema") != STRUCTURES_SCHEMA:
        raise ScenarioError(f"not a {STRUCTURES_SCHEMA} document", "schema")
    out = []
    for k, blk in enumerate(data.get("structures", [])):
        path = f"structures[{k}]"
        try:
            if "parent" in blk:
                par = blk["parent"]
                if len(par) != n_nodes:
                    raise ScenarioError(f"expected {n_nodes} parents", f"{path}.parent")
                out.append(graph.SublayerStructure.from_targets([-1 if p == i + 1 else p - 1 for i, p in enumerate(par)]))
                continue
            E = np.zeros((n_nodes, n_nodes), dtype=int)
            s = np.zeros(n_nodes, dtype=int)
            for i, j in blk["edges"]:
                E[i - 1, j - 1] = E[j - 1, i - 1] = 1
            for i in blk["selfloops"]:
                s[i - 1] = 1
            out.append(graph.SublayerStructure(E, s))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed structure block ({exc})", path) from None
    return out


# -- gains file ------------------------------------------------------------------

def _nested(a):
    return np.asarray(a, dtype=float).tolist()


def gains_to_dict(design, layer):
    low = dsg.validation_low_dimension(design)
    out = {
        "schema": GAINS_SCHEMA,
        "mu_min": design.mu_min,
        "sublayer_mu_1": [t.mu_1 for t in layer.sublayers],
        "agents": [
            {"K": _nested(K), "P": _nested(P), "Q_f": _nested(Qf)}
            for K, P, Qf in zip(design.K, design.P, design.Q_f)
        ],
        "validation": {
            "min_eig_per_sublayer": list(design.validation_eigs),
            "passed": design.passed,
            "per_agent_min_eig": list(low.eigs),
            "per_agent_passed": low.passed,
            "per_agent_admissible": dsg.per_agent_hypothesis(design, layer),
        },
        "gamma_d": design.gamma_d,
    }
    if design.passed:
        Qv = dsg.common_decay_matrix(design, layer)
        kappa, sigma = analysis.exponential_constants(design.Pbar, Qv)
        out["kappa_e"] = kappa
        out["sigma_e"] = sigma
        out["iss_gain"] = analysis.iss_gain(design.Pbar, Qv, design.gamma_d)
    return out


def design_from_gains(sc, data, layer):
    if not isinstance(data, dict) or data.get("schema") != GAINS_SCHEMA:
        raise ScenarioError(f"not a {GAINS_SCHEMA} document", "schema")
    ags = data.get("agents", [])
    if len(ags) != sc.n_agents:
        raise ScenarioError(f"expected {sc.n_agents} agent entries", "agents")
    try:
        P = tuple(np.array(a["P"], dtype=float) for a in ags)
        K = tuple(np.array(a["K"], dtype=float) for a in ags)
        Qf = tuple(np.array(a["Q_f"], dtype=float) for a in ags)
        eigs = tuple(float(e) for e in data["validation"]["min_eig_per_sublayer"])
        mu = float(data["mu_min"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed gains file ({exc})", "agents") from None
    return dsg.GainDesign(build_agents(sc), design_weights(sc), mu, P, K, Qf, eigs)


# -- CSV -------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_results_csv(path, result):
    n = result.x.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["t"] + [f"x_{i + 1}" for i in range(n)] + ["sigma", "attack_active"]) + "\n")
        for t, x, s, a in zip(result.t, result.x, result.sigma, result.attack_active):
            fh.write(",".join([_fmt(t)] + [_fmt(v) for v in x] + [str(int(s) + 1), str(int(a))]) + "\n")


def write_events_csv(path, result):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,kind,detail\n")
        for t, kind, detail in result.events:
            fh.write(f"{_fmt(t)},{kind},{detail}\n")


def read_results_csv(path, h=None):
    """Load a results CSV back into a :class:`~switchmtd.sim.SimulationResult`.

    Only ``t``, ``x``, ``sigma`` and ``attack_active`` are stored; ``d`` must be
    recomputed by the caller if needed.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not header or header[0] != "t" or header[-2:] != ["sigma", "attack_active"]:
        raise ScenarioError("unexpected results header", f"{path}: line 1")
    try:
        data = np.array(rows, dtype=float)
    except ValueError:
        raise ScenarioError("non-numeric entry in results", str(path)) from None
    t = data[:, 0]
    X = data[:, 1:-2]
    S = data[:, -2].astype(int) - 1
    A = data[:, -1].astype(bool)
    if h is None:
        h = float(t[1] - t[0]) if len(t) > 1 else 1e-3
    empty = np.zeros((len(t), 0))
    return sim.SimulationResult(t, X, empty, empty, empty, S, A, np.zeros(len(t), int), [], [], h)


def disturbance_trace(sc, design, layer, result, enabled=True):
    cl = sim.ClosedLoop(design, layer, adjacency(sc), enabled)
    return np.array([cl.d(t) for t in result.t])


def write_series_csv(path, header, columns):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def read_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read {what}: {exc.strerror}", str(path)) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"column {exc.colno}: {exc.msg}", f"{path}: line {exc.lineno}") from None
