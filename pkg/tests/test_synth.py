import itertools
import time

import numpy as np
import pytest

from oracles import brute_force_assignments
from switchmtd import graph, synth
from switchmtd.errors import Unsatisfiable

BUNDLED_INSTANCE = dict(n_sublayers=5, n_nodes=8, budget=3, capability=(1, 0, 1, 1, 0, 1, 1, 1),
                risky_pairs=[(0, 3), (2, 6), (2, 7)])


def problem(M, N, T, theta, risky=()):
    return synth.SynthesisProblem.from_risk_pairs(M, N, T, theta, risky)


def solver_set(prob, memory=None, seed=None):
    return {s.targets for s in synth.iter_structures(prob, memory, seed)}


def test_two_node_example():
    s = synth.generate_one_graph(problem(1, 2, 1, (1, 0)))
    assert s.targets == (-1, 0)
    assert s.selfloops.tolist() == [1, 0]
    assert s.edges.tolist() == [[0, 1], [1, 0]]


def test_single_node():
    s = synth.generate_one_graph(problem(1, 1, 1, (1,)))
    assert s.selfloops.tolist() == [1] and s.edges.tolist() == [[0]]


def test_three_node_one_root():
    # with one root the path rule allows stars and two-hop chains;
    # ascending search returns the star
    prob = problem(1, 3, 1, (1, 0, 0))
    s = synth.generate_one_graph(prob)
    assert s.targets == (-1, 0, 0)
    assert solver_set(prob) == {(-1, 0, 0), (-1, 0, 1), (-1, 2, 0)}


def test_two_node_two_sublayers_unsat():
    with pytest.raises(Unsatisfiable) as exc:
        synth.generate_all_graphs(problem(2, 2, 1, (1, 1)))
    assert exc.value.sublayer == 2


def test_all_selfloops():
    out = synth.generate_all_graphs(problem(1, 4, 4, (1, 1, 1, 1)))
    assert len(out) == 1
    assert out[0].selfloops.tolist() == [1, 1, 1, 1] and not out[0].edges.any()


def test_budget_exceeds_capability():
    with pytest.raises(Unsatisfiable) as exc:
        synth.generate_one_graph(problem(1, 3, 2, (1, 0, 0)))
    assert exc.value.constraint is not None


CASES = [
    (N, T, theta)
    for N in (1, 2, 3)
    for T in range(0, N + 1)
    for theta in itertools.product((0, 1), repeat=N)
]


@pytest.mark.parametrize("N, T, theta", CASES)
def test_solver_equals_brute_force_small(N, T, theta):
    risk = np.ones((N, N), dtype=int)
    eta = np.ones((N, N), dtype=int)
    prob = problem(1, N, T, theta)
    assert solver_set(prob) == brute_force_assignments(N, T, theta, risk, eta)


@pytest.mark.parametrize("T, theta, risky, used", [
    (1, (1, 1, 1, 1), [], []),
    (2, (1, 0, 1, 1), [(0, 3)], []),
    (1, (0, 1, 1, 0), [(1, 2)], [(0, 1)]),
    (2, (1, 1, 1, 1), [(0, 1), (2, 3)], [(0, 2)]),
    (3, (1, 1, 0, 1), [], [(0, 3), (1, 2)]),
])
def test_solver_equals_brute_force_four_nodes(T, theta, risky, used):
    N = 4
    prob = problem(1, N, T, theta, risky)
    mem = synth.NonOverlapMemory.fresh(N)
    eta = mem.eta.copy()
    for i, j in used:
        eta[i, j] = eta[j, i] = 0
    mem = synth.NonOverlapMemory(eta)
    assert solver_set(prob, mem) == brute_force_assignments(N, T, theta, prob.risk_mask, eta)
    # a seeded shuffle changes the order, not the set
    assert solver_set(prob, mem, seed=7) == solver_set(prob, mem)


def test_bundled_instance():
    prob = synth.SynthesisProblem.from_risk_pairs(**BUNDLED_INSTANCE)
    t0 = time.perf_counter()
    out = synth.generate_all_graphs(prob)
    assert time.perf_counter() - t0 < 10.0
    assert len(out) == 5
    mem = synth.NonOverlapMemory.fresh(8)
    for s in out:
        rep = synth.check_constraints(s, prob, mem)
        assert rep.passed, list(rep.lines())
        assert graph.validate_sublayer(s).valid
        assert s.selfloops.sum() == 3
        assert s.selfloops[1] == 0 and s.selfloops[4] == 0
        for i, j in BUNDLED_INSTANCE["risky_pairs"]:
            assert s.edges[i, j] == 0
        mem = mem.after(s)
    for a, b in itertools.combinations(out, 2):
        assert not np.any(a.edges & b.edges)


def test_deterministic_replay():
    prob = synth.SynthesisProblem.from_risk_pairs(**BUNDLED_INSTANCE)
    a = [s.targets for s in synth.generate_all_graphs(prob, seed=11)]
    b = [s.targets for s in synth.generate_all_graphs(prob, seed=11)]
    assert a == b
    assert [s.targets for s in synth.generate_all_graphs(prob)] == [s.targets for s in synth.generate_all_graphs(prob)]


@pytest.mark.parametrize("seed", range(8))
def test_seeded_layers_are_sound(seed):
    prob = synth.SynthesisProblem.from_risk_pairs(**BUNDLED_INSTANCE)
    out = synth.generate_all_graphs(prob, seed=seed)
    mem = synth.NonOverlapMemory.fresh(8)
    for s in out:
        assert synth.check_constraints(s, prob, mem).passed
        mem = mem.after(s)


def test_checker_flags_budget_and_risk():
    prob = problem(1, 2, 1, (1, 1), [(0, 1)])
    both = graph.SublayerStructure.from_targets([-1, -1])
    rep = synth.check_constraints(both, prob)
    assert rep.violations["selfloop_budget"] == [0, 1]
    edge = graph.SublayerStructure.from_targets([-1, 0])
    rep = synth.check_constraints(edge, prob)
    assert rep.violations["risk"] == [(1, 0)]
    assert rep.failed() == ["risk"]


def test_checker_flags_used_link_and_path_rule():
    prob = problem(1, 3, 1, (1, 1, 1))
    mem = synth.NonOverlapMemory.fresh(3).after(graph.SublayerStructure.from_targets([-1, 0, -1]))
    rep = synth.check_constraints(graph.SublayerStructure.from_targets([-1, 0, 0]), prob, mem)
    assert (1, 0) in rep.violations["non_overlap"]
    star = graph.SublayerStructure(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]), [0, 1, 0], (1, -1, 1))
    assert synth.check_constraints(star, problem(1, 3, 1, (1, 1, 1))).passed
    # a three-hop chain breaks the path rule
    deep = (-1, 0, 1, 2)
    s = graph.SublayerStructure.from_targets(deep)
    rep = synth.check_constraints(s, problem(1, 4, 1, (1, 1, 1, 1)))
    assert rep.violations["path_rule"] and rep.violations["tree_shape"] == [3]


def test_orient_recovers_targets():
    s = graph.SublayerStructure.from_targets((-1, 0, 1, -1, 3))
    assert synth.orient(graph.SublayerStructure(s.edges, s.selfloops)) == s.targets
    cyc = graph.SublayerStructure(np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]]), [1, 0, 0])
    assert synth.orient(cyc) is None


def test_unsat_reports_sublayer_and_resource():
    # 25 usable pairs and 5 edges per sublayer: a sixth sublayer cannot exist
    prob = synth.SynthesisProblem.from_risk_pairs(6, 8, 3, BUNDLED_INSTANCE["capability"], BUNDLED_INSTANCE["risky_pairs"])
    with pytest.raises(Unsatisfiable) as exc:
        synth.generate_all_graphs(prob)
    assert exc.value.sublayer is not None and 1 <= exc.value.sublayer <= 6
    assert "sublayer" in str(exc.value)
