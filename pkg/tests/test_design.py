import math
import time

import numpy as np
import pytest
import scipy.linalg

from oracles import hamiltonian_are
from switchmtd import _linalg, design as dsg, graph
from switchmtd.errors import (
    EbarNotPSD,
    HypothesisNotVerified,
    NoStabilizingSolution,
    NonPositiveDefiniteQ,
    NonPositiveParameter,
)

UNIT = graph.DesignerBounds(1.0, 1.0, 1.0)


def scalar_layer(mu):
    s = graph.SublayerStructure([[0]], [1])
    return graph.ControlLayer.from_sublayers([graph.build_modified_laplacian(s, [[0.0]], [mu])])


def test_modified_weighting_examples():
    assert np.allclose(dsg.modified_weighting(np.eye(2), UNIT, 1.0, 1.0), 3 * np.eye(2))
    Qf = dsg.modified_weighting(np.diag([1.0, 2.0]), graph.DesignerBounds(2.0, 1.0, 0.25), 2.0, 0.5)
    assert np.allclose(Qf, np.diag([3.5, 4.5]))
    with pytest.raises(NonPositiveParameter):
        dsg.modified_weighting(np.eye(2), UNIT, 1.0, 0.0)
    with pytest.raises(NonPositiveDefiniteQ):
        dsg.modified_weighting(np.diag([1.0, -1.0]), UNIT, 1.0, 1.0)


def test_scalar_are_closed_forms():
    P = dsg.solve_are([[0.0]], [[1.0]], [[1.0]], [[1.0]], 1.0)
    assert P[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert dsg.compute_gain(P, [[1.0]], [[1.0]], 1.0)[0, 0] == pytest.approx(-1.0, abs=1e-10)
    P = dsg.solve_are([[1.0]], [[1.0]], [[1.0]], [[1.0]], 1.0)
    assert P[0, 0] == pytest.approx(1 + math.sqrt(2), abs=1e-10)
    assert dsg.compute_gain(P, [[1.0]], [[1.0]], 1.0)[0, 0] == pytest.approx(-(1 + math.sqrt(2)), abs=1e-10)


def test_gain_homogeneous_in_R():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    B = np.array([[0.0], [1.0]])
    K1 = dsg.compute_gain(P, [[1.0]], B, 0.7)
    K2 = dsg.compute_gain(P, [[2.0]], B, 0.7)
    assert np.allclose(K2, K1 / 2)


def test_bundled_agent_against_oracles():
    A = np.array([[0.0, 1.0], [-1.0, 0.25]])
    B = np.array([[0.0], [1.0]])
    Qf = 3 * np.eye(2)
    P = dsg.solve_are(A, B, Qf, [[1.0]], 1.0)
    res = dsg.are_residual(A, B, Qf, [[1.0]], 1.0, P)
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(Qf)
    assert np.allclose(P, hamiltonian_are(A, B, Qf, [[1.0]]), atol=1e-9)
    assert np.allclose(P, scipy.linalg.solve_continuous_are(A, B, Qf, [[1.0]]), atol=1e-9)


def random_instance(rng):
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, n + 1))
    while True:
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        # controllable, hence stabilisable
        C = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if np.linalg.matrix_rank(C) == n and np.linalg.svd(C, compute_uv=False)[-1] > 1e-3:
            break
    Q = rng.normal(size=(n, n))
    Q = Q @ Q.T + 0.1 * np.eye(n)
    R = rng.normal(size=(m, m))
    R = R @ R.T + 0.1 * np.eye(m)
    return A, B, Q, R, float(rng.uniform(0.2, 2.0))


def test_random_instances(rng):
    t0 = time.perf_counter()
    for _ in range(50):
        A, B, Q, R, mu = random_instance(rng)
        P = dsg.solve_are(A, B, Q, R, mu)
        res = dsg.are_residual(A, B, Q, R, mu, P)
        assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(Q)
        K = dsg.compute_gain(P, R, B, mu)
        assert _linalg.spectral_abscissa(A + mu * B @ K) < 0
        ref = hamiltonian_are(A, mu * B, Q, R)
        assert np.allclose(P, ref, rtol=1e-6, atol=1e-8 * np.abs(ref).max())
    assert time.perf_counter() - t0 < 5.0


def test_unstabilisable_raises():
    A = np.diag([1.0, -1.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(NoStabilizingSolution):
        dsg.solve_are(A, B, np.eye(2), [[1.0]], 1.0)


def test_are_preconditions():
    with pytest.raises(NonPositiveParameter):
        dsg.solve_are([[0.0]], [[1.0]], [[1.0]], [[1.0]], 0.0)
    with pytest.raises(NonPositiveDefiniteQ):
        dsg.solve_are([[0.0]], [[1.0]], [[0.0]], [[1.0]], 1.0)


def single_agent(B_f, A=((0.0,),), B_u=((1.0,),)):
    return dsg.AgentModel(A, B_u, B_f, [[1.0]], [[1.0]])


def test_single_agent_reduces_to_low_dimension():
    layer = scalar_layer(2.0)
    agent = single_agent([[0.5]])
    w = dsg.DesignWeights.uniform(1, [[1.0]], [[1.0]], 4.0, 1.0)
    d = dsg.design_gains([agent], w, UNIT, layer)
    E = dsg.ebar(layer.sublayers[0].laplacian, d.mu_min, 1)
    assert np.allclose(E, 0.0)
    Qv, lo, ok = dsg.validation_matrix(d, layer, 0)
    low = dsg.validation_low_dimension(d)
    assert np.allclose(Qv, low.Q_v[0])
    P, K = d.P[0][0, 0], d.K[0][0, 0]
    assert lo == pytest.approx(1.0 + K * K - P * P * 0.25 / 4.0)
    assert ok == low.passed


def test_uncertainty_free_case_passes(layer, bundled):
    from switchmtd import pipeline
    agents = [dsg.AgentModel(a.A, a.B_u, np.zeros_like(a.B_f), a.B_d, a.C_y) for a in pipeline.build_agents(bundled)]
    d = dsg.design_gains(agents, pipeline.design_weights(bundled), pipeline.designer_bounds(bundled), layer)
    for s in range(layer.M):
        Qv, lo, ok = dsg.validation_matrix(d, layer, s)
        assert ok
        assert _linalg.sym_eigvals(Qv - d.Qbar, rtol=1e-9)[0] >= -1e-9
    assert all(e > 0 for e in dsg.validation_low_dimension(d).eigs)


def test_tiny_af_fails():
    layer = scalar_layer(1.0)
    w = dsg.DesignWeights.uniform(1, [[1.0]], [[1.0]], 1e-4, 1.0)
    d = dsg.design_gains([single_agent([[1.0]])], w, UNIT, layer)
    assert not d.passed
    assert not dsg.validation_low_dimension(d).passed
    big = dsg.design_gains([single_agent([[1.0]])], dsg.DesignWeights.uniform(1, [[1.0]], [[1.0]], 100.0, 1.0),
                           graph.DesignerBounds(0.01, 1.0, 1.0), layer)
    assert big.passed


def test_ebar_not_psd():
    H = np.array([[2.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(EbarNotPSD):
        dsg.ebar(H, 1.0, 1)
    mu = (3 - math.sqrt(5)) / 2
    E = dsg.ebar(H, mu, 2)
    assert E.shape == (4, 4)


def test_hypothesis_check():
    H = np.array([[2.0, -1.0], [-1.0, 1.0]])
    st_ = graph.SublayerStructure([[0, 1], [1, 0]], [1, 0])
    layer = graph.ControlLayer.from_sublayers([graph.build_modified_laplacian(st_, [[0, 1.0], [1.0, 0]], [1.0, 0.0])])
    agents = [single_agent([[0.1]]), single_agent([[0.1]])]
    uniform = dsg.design_gains(agents, dsg.DesignWeights.uniform(2, [[1.0]], [[1.0]], 10.0, 1.0), UNIT, layer)
    assert dsg.per_agent_hypothesis(uniform, layer)
    dsg.validation_low_dimension(uniform, layer, check_hypothesis=True)
    # mu_min is attained, so H / mu - I is singular and unequal R breaks the symmetric-part test
    mixed = dsg.design_gains(agents, dsg.DesignWeights((([1.0],),) * 2, ([[1.0]], [[3.0]]), 10.0, 1.0), UNIT, layer)
    assert not dsg.per_agent_hypothesis(mixed, layer)
    with pytest.raises(HypothesisNotVerified):
        dsg.validation_low_dimension(mixed, layer, check_hypothesis=True)


def test_bundled_design(design, layer):
    assert design.passed
    assert len(design.validation_eigs) == 5
    for agent, P, Qf, R in zip(design.agents, design.P, design.Q_f, design.weights.R):
        res = dsg.are_residual(agent.A, agent.B_u, Qf, R, design.mu_min, P)
        assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(Qf)
        assert np.allclose(P, scipy.linalg.solve_continuous_are(agent.A, design.mu_min * agent.B_u, Qf, R), atol=1e-8)
    A = design.Abar + design.mu_min * design.Bubar @ design.Kbar
    assert _linalg.spectral_abscissa(A) < 0
    low = dsg.validation_low_dimension(design, layer, check_hypothesis=True)
    assert low.passed == design.passed
    # frozen after the first verified build (full pipeline run)
    assert min(design.validation_eigs) == pytest.approx(4.765045188, abs=1e-6)


def test_optimality_identities(design, rng):
    xs = rng.normal(size=(100, design.Pbar.shape[0]))
    r1, r2 = dsg.check_optimality_identities(design, xs)
    assert r1 <= 1e-8 and r2 <= 1e-8
    assert dsg.check_optimality_identities(design, np.zeros((1, 16))) == (0.0, 0.0)


def test_optimality_identities_scalar():
    layer = scalar_layer(1.0)
    w = dsg.DesignWeights.uniform(1, [[1.0]], [[1.0]], 1.0, 1.0)
    d = dsg.design_gains([single_agent([[0.0]])], w, graph.DesignerBounds(0.0, 1.0, 1.0), layer)
    # Q_f = 1 + a_d = 2, A = 0: P = sqrt(2)
    assert d.P[0][0, 0] == pytest.approx(math.sqrt(2), abs=1e-12)
    r1, r2 = dsg.check_optimality_identities(d, [[1.0], [-3.0]])
    assert r1 < 1e-14 and r2 < 1e-14


def test_weights_validation():
    with pytest.raises(NonPositiveDefiniteQ):
        dsg.DesignWeights.uniform(1, [[0.0]], [[1.0]], 1.0, 1.0)
    with pytest.raises(NonPositiveParameter):
        dsg.DesignWeights.uniform(1, [[1.0]], [[1.0]], -1.0, 1.0)


def test_gamma_d(design):
    ref = np.linalg.norm(design.Pbar @ design.Bdbar, 2) ** 2 / design.weights.a_d
    assert design.gamma_d == pytest.approx(ref, rel=1e-12)
