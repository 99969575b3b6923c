"""Reference computations written independently of the package code."""

import itertools

import numpy as np


def brute_force_assignments(N, T, theta, risk, eta):
    """Every 0/1 matrix alpha (diagonal = selfloops) meeting the sublayer rules.

    Enumerates all 2**(N*N) matrices and checks each rule directly on alpha.
    Returns the set of target tuples (-1 marks a selfloop node).
    """
    out = set()
    for bits in itertools.product((0, 1), repeat=N * N):
        a = np.array(bits).reshape(N, N)
        if any(a[i, i] > theta[i] for i in range(N)):
            continue
        if np.trace(a) != T:
            continue
        if any(a[i, j] > risk[i][j] or a[i, j] > eta[i][j] for i in range(N) for j in range(N) if i != j):
            continue
        if any(a[i].sum() != 1 for i in range(N)):
            continue
        ok = True
        for i, j, k in itertools.product(range(N), repeat=3):
            if i != j and k != j and a[i, j] and a[j, k]:
                if not (a[k, k] == 1 and a[j, j] == 0):
                    ok = False
                    break
        if not ok:
            continue
        out.add(tuple(-1 if a[i, i] else int(np.flatnonzero(a[i])[0]) for i in range(N)))
    return out


def hamiltonian_are(A, B, Q, R):
    """Stabilising ``A'P + PA + Q - P B R^-1 B' P = 0`` from the Hamiltonian's stable subspace."""
    A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R))
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    Hm = np.block([[A, -G], [-Q, -A.T]])
    w, V = np.linalg.eig(Hm)
    stable = V[:, w.real < 0]
    assert stable.shape[1] == n
    U1, U2 = stable[:n], stable[n:]
    P = np.real(U2 @ np.linalg.inv(U1))
    return 0.5 * (P + P.T)


def modified_laplacian(W, s):
    """``h_ij = -w_ij``, ``h_ii = sum_j w_ij + s_i`` by explicit loops."""
    n = len(s)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                H[i, j] = -W[i][j]
        H[i, i] = sum(W[i][j] for j in range(n) if j != i) + s[i]
    return H


def agent_rhs_by_hand(agent, neighbor_terms, x_i, y_i, t, f, d):
    """Hand-expanded closed-loop right-hand side of one agent (all loops explicit)."""
    A, Bu, Bf, Bd = agent
    u = sum(h * (K @ xj) for h, K, xj in neighbor_terms)
    return A @ x_i + Bu @ u + Bf @ np.atleast_1d(f(y_i, t)) + Bd @ np.atleast_1d(d(t))
