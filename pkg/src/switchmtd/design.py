"""Modified-LQR design of distributed stabilisation gains.

Every agent solves a small Riccati equation on its own nominal dynamics with
the input channel scaled by ``mu_min`` and an inflated state weight that
absorbs the interconnection uncertainty.  The resulting gains are certified
for the whole switched layer by a per-sublayer positive-definiteness test.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .errors import (
    DimensionMismatch,
    EbarNotPSD,
    HypothesisNotVerified,
    NoStabilizingSolution,
    NonPositiveDefiniteQ,
    NonPositiveParameter,
)

ARE_TOL = 1e-10
ARE_MAX_ITER = 100
ARE_ACCEPT = 1e-8
EBAR_TOL = 1e-10


def _mat(a):
    return np.atleast_2d(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class AgentModel:
    """Nominal matrices of one agent plus its nonlinearity/disturbance selectors.

    ``f`` and ``d`` are catalog entries ``{"id": ..., **params}`` resolved by
    :mod:`switchmtd.sim`.  ``C_y`` is used only by the simulator.
    """

    A: np.ndarray
    B_u: np.ndarray
    B_f: np.ndarray
    B_d: np.ndarray
    C_y: np.ndarray
    f: dict = field(default_factory=lambda: {"id": "zero"})
    d: dict = field(default_factory=lambda: {"id": "zero"})

    def __post_init__(self):
        for name in ("A", "B_u", "B_f", "B_d", "C_y"):
            object.__setattr__(self, name, _mat(getattr(self, name)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        for name in ("B_u", "B_f", "B_d"):
            if getattr(self, name).shape[0] != n:
                raise DimensionMismatch(f"{name} must have {n} rows")
        if self.C_y.shape[1] != n:
            raise DimensionMismatch(f"C_y must have {n} columns")

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B_u.shape[1]


@dataclass(frozen=True)
class DesignWeights:
    Q: tuple
    R: tuple
    a_f: float
    a_d: float

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(_mat(q) for q in self.Q))
        object.__setattr__(self, "R", tuple(_mat(r) for r in self.R))
        if self.a_f <= 0 or self.a_d <= 0:
            raise NonPositiveParameter("a_f and a_d must be positive")
        for i, q in enumerate(self.Q):
            if not _linalg.is_positive_definite(q):
                raise NonPositiveDefiniteQ(f"Q[{i}] is not positive definite")
        for i, r in enumerate(self.R):
            if not _linalg.is_positive_definite(r):
                raise NonPositiveDefiniteQ(f"R[{i}] is not positive definite")

    @classmethod
    def uniform(cls, n_agents, Q, R, a_f, a_d):
        return cls((Q,) * n_agents, (R,) * n_agents, a_f, a_d)


@dataclass(frozen=True)
class GainDesign:
    agents: tuple
    weights: DesignWeights
    mu_min: float
    P: tuple
    K: tuple
    Q_f: tuple
    # per-sublayer smallest eigenvalue of the validation matrix
    validation_eigs: tuple = ()

    @property
    def N(self):
        return len(self.agents)

    @property
    def n_u(self):
        return self.agents[0].n_u

    def _bar(self, name):
        return _linalg.block_diag([getattr(a, name) for a in self.agents])

    @property
    def Abar(self):
        return self._bar("A")

    @property
    def Bubar(self):
        return self._bar("B_u")

    @property
    def Bfbar(self):
        return self._bar("B_f")

    @property
    def Bdbar(self):
        return self._bar("B_d")

    @property
    def Cybar(self):
        return self._bar("C_y")

    @property
    def Pbar(self):
        return _linalg.block_diag(self.P)

    @property
    def Kbar(self):
        return _linalg.block_diag(self.K)

    @property
    def Qbar(self):
        return _linalg.block_diag(self.weights.Q)

    @property
    def Rbar(self):
        return _linalg.block_diag(self.weights.R)

    @property
    def Qfbar(self):
        return _linalg.block_diag(self.Q_f)

    @property
    def gamma_d(self):
        """Disturbance gain ``||Pbar Bdbar||^2 / a_d`` of the decay inequality."""
        return float(np.linalg.norm(self.Pbar @ self.Bdbar, 2) ** 2 / self.weights.a_d)

    @property
    def passed(self):
        return bool(self.validation_eigs) and min(self.validation_eigs) > 0


def modified_weighting(Q, bounds, a_f, a_d):
    """``Q + (a_f * gamma_f * gamma_cy * ||A_a||^2 + a_d) I``."""
    Q = _mat(Q)
    if a_f <= 0 or a_d <= 0:
        raise NonPositiveParameter("a_f and a_d must be positive")
    if not _linalg.is_positive_definite(Q):
        raise NonPositiveDefiniteQ("Q is not positive definite")
    r_f = a_f * bounds.gamma_f * bounds.gamma_cy * bounds.norm_Aa ** 2 + a_d
    return Q + r_f * np.eye(Q.shape[0])


def are_residual(A, B_u, Q_f, R, mu_min, P):
    A, B, Q, R, P = map(_mat, (A, B_u, Q_f, R, P))
    return A.T @ P + P @ A + Q - mu_min ** 2 * P @ B @ np.linalg.solve(R, B.T @ P)


def _newton_kleinman(A, B, Q, R, K, tol=ARE_TOL, max_iter=ARE_MAX_ITER):
    """Kleinman iteration for ``A'P + PA + Q - P B R^-1 B' P = 0``.

    ``K`` must stabilise ``A - B K``.  Returns ``(P, K, iterations, rel_residual)``.
    """
    qn = max(np.linalg.norm(Q), 1e-300)
    P = None
    rel = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Ac = A - B @ K
        P = _linalg.solve_lyapunov(Ac, Q + K.T @ R @ K)
        K = np.linalg.solve(R, B.T @ P)
        res = A.T @ P + P @ A + Q - P @ B @ np.linalg.solve(R, B.T @ P)
        rel = np.linalg.norm(res) / qn
        if rel <= tol:
            break
    return P, K, it, rel


def stabilizing_gain(A, B, R, max_rounds=200):
    """A gain ``K`` with ``A - B K`` Hurwitz, by shift continuation.

    Start from ``A - beta I`` stable at ``K = 0`` and walk ``beta`` down to 0,
    re-solving the shifted regulator each round; every step stays inside the
    previous closed loop's stability margin.
    """
    A, B, R = map(_mat, (A, B, R))
    n = A.shape[0]
    K = np.zeros((B.shape[1], n))
    alpha = _linalg.spectral_abscissa(A)
    if alpha < 0:
        return K
    beta = alpha + 1.0
    eye = np.eye(n)
    for _ in range(max_rounds):
        As = A - beta * eye
        _, K, _, _ = _newton_kleinman(As, B, eye, R, K, tol=1e-9, max_iter=50)
        if _linalg.spectral_abscissa(A - B @ K) < 0:
            return K
        margin = -_linalg.spectral_abscissa(As - B @ K)
        if not np.isfinite(margin) or margin <= 1e-12 * (1.0 + beta):
            break
        beta = max(beta - 0.9 * margin, 0.0)
    raise NoStabilizingSolution("no stabilising initial gain found; (A, B) may not be stabilisable")


def solve_are(A, B_u, Q_f, R, mu_min, tol=ARE_TOL, max_iter=ARE_MAX_ITER):
    """Stabilising solution of ``A'P + PA + Q_f - mu^2 P B R^-1 B' P = 0``."""
    A, B, Q, R = map(_mat, (A, B_u, Q_f, R))
    if mu_min <= 0:
        raise NonPositiveParameter("mu_min must be positive")
    if not _linalg.is_positive_definite(Q):
        raise NonPositiveDefiniteQ("Q_f is not positive definite")
    if not _linalg.is_positive_definite(R):
        raise NonPositiveDefiniteQ("R is not positive definite")
    Bs = mu_min * B
    K0 = stabilizing_gain(A, Bs, R)
    P, K, _, rel = _newton_kleinman(A, Bs, Q, R, K0, tol, max_iter)
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(are_residual(A, B, Q, R, mu_min, P)) / np.linalg.norm(Q)
    if not np.all(np.isfinite(P)) or resid > ARE_ACCEPT:
        raise NoStabilizingSolution(f"Riccati iteration did not converge (residual {resid:.3g})")
    if _linalg.spectral_abscissa(A - Bs @ np.linalg.solve(R, Bs.T @ P)) >= 0:
        raise NoStabilizingSolution("closed loop of the Riccati solution is not Hurwitz")
    if not _linalg.is_positive_definite(P):
        raise NoStabilizingSolution("Riccati solution is not positive definite")
    return P


def compute_gain(P, R, B_u, mu_min):
    """``K = -mu_min R^-1 B_u' P``."""
    return -mu_min * np.linalg.solve(_mat(R), _mat(B_u).T @ _mat(P))


def design_gains(agents, weights, bounds, layer):
    """Run the per-agent designs and certify them against every sublayer."""
    agents = tuple(agents)
    if len(weights.Q) != len(agents) or len(weights.R) != len(agents):
        raise DimensionMismatch("one Q and one R per agent required")
    if len({a.n_u for a in agents}) != 1:
        raise DimensionMismatch("all agents must share the input dimension")
    mu = layer.mu_min
    Ps, Ks, Qfs = [], [], []
    for agent, Q, R in zip(agents, weights.Q, weights.R):
        Qf = modified_weighting(Q, bounds, weights.a_f, weights.a_d)
        P = solve_are(agent.A, agent.B_u, Qf, R, mu)
        Ps.append(P)
        Ks.append(compute_gain(P, R, agent.B_u, mu))
        Qfs.append(Qf)
    design = GainDesign(agents, weights, mu, tuple(Ps), tuple(Ks), tuple(Qfs))
    eigs = tuple(validation_matrix(design, layer, s)[1] for s in range(layer.M))
    return GainDesign(agents, weights, mu, tuple(Ps), tuple(Ks), tuple(Qfs), eigs)


def ebar(H, mu_min, n_u):
    """``(H / mu_min - I) kron I_{n_u}``, checked positive semidefinite."""
    H = np.asarray(H, dtype=float)
    D = H / mu_min - np.eye(H.shape[0])
    lo = _linalg.sym_eigvals(0.5 * (D + D.T), rtol=1e-9)[0]
    if lo < -EBAR_TOL:
        raise EbarNotPSD(f"H/mu_min - I has eigenvalue {lo:.3g} < 0")
    return np.kron(D, np.eye(n_u))


def validation_matrix(design, layer, sigma):
    """Validation matrix of sublayer ``sigma`` (0-based).

    Returns ``(Qv, smallest eigenvalue, passed)``.  The matrix is returned
    symmetrised; its quadratic form is unchanged by that.
    """
    H = layer.sublayers[sigma].laplacian
    E = ebar(H, design.mu_min, design.n_u)
    K, R, P, Bf = design.Kbar, design.Rbar, design.Pbar, design.Bfbar
    Qv = design.Qbar + K.T @ (R + 2.0 * R @ E) @ K - (P @ Bf @ Bf.T @ P) / design.weights.a_f
    Qv = 0.5 * (Qv + Qv.T)
    lo = float(_linalg.jacobi_eigh(Qv)[0][0])
    return Qv, lo, lo > 0


def per_agent_hypothesis(design, layer):
    """True when the per-agent validation variant is admissible for ``layer``."""
    R0 = design.weights.R[0]
    uniform = all(np.allclose(R, R[0, 0] * np.eye(R.shape[0])) for R in design.weights.R) and all(
        np.isclose(R[0, 0], R0[0, 0]) for R in design.weights.R
    )
    if uniform:
        return True
    Rb = design.Rbar
    for top in layer.sublayers:
        RE = Rb @ ebar(top.laplacian, design.mu_min, design.n_u)
        if _linalg.sym_eigvals(0.5 * (RE + RE.T), rtol=1e-9)[0] < -EBAR_TOL:
            return False
    return True


@dataclass(frozen=True)
class LowDimensionResult:
    Q_v: tuple
    eigs: tuple
    Qbar_v: np.ndarray

    @property
    def passed(self):
        return all(e > 0 for e in self.eigs)


def validation_low_dimension(design, layer=None, check_hypothesis=False):
    """Per-agent ``Q_i + K_i' R_i K_i - P_i B_fi B_fi' P_i / a_f`` test."""
    if check_hypothesis:
        if layer is None:
            raise ValueError("checking the hypothesis needs the control layer")
        if not per_agent_hypothesis(design, layer):
            raise HypothesisNotVerified("symmetric part of Rbar Ebar is not PSD for some sublayer")
    a_f = design.weights.a_f
    qvs, eigs = [], []
    for agent, Q, R, P, K in zip(design.agents, design.weights.Q, design.weights.R, design.P, design.K):
        Qv = Q + K.T @ R @ K - P @ agent.B_f @ agent.B_f.T @ P / a_f
        Qv = 0.5 * (Qv + Qv.T)
        qvs.append(Qv)
        eigs.append(float(_linalg.jacobi_eigh(Qv)[0][0]))
    return LowDimensionResult(tuple(qvs), tuple(eigs), _linalg.block_diag(qvs))


def common_decay_matrix(design, layer):
    """A sublayer-independent ``Qbar_v`` with ``Qbar_v <= Qv_sigma`` for every sigma."""
    if per_agent_hypothesis(design, layer):
        return validation_low_dimension(design).Qbar_v
    lo = min(validation_matrix(design, layer, s)[1] for s in range(layer.M))
    return lo * np.eye(design.Pbar.shape[0])


def check_optimality_identities(design, xs):
    """Relative residuals of the two optimality identities over sample states.

    ``xs`` has one stacked state per row.  Returns the maximum residual of
    the gradient identity and of the Hamiltonian identity.
    """
    A, Bu, P, K = design.Abar, design.Bubar, design.Pbar, design.Kbar
    R, Qf, mu = design.Rbar, design.Qfbar, design.mu_min
    r1 = r2 = 0.0
    for x in np.atleast_2d(np.asarray(xs, dtype=float)):
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = K @ x
        Vx = 2.0 * P @ x
        g = 2.0 * v @ R + mu * Vx @ Bu
        scale1 = 2.0 * np.linalg.norm(v @ R) + mu * np.linalg.norm(Vx @ Bu)
        h = x @ Qf @ x + v @ R @ v + Vx @ (A @ x + mu * Bu @ v)
        scale2 = abs(x @ Qf @ x) + abs(v @ R @ v) + np.linalg.norm(Vx) * np.linalg.norm(A @ x + mu * Bu @ v)
        r1 = max(r1, np.linalg.norm(g) / max(scale1, 1e-300))
        r2 = max(r2, abs(h) / max(scale2, 1e-300))
    return r1, r2
