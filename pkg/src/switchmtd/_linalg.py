"""Small dense linear-algebra kernels.

Matrices in this package are at most a few dozen rows, so the kernels here
favour robustness and transparency over speed.
"""

import numpy as np

from .errors import NotSymmetric


def is_symmetric(H, rtol=1e-12):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return False
    scale = max(np.max(np.abs(H)), 1.0) if H.size else 1.0
    return bool(np.all(np.abs(H - H.T) <= rtol * scale))


def require_symmetric(H, rtol=1e-12):
    if not is_symmetric(H, rtol):
        raise NotSymmetric(f"matrix is not symmetric to relative tolerance {rtol:g}")


def jacobi_eigh(H, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``H @ V[:, k] == w[k] * V[:, k]``.
    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * ||H||_F``.
    """
    a = np.array(H, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        # summed directly; subtracting the diagonal from ||a||^2 cancels catastrophically
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) <= 1e-18 * abs(a[q, q] - a[p, p]):
                    # negligible against the diagonal gap; rotating would overflow tau
                    a[p, q] = a[q, p] = 0.0
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sym_eigvals(H, rtol=1e-12):
    """Ascending eigenvalues of a symmetric matrix (checked)."""
    require_symmetric(H, rtol)
    return jacobi_eigh(H)[0]


def cholesky(M, pivot_tol=1e-12):
    """Lower Cholesky factor, or ``None`` when a pivot falls below tolerance.

    The pivot tolerance is relative to the largest diagonal entry.
    """
    a = np.asarray(M, dtype=float)
    n = a.shape[0]
    L = np.zeros_like(a)
    ref = max(np.max(np.abs(np.diag(a))), 1.0) if n else 1.0
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= pivot_tol * ref:
            return None
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def is_positive_definite(M, pivot_tol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if not is_symmetric(M, 1e-10):
        return False
    return cholesky(M, pivot_tol) is not None


def solve_lyapunov(A, Q):
    """Solve ``A.T X + X A + Q = 0`` by Kronecker vectorisation."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    # vec(A.T X + X A) = (I kron A.T + A.T kron I) vec(X), column-major vec
    L = np.kron(eye, A.T) + np.kron(A.T, eye)
    x = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    X = x.reshape((n, n), order="F")
    return 0.5 * (X + X.T)


def block_diag(blocks):
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def spectral_abscissa(M):
    return float(np.max(np.linalg.eigvals(M).real))
