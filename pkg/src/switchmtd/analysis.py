"""Lyapunov and ISS diagnostics for designed gains and simulated runs."""

from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .design import common_decay_matrix, validation_matrix
from .errors import NotPositiveDefinite

EXPONENTIAL = "exponential"
ISS_BOUNDED = "iss_bounded"
DIVERGED = "diverged"
INCONCLUSIVE = "inconclusive"


@dataclass
class IssReport:
    lyapunov_trace: np.ndarray
    decay_violations: list
    kappa_e: float
    sigma_e: float
    gamma_d: float
    verdict: str
    d_sup: float = 0.0
    ultimate_bound: float = np.inf
    tail_sup: float = np.nan
    decay_checked: int = 0
    decay_skipped: int = 0
    envelope_ratio: float = np.nan
    extras: dict = field(default_factory=dict)

    def summary_lines(self):
        yield f"verdict: {self.verdict}"
        yield f"kappa_e: {self.kappa_e!r}"
        yield f"sigma_e: {self.sigma_e!r}"
        yield f"gamma_d: {self.gamma_d!r}"
        yield f"d_sup: {self.d_sup!r}"
        yield f"ultimate_bound: {self.ultimate_bound!r}"
        yield f"tail_sup_norm: {self.tail_sup!r}"
        yield f"envelope_ratio: {self.envelope_ratio!r}"
        yield f"decay_points_checked: {self.decay_checked}"
        yield f"decay_points_skipped_attacked: {self.decay_skipped}"
        yield f"decay_violations: {len(self.decay_violations)}"
        for k, v in self.extras.items():
            yield f"{k}: {v!r}"


def lyapunov_trace(result, Pbar):
    """``V(t) = x(t)' Pbar x(t)`` along the stored grid."""
    X = result.x if hasattr(result, "x") else np.asarray(result)
    return np.einsum("ti,ij,tj->t", X, np.asarray(Pbar), X)


def exponential_constants(Pbar, Qv):
    """``kappa_e = sqrt(lmax(P) / lmin(P))``, ``sigma_e = lmin(Qv) / (2 lmax(P))``."""
    p = _linalg.sym_eigvals(0.5 * (Pbar + Pbar.T), rtol=1e-9)
    q = _linalg.sym_eigvals(0.5 * (Qv + Qv.T), rtol=1e-9)
    if p[0] <= 0:
        raise NotPositiveDefinite("Pbar is not positive definite")
    if q[0] <= 0:
        raise NotPositiveDefinite("Qv is not positive definite")
    return float(np.sqrt(p[-1] / p[0])), float(q[0] / (2.0 * p[-1]))


def iss_gain(Pbar, Qv, gamma_d):
    """Ultimate-bound gain: ``||x|| -> <= gain * ||d||_inf`` from the decay inequality."""
    kappa_e, _ = exponential_constants(Pbar, Qv)
    lam = _linalg.sym_eigvals(0.5 * (Qv + Qv.T), rtol=1e-9)[0]
    return kappa_e * float(np.sqrt(gamma_d / lam))


def decay_check(result, design, layer, tolerance=None, Qv_common=None):
    """Compare a central-difference ``dV/dt`` with the decay bound.

    At every interior grid point whose two neighbouring steps run on an intact
    (unattacked) sublayer, checks::

        (V[k+1] - V[k-1]) / 2h <= -x' Qv x + gamma_d ||d||^2 + tolerance

    with ``Qv`` the active sublayer's validation matrix, or the common
    ``Qv_common`` when the stencil straddles a switch.  Returns
    ``(violations, n_checked, n_skipped)``; each violation is ``(t, margin)``.
    """
    V = lyapunov_trace(result, design.Pbar)
    if tolerance is None:
        tolerance = 1e-6 * float(np.max(V)) if V.size else 0.0
    if Qv_common is None:
        Qv_common = common_decay_matrix(design, layer)
    Qs = [validation_matrix(design, layer, s)[0] for s in range(layer.M)]
    g = design.gamma_d
    h = result.h
    X, D, S, att = result.x, result.d, result.sigma, result.attack_active
    violations, checked, skipped = [], 0, 0
    for k in range(1, len(V) - 1):
        if att[k - 1] or att[k]:
            skipped += 1
            continue
        Q = Qs[S[k]] if S[k - 1] == S[k] else Qv_common
        x = X[k]
        bound = -x @ Q @ x + g * float(D[k] @ D[k])
        dV = (V[k + 1] - V[k - 1]) / (2.0 * h)
        margin = bound + tolerance - dV
        checked += 1
        if margin < 0:
            violations.append((float(result.t[k]), float(margin)))
    return violations, checked, skipped


def envelope_ratio(result, kappa_e, sigma_e):
    """``max_t ||x(t)|| / (kappa_e exp(-sigma_e t) ||x(0)||)``."""
    n = result.norms
    if n[0] == 0:
        return 0.0 if not np.any(n) else np.inf
    env = kappa_e * np.exp(-sigma_e * result.t) * n[0]
    return float(np.max(n / env))


def verdict(result, kappa_e, sigma_e, d_sup, gain, envelope_tol=1e-3, bound_multiple=1.0):
    """Classify a run as ``diverged``, ``exponential`` or ``iss_bounded``.

    ``iss_bounded`` requires the trailing half of the run to stay within
    ``bound_multiple * gain * d_sup``.  Runs fitting none of the three are
    reported as ``inconclusive``.
    """
    if result.diverged:
        return DIVERGED
    if d_sup == 0.0 and envelope_ratio(result, kappa_e, sigma_e) <= 1.0 + envelope_tol:
        return EXPONENTIAL
    if tail_sup(result) <= bound_multiple * gain * d_sup:
        return ISS_BOUNDED
    return INCONCLUSIVE


def tail_sup(result, start=None):
    """``sup ||x(t)||`` over ``t >= start`` (default: the trailing half-horizon)."""
    if start is None:
        start = 0.5 * result.t[-1]
    sel = result.t >= start - 1e-12
    return float(np.max(result.norms[sel])) if np.any(sel) else np.nan


def analyze(result, design, layer, tolerance=None, bound_multiple=1.0, check_decay=True):
    Qv = common_decay_matrix(design, layer)
    kappa_e, sigma_e = exponential_constants(design.Pbar, Qv)
    g = design.gamma_d
    d_sup = float(np.max(np.linalg.norm(result.d, axis=1))) if result.d.size else 0.0
    gain = iss_gain(design.Pbar, Qv, g)
    V = lyapunov_trace(result, design.Pbar)
    if check_decay:
        viol, checked, skipped = decay_check(result, design, layer, tolerance, Qv)
    else:
        viol, checked, skipped = [], 0, 0
    return IssReport(
        lyapunov_trace=V,
        decay_violations=viol,
        kappa_e=kappa_e,
        sigma_e=sigma_e,
        gamma_d=g,
        verdict=verdict(result, kappa_e, sigma_e, d_sup, gain, bound_multiple=bound_multiple),
        d_sup=d_sup,
        ultimate_bound=bound_multiple * gain * d_sup,
        tail_sup=tail_sup(result),
        decay_checked=checked,
        decay_skipped=skipped,
        envelope_ratio=envelope_ratio(result, kappa_e, sigma_e),
    )
