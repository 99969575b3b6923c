"""SVG figures for simulation runs.

Figures are built on bare :class:`matplotlib.figure.Figure` objects (no pyplot
state) and written with a fixed hash salt and no date stamp, so the same run
gives the same file bytes.
"""

import matplotlib
import numpy as np
from matplotlib.figure import Figure

matplotlib.rcParams["svg.hashsalt"] = "switchmtd"
_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    return path


def _axes(title, ylabel):
    fig = Figure(figsize=(7.0, 3.6), layout="tight")
    ax = fig.add_subplot()
    ax.set_title(title)
    ax.set_xlabel("time t [s]")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _shade_attacks(ax, result):
    att = np.asarray(result.attack_active, dtype=bool)
    if not att.any():
        return
    t = result.t
    edges = np.flatnonzero(np.diff(np.r_[0, att.astype(int), 0]))
    for a, b in zip(edges[::2], edges[1::2]):
        ax.axvspan(t[a], t[min(b, len(t) - 1)], color="tab:red", alpha=0.08, lw=0)


def plot_norms(result, path, title="state norm", ceiling=None, bound=None, log=None):
    """``||x(t)||`` with attacked stretches shaded; optional ceiling / ultimate bound lines."""
    fig, ax = _axes(title, "||x(t)|| [-]")
    n = result.norms
    if log is None:
        log = bool(result.diverged)
    ax.plot(result.t, n, lw=1.0, color="tab:blue", label="||x||")
    _shade_attacks(ax, result)
    if ceiling is not None and result.diverged:
        ax.axhline(ceiling, color="k", ls=":", lw=0.8, label="divergence ceiling")
    if bound is not None and np.isfinite(bound):
        ax.axhline(bound, color="tab:green", ls="--", lw=0.8, label="ultimate bound")
    if log:
        ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_states(result, path, title="agent states"):
    fig, ax = _axes(title, "x_i(t) [-]")
    for k in range(result.x.shape[1]):
        ax.plot(result.t, result.x[:, k], lw=0.6)
    _shade_attacks(ax, result)
    return _save(fig, path)


def plot_sigma(result, path, title="switching signal"):
    fig, ax = _axes(title, "active sublayer sigma(t)")
    ax.step(result.t, np.asarray(result.sigma) + 1, where="post", lw=0.6, color="tab:purple")
    top = int(np.max(result.sigma)) + 1 if len(result.sigma) else 1
    ax.set_yticks(range(1, top + 1))
    return _save(fig, path)


def plot_lyapunov(t, V, path, title="common Lyapunov function"):
    fig, ax = _axes(title, "V(t) = x' P x [-]")
    ax.plot(t, V, lw=1.0, color="tab:orange")
    if np.all(np.asarray(V) > 0):
        ax.set_yscale("log")
    return _save(fig, path)


def plot_envelope(result, kappa_e, sigma_e, path, title="decay against the exponential envelope"):
    fig, ax = _axes(title, "||x(t)|| [-]")
    n = result.norms
    env = kappa_e * np.exp(-sigma_e * result.t) * n[0]
    ax.plot(result.t, n, lw=1.0, color="tab:blue", label="||x(t)||")
    ax.plot(result.t, env, lw=1.0, ls="--", color="tab:red", label="kappa_e exp(-sigma_e t) ||x(0)||")
    if np.all(n > 0):
        ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)
