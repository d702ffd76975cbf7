"""Weight optimization over the simplex for fixed support points.

The solver interleaves multiplicative fixed-point updates (the EM weight
update) with occasional vertex-exchange steps that move mass from the worst
active component to the best one by exact line search.  Both steps are
monotone in the log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import PROB_FLOOR, MixingDistribution

__all__ = ["WeightSolveConfig", "optimize_weights", "line_search_alpha", "prune"]


@dataclass(frozen=True)
class WeightSolveConfig:
    max_iters: int = 2000
    kkt_tol: float = 1e-6
    active_tol: float = 1e-3  # epsilon_tol: weight below which KKT is one-sided
    exchange_every: int = 20

    def __post_init__(self):
        if self.kkt_tol <= 0 or self.active_tol <= 0:
            raise ValueError("tolerances must be positive")


def _concave_1d_max(deriv, lo, hi, tol=1e-12, max_iter=200):
    """Maximize a concave function on [lo, hi] given its derivative.

    Safeguarded bisection on the (decreasing) derivative; returns the
    argmax.  Endpoint optima are detected from the derivative signs.
    """
    dlo = deriv(lo)
    if dlo <= 0.0:
        return lo
    dhi = deriv(hi)
    if dhi >= 0.0:
        return hi
    a, b = lo, hi
    for _ in range(max_iter):
        mid = (a + b) / 2.0
        if b - a < tol:
            return mid
        if deriv(mid) > 0.0:
            a = mid
        else:
            b = mid
    return (a + b) / 2.0


def line_search_alpha(mixed, p_new, tol=1e-12):
    """Maximize g(a) = mean(log((1-a) * mixed + a * p_new)) over [0, 1].

    g is concave; indifference ties break toward 0 (keep the current Q).
    """
    mixed = np.maximum(np.asarray(mixed, dtype=float), PROB_FLOOR)
    p_new = np.asarray(p_new, dtype=float)
    diff = p_new - mixed

    def gprime(a):
        return float(np.mean(diff / np.maximum(mixed + a * diff, PROB_FLOOR)))

    return _concave_1d_max(gprime, 0.0, 1.0, tol=tol)


def _ratios(P, w):
    """Per-component likelihood ratios r_s = mean_i P[i,s] / mixed[i]."""
    mixed = np.maximum(P @ w, PROB_FLOOR)
    return (P.T @ (1.0 / mixed)) / P.shape[0], mixed


def _vertex_exchange(P, w, D, active_tol):
    """Move mass from the worst active component to the best one."""
    s_to = int(np.argmax(D))
    active = np.flatnonzero(w > active_tol)
    if active.size == 0:
        return w
    s_from = int(active[np.argmin(D[active])])
    if s_from == s_to or D[s_to] - D[s_from] <= 0.0:
        return w
    diff = P[:, s_to] - P[:, s_from]
    mixed = np.maximum(P @ w, PROB_FLOOR)

    def deriv(t):
        return float(np.mean(diff / np.maximum(mixed + t * diff, PROB_FLOOR)))

    t = _concave_1d_max(deriv, 0.0, w[s_from])
    if t <= 0.0:
        return w
    w = w.copy()
    w[s_from] -= t
    w[s_to] += t
    return w


def optimize_weights(P, pi0=None, cfg=WeightSolveConfig()):
    """Maximize the scaled log-likelihood over the weight simplex.

    Returns (weights, info); info carries the KKT certificate values and a
    ``converged`` flag (False when the iteration cap is reached, in which
    case the best iterate found is returned).
    """
    P = np.asarray(P, dtype=float)
    if not np.all(np.isfinite(P)):
        raise ValueError("probability matrix contains non-finite entries")
    n, S = P.shape
    if pi0 is None:
        w = np.full(S, 1.0 / S)
    else:
        w = np.asarray(pi0, dtype=float)
        if w.shape != (S,) or np.any(w < 0.0):
            raise ValueError("pi0 must be a nonnegative vector of length S")
        w = w / w.sum()
    if S == 1:
        return np.array([1.0]), {"converged": True, "iters": 0, "max_D": 0.0,
                                 "max_active_absD": 0.0}

    def loglik(wv):
        return float(np.mean(np.log(np.maximum(P @ wv, PROB_FLOOR))))

    best_w = w
    best_ll = loglik(w)
    info = {}
    for it in range(1, cfg.max_iters + 1):
        r, _ = _ratios(P, w)
        D = r - 1.0
        active = w > cfg.active_tol
        max_D = float(np.max(D))
        max_abs = float(np.max(np.abs(D[active]))) if active.any() else 0.0
        if max_D <= cfg.kkt_tol and max_abs <= cfg.kkt_tol:
            info = {"converged": True, "iters": it, "max_D": max_D,
                    "max_active_absD": max_abs}
            best_w, best_ll = w, loglik(w)
            break
        if it % cfg.exchange_every == 0:
            w = _vertex_exchange(P, w, D, cfg.active_tol)
        else:
            w = w * r
            w = w / w.sum()
        ll = loglik(w)
        if ll >= best_ll:
            best_ll, best_w = ll, w
    else:
        r, _ = _ratios(P, best_w)
        D = r - 1.0
        active = best_w > cfg.active_tol
        info = {"converged": False, "iters": cfg.max_iters,
                "max_D": float(np.max(D)),
                "max_active_absD": float(np.max(np.abs(D[active]))) if active.any() else 0.0}
    return best_w, info


def prune(mixing, eps_tol=1e-3):
    """Drop components with weight <= eps_tol; renormalize the survivors.

    The largest-weight component always survives.
    """
    w = mixing.weights
    keep = w > eps_tol
    if not keep.any():
        keep[int(np.argmax(w))] = True
    if keep.all():
        return mixing
    comps = [c for c, k in zip(mixing.components, keep) if k]
    total = sum(c.weight for c in comps)
    from dataclasses import replace
    comps = [replace(c, weight=c.weight / total) for c in comps]
    return MixingDistribution(comps, mixing.kernel, mixing.cap_warn)
