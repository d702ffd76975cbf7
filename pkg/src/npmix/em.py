"""EM algorithm: responsibilities, location updates, iteration control.

The M-step maximizes each component's responsibility-weighted log-likelihood
over its location with a Nelder-Mead search; component covariances are never
touched.  Every full iteration is guaranteed not to decrease the data
log-likelihood (generalized EM: partial M-step improvement suffices).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .kernel import make_evaluator
from .mixture import PROB_FLOOR, MixingDistribution, build_cache, scaled_loglik

__all__ = ["EmConfig", "e_step", "m_step", "em_run"]

# Components with less total responsibility than this skip their M-step.
_RESP_FLOOR = 1e-8


@dataclass(frozen=True)
class EmConfig:
    n_em: int = 5  # EM steps per invocation
    mstep_max_evals: int = 200  # objective-evaluation budget per component
    mstep_tol: float = 1e-6  # location convergence tolerance

    def __post_init__(self):
        if self.n_em < 1 or self.mstep_max_evals < 1 or self.mstep_tol <= 0:
            raise ValueError("EmConfig fields must be positive")


def e_step(P, weights):
    """Responsibilities gamma[i, s] = pi_s P[i, s] / sum_r pi_r P[i, r]."""
    num = np.asarray(P, dtype=float) * np.asarray(weights, dtype=float)
    return num / np.maximum(num.sum(axis=1, keepdims=True), PROB_FLOOR)


def _weighted_negll(location, probs, cov_diag, gamma_s):
    p = probs(location, cov_diag)
    return -float(gamma_s @ np.log(np.maximum(p, PROB_FLOOR))) / len(p)


def m_step(dataset, gamma, mixing, cfg=EmConfig()):
    """Update component locations by weighted-likelihood maximization.

    Each component is optimized independently from its current location;
    the update is kept only if it improves the weighted objective, so the
    per-component objective never degrades.
    """
    gamma = np.asarray(gamma, dtype=float)
    probs = make_evaluator(dataset.X, dataset.y, mixing.kernel)
    comps = []
    for s, c in enumerate(mixing.components):
        g = gamma[:, s]
        if g.sum() < _RESP_FLOOR:
            comps.append(c)
            continue
        cov = None if c.is_point_mass else c.cov_diag
        f0 = _weighted_negll(c.location, probs, cov, g)
        res = minimize(
            _weighted_negll, c.location, method="Nelder-Mead",
            args=(probs, cov, g),
            options={"maxfev": cfg.mstep_max_evals, "xatol": cfg.mstep_tol,
                     "fatol": 1e-12})
        if res.fun < f0:
            comps.append(replace(c, location=np.asarray(res.x, float)))
        else:
            comps.append(c)
    return MixingDistribution(comps, mixing.kernel, mixing.cap_warn)


def em_run(dataset, mixing, cfg=EmConfig()):
    """Run cfg.n_em EM iterations; returns (mixing, ll_trace).

    ll_trace[0] is the starting log-likelihood, one entry per iteration
    after that; the sequence is non-decreasing up to floating point noise.
    """
    cache = build_cache(dataset, mixing)
    trace = [scaled_loglik(cache)]
    for _ in range(cfg.n_em):
        gamma = e_step(cache.P, mixing.weights)
        mixing = m_step(dataset, gamma, mixing, cfg)
        mixing = mixing.with_weights(gamma.mean(axis=0))
        cache = build_cache(dataset, mixing)
        trace.append(scaled_loglik(cache))
    return mixing, trace
