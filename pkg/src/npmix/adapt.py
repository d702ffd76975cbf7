"""Support-point management and the full estimation drivers.

Two drivers are provided: the adaptive grid (repeated splitting of heavy
Gaussian components, children kept only where the gradient D is positive)
and the combined EM driver (EM steps, Metropolis-Hastings candidate search
on D, grouped line-search additions, weight re-estimation, pruning).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .em import EmConfig, em_run
from .kernel import make_evaluator
from .mixture import (Component, MixingDistribution, build_cache, gradient_D,
                      loglik_of, scaled_loglik)
from .weights import WeightSolveConfig, line_search_alpha, optimize_weights, prune

__all__ = [
    "AdaptConfig",
    "init_grid",
    "split_component",
    "refine_grid",
    "mh_sample_support",
    "group_and_add",
    "estimate",
    "rebind_kernel",
    "probe_grid",
    "MODES",
]

MODES = ("GR", "EM", "EM_GR")

_GRID_HARD_CAP = 100_000

# Three-point replacement of a unit-variance Gaussian coordinate.
SPLIT_OFFSETS = (-1.18, 0.0, 1.18)
SPLIT_WEIGHTS = (0.24, 0.52, 0.24)
SPLIT_VAR_FACTOR = 0.5


@dataclass(frozen=True)
class AdaptConfig:
    n_g: int = 100  # MH candidates per round
    grid_target: int = 1000  # initial grid size target (x^d close to this)
    m_l: int = 10  # components split per refinement round
    split_offsets: tuple = SPLIT_OFFSETS
    split_weights: tuple = SPLIT_WEIGHTS
    split_var_factor: float = SPLIT_VAR_FACTOR
    grid_iters: int = 15  # refinement rounds of the adaptive grid
    outer_rounds: int = 5  # rounds of the combined EM driver
    eps_tol: float = 1e-3  # pruning threshold
    bounds: tuple = ((-4.0, 4.0),)  # one (lo, hi) pair per mixed coordinate
    cov0: float = 0.1  # initial per-coordinate component variance
    proposal_scale: float | None = None  # MH random-walk scale (default range/20)
    mh_thin: int = 5
    mh_eps: float = 1e-6  # keeps the MH target positive everywhere
    ll_tol: float = 1e-8  # early-termination improvement threshold

    def __post_init__(self):
        if abs(sum(self.split_weights) - 1.0) > 1e-12:
            raise ValueError("split weights must sum to 1")
        if tuple(-o for o in reversed(self.split_offsets)) != tuple(self.split_offsets):
            raise ValueError("split offsets must be symmetric")
        if self.grid_iters < 1 or self.outer_rounds < 1:
            raise ValueError("iteration counts must be at least 1")

    def bounds_for(self, dim):
        b = self.bounds
        if len(b) == 1 and dim > 1:
            b = b * dim
        if len(b) != dim:
            raise ValueError(f"bounds cover {len(b)} coordinates, need {dim}")
        return np.asarray(b, dtype=float)

    def scales_for(self, dim):
        b = self.bounds_for(dim)
        if self.proposal_scale is not None:
            return np.full(dim, self.proposal_scale)
        return (b[:, 1] - b[:, 0]) / 20.0


def init_grid(kernel, cfg=AdaptConfig(), cov0=None):
    """Uniform tensor grid of Gaussian components with equal weights.

    Uses x points per axis with x = floor(grid_target^(1/d)), endpoints
    included.
    """
    d = kernel.dim
    bounds = cfg.bounds_for(d)
    x = int(np.floor(cfg.grid_target ** (1.0 / d) + 1e-9))
    if x < 2:
        raise ValueError("grid target too small for the dimension")
    if x ** d > _GRID_HARD_CAP:
        raise ValueError(f"grid of {x ** d} components exceeds the hard cap")
    if cov0 is None:
        cov0 = cfg.cov0
    axes = [np.linspace(lo, hi, x) for lo, hi in bounds]
    locs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    w = 1.0 / len(locs)
    cov = np.full(d, float(cov0))
    comps = [Component(loc, cov, w) for loc in locs]
    return MixingDistribution(comps, kernel)


def split_component(comp, cfg=AdaptConfig()):
    """Replace one Gaussian component by 3^d children with halved variance.

    Child locations offset the parent by {-1.18, 0, 1.18} standard
    deviations per coordinate; child weights are the tensor product of
    (0.24, 0.52, 0.24) scaled by the parent weight.
    """
    if comp.is_point_mass:
        raise ValueError("cannot split a point-mass component")
    d = comp.dim
    sd = np.sqrt(comp.cov_diag)
    child_cov = comp.cov_diag * cfg.split_var_factor
    children = []
    for picks in itertools.product(range(len(cfg.split_offsets)), repeat=d):
        offs = np.array([cfg.split_offsets[p] for p in picks])
        w = comp.weight * float(np.prod([cfg.split_weights[p] for p in picks]))
        children.append(Component(comp.location + offs * sd, child_cov, w))
    return children


def refine_grid(dataset, mixing, cfg=AdaptConfig(), wcfg=WeightSolveConfig()):
    """Adaptive grid driver: optimize weights, split heavy components, keep
    children with positive gradient, re-optimize, prune.  Returns
    (mixing, trace) with one trace row per step.
    """
    kernel = mixing.kernel
    probs = make_evaluator(dataset.X, dataset.y, kernel)
    comps = list(mixing.components)
    P = build_cache(dataset, mixing).P
    w, info = optimize_weights(P, mixing.weights, wcfg)
    trace = [_trace_row(0, "weights", loglik_of(P, w), len(comps), info["max_D"])]
    for rnd in range(1, cfg.grid_iters + 1):
        splittable = [s for s in np.argsort(w)[::-1] if not comps[s].is_point_mass]
        mixed = np.maximum(P @ w, 1e-300)
        new_comps, new_cols = [], []
        for s in splittable[:cfg.m_l]:
            for child in split_component(comps[s], cfg):
                p_child = probs(child.location, child.cov_diag)
                if float(np.mean(p_child / mixed)) - 1.0 > 0.0:
                    new_comps.append(child)
                    new_cols.append(p_child)
        if new_comps:
            # seed new columns with negligible mass; the solver reallocates
            eps_w = 1e-6
            w = np.concatenate([w * (1.0 - eps_w),
                                np.full(len(new_comps), eps_w / len(new_comps))])
            comps = comps + new_comps
            P = np.column_stack([P] + new_cols)
        w, info = optimize_weights(P, w, wcfg)
        keep = w > cfg.eps_tol
        if not keep.any():
            keep[int(np.argmax(w))] = True
        comps = [c for c, k in zip(comps, keep) if k]
        P = P[:, keep]
        w = w[keep] / w[keep].sum()
        trace.append(_trace_row(rnd, "refine", loglik_of(P, w), len(comps),
                                info["max_D"]))
    comps = [replace(c, weight=float(wi)) for c, wi in zip(comps, w)]
    return MixingDistribution(comps, kernel), trace


def mh_sample_support(dataset, mixing, cache, cfg=AdaptConfig(), seed=0,
                      cand_cov=None):
    """Random-walk Metropolis-Hastings candidates for new support points.

    The unnormalized target is max(D(beta; Q), 0) + mh_eps, so the chain
    concentrates where adding mass would raise the likelihood.  Proposals
    reflect at the bounds; every ``mh_thin``-th accepted state is kept.
    Returns an (m, d) array, empty when D <= 0 on the whole start probe.
    """
    d = mixing.kernel.dim
    bounds = cfg.bounds_for(d)
    scales = cfg.scales_for(d)
    rng = np.random.default_rng(seed)
    probs = make_evaluator(dataset.X, dataset.y, mixing.kernel)

    def d_value(loc):
        return gradient_D(loc, cand_cov, mixing, cache, dataset, probs)[0]

    probes = bounds[:, 0] + rng.random((100, d)) * (bounds[:, 1] - bounds[:, 0])
    probe_D = np.array([d_value(p) for p in probes])
    if np.max(probe_D) <= 0.0:
        return np.empty((0, d))

    x = probes[int(np.argmax(probe_D))]
    fx = max(np.max(probe_D), 0.0) + cfg.mh_eps
    kept = []
    accepted = 0
    max_steps = 50 * cfg.n_g * cfg.mh_thin
    for _ in range(max_steps):
        prop = x + scales * rng.standard_normal(d)
        prop = _reflect(prop, bounds)
        fp = max(d_value(prop), 0.0) + cfg.mh_eps
        if rng.random() < fp / fx:
            x, fx = prop, fp
            accepted += 1
            if accepted % cfg.mh_thin == 0:
                kept.append(x.copy())
                if len(kept) >= cfg.n_g:
                    break
    return np.array(kept) if kept else np.empty((0, d))


def _reflect(x, bounds):
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lo + y


def group_and_add(dataset, mixing, cache, candidates, cfg=AdaptConfig(),
                  seed=0, cand_cov=None):
    """Add the best candidate of each distance group by line search.

    Candidates are grouped by the nearest existing support point along one
    randomly drawn coordinate; within each group the candidate with the
    largest current D is tried, the blend weight coming from an exact line
    search.  Returns (mixing, cache, n_added).
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.size == 0:
        return mixing, cache, 0
    rng = np.random.default_rng(seed)
    d = mixing.kernel.dim
    probs = make_evaluator(dataset.X, dataset.y, mixing.kernel)
    coord = int(rng.integers(d))
    sup = mixing.locations[:, coord]
    assign = np.argmin(np.abs(candidates[:, coord][:, None] - sup[None, :]), axis=1)

    n_added = 0
    comps = list(mixing.components)
    for g in np.unique(assign):
        members = candidates[assign == g]
        evals = [gradient_D(m, cand_cov, mixing, cache, dataset, probs)
                 for m in members]
        best = int(np.argmax([e[0] for e in evals]))
        D_best, p_new = evals[best]
        if D_best <= 0.0:
            continue
        alpha = line_search_alpha(cache.mixed, p_new)
        if alpha <= 0.0:
            continue
        cov = np.zeros(d) if cand_cov is None else np.broadcast_to(
            np.asarray(cand_cov, float), (d,)).copy()
        comps = [replace(c, weight=c.weight * (1.0 - alpha)) for c in comps]
        comps.append(Component(members[best], cov, alpha))
        mixing = MixingDistribution(comps, mixing.kernel, mixing.cap_warn)
        cache.append_component(p_new, alpha)
        n_added += 1
    return mixing, cache, n_added


def _trace_row(rnd, step, ll, n_components, max_D):
    return {"round": rnd, "step": step, "ll": float(ll),
            "n_components": int(n_components),
            "max_D": float(max_D) if max_D is not None else float("nan")}


def rebind_kernel(mixing, kernel):
    """Same components under a different kernel (e.g. new error covariance)."""
    return MixingDistribution(list(mixing.components), kernel, mixing.cap_warn)


def probe_grid(bounds, per_axis):
    """Tensor probe grid over a bounds box, as an (m, d) array."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bounds]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bounds))


def estimate(dataset, mixing0, em_cfg=EmConfig(), cfg=AdaptConfig(),
             wcfg=WeightSolveConfig(), mode="EM", seed=0):
    """Full estimation driver; returns (mixing, trace).

    mode "GR" runs the adaptive grid.  Modes "EM" and "EM_GR" run rounds of
    (EM steps, MH candidate search, grouped additions, weight optimization,
    pruning); they differ only in the starting mixture the caller passes
    (EM_GR starts from a GR result).  Fixed seed gives identical output.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "GR":
        return refine_grid(dataset, mixing0, cfg, wcfg)

    mixing = mixing0
    # Candidates and grid components share the fixed bandwidth in EM modes.
    cand_cov = None
    for c in mixing.components:
        if not c.is_point_mass:
            cand_cov = c.cov_diag
            break

    seeds = np.random.SeedSequence(seed).spawn(2 * cfg.outer_rounds)
    trace = []

    # Fit and prune the starting weights so the driver begins from a proper
    # initial estimate (a fresh uniform grid would make the first EM pass
    # optimize hundreds of zero-mass components).
    cache = build_cache(dataset, mixing)
    w, info = optimize_weights(cache.P, mixing.weights, wcfg)
    mixing = prune(mixing.with_weights(w), cfg.eps_tol)
    cache = build_cache(dataset, mixing)
    prev_ll = scaled_loglik(cache)
    trace.append(_trace_row(0, "init_weights", prev_ll, mixing.S, info["max_D"]))

    for rnd in range(1, cfg.outer_rounds + 1):
        mixing, ll_trace = em_run(dataset, mixing, em_cfg)
        trace.append(_trace_row(rnd, "em", ll_trace[-1], mixing.S, None))
        cache = build_cache(dataset, mixing)
        cands = mh_sample_support(
            dataset, mixing, cache, cfg, seed=seeds[2 * rnd - 2], cand_cov=cand_cov)
        if len(cands):
            mixing, cache, added = group_and_add(
                dataset, mixing, cache, cands, cfg, seed=seeds[2 * rnd - 1],
                cand_cov=cand_cov)
            trace.append(_trace_row(rnd, "add", scaled_loglik(cache), mixing.S, None))
        w, info = optimize_weights(cache.P, mixing.weights, wcfg)
        mixing = prune(mixing.with_weights(w), cfg.eps_tol)
        cache = build_cache(dataset, mixing)
        ll = scaled_loglik(cache)
        trace.append(_trace_row(rnd, "weights", ll, mixing.S, info["max_D"]))
        if ll - prev_ll < cfg.ll_tol:
            break
        prev_ll = ll
    return mixing, trace
