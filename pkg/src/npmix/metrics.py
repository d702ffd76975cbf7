"""Performance measures for one estimation run.

Covers the log-likelihood gap against the generating process, the mean
absolute error of the chosen-alternative probabilities, the L1 distance
between estimated and true mixing CDFs on a fixed grid, the probability
mass on negative coefficient values, and the error in the mixture mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .mixture import PROB_FLOOR, build_cache, scaled_loglik

__all__ = [
    "MetricsReport",
    "ll_gap",
    "prob_mae",
    "cdf_dist",
    "pct_negative",
    "mean_err_norm",
    "mixture_cdf",
    "mixture_mean",
    "compute_report",
]

CDF_BOX = (-4.0, 4.0)
CDF_STEP_1D = 0.01
CDF_STEP_ND = 0.05  # coarsened grid for d >= 2


@dataclass
class MetricsReport:
    ll_gap: float
    prob_mae: float
    cdf_dist: float
    ks_dist: float  # max |CDF difference| on the same grid
    pct_neg_err: float | None
    mean_err_norm: float
    cdf_step: float

    def as_row(self):
        return {
            "ll_gap": self.ll_gap,
            "prob_mae": self.prob_mae,
            "cdf_dist": self.cdf_dist,
            "ks_dist": self.ks_dist,
            "pct_neg_err": "" if self.pct_neg_err is None else self.pct_neg_err,
            "mean_err_norm": self.mean_err_norm,
            "cdf_step": self.cdf_step,
        }


def ll_gap(dataset, mixing, cache=None):
    """Scaled log-likelihood of the estimate minus that of the truth.

    The truth's likelihood comes from the exact generating probabilities
    stored on the dataset; negative values flag optimization problems.
    """
    if dataset.true_prob is None:
        raise ValueError("dataset carries no generating probabilities")
    if cache is None:
        cache = build_cache(dataset, mixing)
    ll_true = float(np.mean(np.log(np.maximum(dataset.true_prob, PROB_FLOOR))))
    return scaled_loglik(cache) - ll_true


def prob_mae(dataset, mixing, cache=None):
    """Mean absolute error of the chosen-alternative choice probabilities."""
    if dataset.true_prob is None:
        raise ValueError("dataset carries no generating probabilities")
    if cache is None:
        cache = build_cache(dataset, mixing)
    return float(np.mean(np.abs(cache.mixed - dataset.true_prob)))


def _cdf_grid(dim):
    step = CDF_STEP_1D if dim == 1 else CDF_STEP_ND
    axis = np.arange(CDF_BOX[0], CDF_BOX[1] + step / 2.0, step)
    pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    return pts.reshape(-1, dim), step


def mixture_cdf(mixing, z):
    """CDF of an estimated mixture at points z of shape (..., d).

    Diagonal-Gaussian components factor into per-coordinate normal CDFs;
    point masses contribute indicators.
    """
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape[:-1])
    for c in mixing.components:
        gaussian = c.cov_diag > 0.0
        term = np.ones(z.shape[:-1])
        for k in range(c.dim):
            if gaussian[k]:
                term = term * ndtr((z[..., k] - c.location[k]) / np.sqrt(c.cov_diag[k]))
            else:
                term = term * (z[..., k] >= c.location[k])
        out += c.weight * term
    return out


def cdf_dist(mixing, truth):
    """L1 distance between the estimated and true mixing CDFs.

    Sum of |difference| over the grid times the bin volume; the grid step
    is 0.01 for one mixed coordinate and 0.05 otherwise.  Returns
    (l1_distance, max_abs_difference, step).
    """
    d = truth.dim
    pts, step = _cdf_grid(d)
    diff = np.abs(mixture_cdf(mixing, pts) - truth.cdf(pts))
    return float(diff.sum() * step ** d), float(diff.max()), step


def pct_negative(mixing, k=0):
    """Mass of the estimated mixture with coordinate k below zero."""
    total = 0.0
    for c in mixing.components:
        if c.cov_diag[k] > 0.0:
            total += c.weight * float(ndtr(-c.location[k] / np.sqrt(c.cov_diag[k])))
        else:
            total += c.weight * float(c.location[k] < 0.0)
    return total


def mixture_mean(mixing):
    return sum(c.weight * c.location for c in mixing.components)


def mean_err_norm(mixing, truth):
    """Euclidean distance between estimated and true mixture means."""
    return float(np.linalg.norm(mixture_mean(mixing) - truth.mean()))


def compute_report(dataset, mixing, truth, cache=None):
    """All metrics for one run; pct_neg_err only when a slope is mixed."""
    if cache is None:
        cache = build_cache(dataset, mixing)
    l1, ks, step = cdf_dist(mixing, truth)
    pct_err = None
    if "beta" in truth.labels:
        k = truth.labels.index("beta")
        pct_err = abs(pct_negative(mixing, k) - truth.pct_negative(k))
    return MetricsReport(
        ll_gap=ll_gap(dataset, mixing, cache),
        prob_mae=prob_mae(dataset, mixing, cache),
        cdf_dist=l1,
        ks_dist=ks,
        pct_neg_err=pct_err,
        mean_err_norm=mean_err_norm(mixing, truth),
        cdf_step=step,
    )
