"""Tests for the performance metrics.

Oracles: exact-recovery cases where the fitted mixture equals the
generating process, hand arithmetic on small mixtures, and an independent
direct-summation implementation of the CDF distance.
"""

import numpy as np
import pytest
from scipy.special import ndtr

from npmix.data import TrueMixing, case_kernel, simulate_case
from npmix.metrics import (cdf_dist, compute_report, ll_gap, mean_err_norm,
                           mixture_cdf, mixture_mean, pct_negative, prob_mae)
from npmix.mixture import Component, MixingDistribution


def _slope_mixing(locs, weights, cov=0.0):
    kernel = case_kernel("1a")
    comps = [Component(np.array([l]), np.array([cov]), w)
             for l, w in zip(locs, weights)]
    return MixingDistribution(comps, kernel)


def _asc_mixing(locs, weights):
    kernel = case_kernel("2a")
    comps = [Component(np.asarray(l, float), np.zeros(2), w)
             for l, w in zip(locs, weights)]
    return MixingDistribution(comps, kernel)


# ---------------------------------------------------------------------------
# exact recovery: fitted mixture equals the generating process
# ---------------------------------------------------------------------------

def test_exact_recovery_case_2a():
    # the generating process of case 2a is the kernel itself with a point
    # mass at (0, 0): ll_gap and prob_mae must vanish
    ds, truth = simulate_case("2a", 60, seed=0)
    q = _asc_mixing([(0.0, 0.0)], [1.0])
    assert ll_gap(ds, q) == pytest.approx(0.0, abs=1e-12)
    assert prob_mae(ds, q) == pytest.approx(0.0, abs=1e-12)
    assert mean_err_norm(q, truth) == 0.0
    l1, ks, step = cdf_dist(q, truth)
    assert l1 == 0.0 and ks == 0.0 and step == 0.05


def test_exact_recovery_case_1a():
    ds, truth = simulate_case("1a", 60, seed=1)
    q = _slope_mixing([1.0, -1.0], [0.75, 0.25])
    assert ll_gap(ds, q) == pytest.approx(0.0, abs=1e-12)
    assert prob_mae(ds, q) == pytest.approx(0.0, abs=1e-12)
    assert pct_negative(q) == pytest.approx(0.25)
    l1, ks, step = cdf_dist(q, truth)
    assert l1 == 0.0 and step == 0.01


def test_ll_gap_negative_for_bad_fit():
    ds, _ = simulate_case("1a", 200, seed=2)
    q = _slope_mixing([0.0], [1.0])
    assert ll_gap(ds, q) < 0.0
    assert prob_mae(ds, q) > 0.0


def test_metrics_require_generating_probs():
    from npmix.data import Dataset
    ds = Dataset(np.zeros((3, 3)), np.array([1, 2, 3]))
    q = _slope_mixing([0.0], [1.0])
    with pytest.raises(ValueError):
        ll_gap(ds, q)
    with pytest.raises(ValueError):
        prob_mae(ds, q)


# ---------------------------------------------------------------------------
# mixture CDF and distances
# ---------------------------------------------------------------------------

def test_mixture_cdf_point_mass_step():
    q = _slope_mixing([0.5], [1.0])
    z = np.array([[0.0], [0.5], [1.0]])
    np.testing.assert_allclose(mixture_cdf(q, z), [0.0, 1.0, 1.0])


def test_mixture_cdf_gaussian():
    q = _slope_mixing([1.0], [1.0], cov=4.0)
    z = np.array([[1.0], [3.0]])
    np.testing.assert_allclose(
        mixture_cdf(q, z), [0.5, float(ndtr(1.0))], atol=1e-12)


def test_mixture_cdf_2d_product():
    q = _asc_mixing([(0.0, 1.0)], [1.0])
    assert mixture_cdf(q, np.array([0.5, 1.5])) == 1.0
    assert mixture_cdf(q, np.array([-0.5, 1.5])) == 0.0


def test_cdf_dist_direct_summation_oracle():
    # independent re-implementation with an explicit loop over the grid
    q = _slope_mixing([-0.8, 1.1], [0.4, 0.6], cov=0.2)
    _, truth = simulate_case("1b", 2, seed=0)
    l1, ks, step = cdf_dist(q, truth)
    zs = np.arange(-4.0, 4.0 + step / 2, step)
    total, worst = 0.0, 0.0
    for z in zs:
        est = sum(
            c.weight * float(ndtr((z - c.location[0]) / np.sqrt(c.cov_diag[0])))
            for c in q.components)
        tru = float(ndtr(z - 1.0))
        total += abs(est - tru) * step
        worst = max(worst, abs(est - tru))
    assert l1 == pytest.approx(total, abs=1e-12)
    assert ks == pytest.approx(worst, abs=1e-14)


def test_cdf_dist_uses_bin_volume_2d():
    # mixture and truth are point masses 1 apart in the first coordinate:
    # the CDFs differ exactly on a 1 x 8 strip, so L1 distance ~ 8
    from npmix.data import MixAtom
    q = _asc_mixing([(1.0, -4.0)], [1.0])
    truth = TrueMixing(("asc2", "asc3"),
                       (MixAtom(1.0, "point", (0.0, -4.0)),))
    l1, ks, step = cdf_dist(q, truth)
    assert ks == 1.0
    assert l1 == pytest.approx(8.0, abs=0.3)


# ---------------------------------------------------------------------------
# scalar summaries
# ---------------------------------------------------------------------------

def test_pct_negative_hand_values():
    assert pct_negative(_slope_mixing([-1.0, 2.0], [0.3, 0.7])) == 0.3
    q = _slope_mixing([1.0], [1.0], cov=1.0)
    assert pct_negative(q) == pytest.approx(float(ndtr(-1.0)))


def test_mixture_mean_and_error():
    q = _slope_mixing([-1.0, 2.0], [0.5, 0.5])
    assert mixture_mean(q)[0] == pytest.approx(0.5)
    _, truth = simulate_case("1b", 2, seed=0)  # mean 1.0
    assert mean_err_norm(q, truth) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def test_compute_report_fields():
    ds, truth = simulate_case("1a", 50, seed=3)
    q = _slope_mixing([1.0, -1.0], [0.7, 0.3])
    rep = compute_report(ds, q, truth)
    assert rep.pct_neg_err == pytest.approx(0.05)
    row = rep.as_row()
    assert set(row) == {"ll_gap", "prob_mae", "cdf_dist", "ks_dist",
                        "pct_neg_err", "mean_err_norm", "cdf_step"}


def test_compute_report_no_slope():
    ds, truth = simulate_case("2b", 50, seed=4)
    q = _asc_mixing([(0.0, 0.0), (1.0, -1.0)], [0.5, 0.5])
    rep = compute_report(ds, q, truth)
    assert rep.pct_neg_err is None
    assert rep.as_row()["pct_neg_err"] == ""
    assert rep.mean_err_norm == pytest.approx(0.0)
