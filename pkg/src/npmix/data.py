"""Synthetic choice data for the five simulation cases, plus CSV round trips.

All cases share the design: three alternatives, one regressor per
alternative drawn iid N(0, 9), utilities U_ij = X_ij * beta_i + asc_j +
eps_ij with asc1 = 0.  Cases 1a-1c randomize the slope; cases 2a-2b fix
beta = 1 and randomize the error distribution, which the estimation model
absorbs into random alternative-specific constants.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .kernel import KernelSpec, _mnp_prob_rows, component_probs

__all__ = [
    "Dataset",
    "MixAtom",
    "TrueMixing",
    "simulate_case",
    "load_dataset",
    "save_dataset",
    "case_kernel",
    "CASE_IDS",
]

CASE_IDS = ("1a", "1b", "1c", "2a", "2b")

SIGMA_2A = np.array([
    [1.00, 0.50, 0.00],
    [0.50, 1.25, 0.50],
    [0.00, 0.50, 1.25],
])
SIGMA_2B = np.array([
    [1.00, -0.50, 0.00],
    [-0.50, 1.25, -0.50],
    [0.00, -0.50, 1.25],
])
MEAN_2B = np.array([0.0, 1.0, -1.0])

_REGRESSOR_SD = 3.0  # variance 9 per alternative


@dataclass
class Dataset:
    """Cross-sectional choice data: one choice per individual."""

    X: np.ndarray  # (n, J) regressor values
    y: np.ndarray  # (n,) chosen alternative, 1..J
    true_prob: np.ndarray | None = None  # generating probability of y[i]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y have inconsistent shapes")
        if self.n == 0:
            raise ValueError("no observations")
        bad = np.flatnonzero((self.y < 1) | (self.y > self.J))
        if bad.size:
            raise ValueError(
                f"row {bad[0]}: choice {self.y[bad[0]]} out of range 1..{self.J}")
        if self.true_prob is not None:
            self.true_prob = np.asarray(self.true_prob, dtype=float)
            if self.true_prob.shape != (self.n,):
                raise ValueError("true_prob must have one entry per individual")
            bad = ~((self.true_prob >= 0.0) & (self.true_prob <= 1.0))
            if np.any(bad):  # endpoints allowed: doubles round to 0 or 1
                raise ValueError("true_prob entries must lie in [0, 1]")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def J(self):
        return self.X.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.X.shape != other.X.shape or not np.array_equal(self.X, other.X):
            return False
        if not np.array_equal(self.y, other.y):
            return False
        if (self.true_prob is None) != (other.true_prob is None):
            return False
        return self.true_prob is None or np.array_equal(self.true_prob, other.true_prob)


@dataclass(frozen=True)
class MixAtom:
    """One atom of a ground-truth mixing distribution.

    kind "point": mass at ``loc``.
    kind "normal": independent normal coordinates, mean ``loc``, sd ``scale``.
    kind "lognormal": one coordinate, log-scale mean ``loc`` and sd ``scale``.
    """

    weight: float
    kind: str
    loc: tuple
    scale: tuple = ()

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "point":
            return np.prod(z >= np.asarray(self.loc), axis=-1).astype(float)
        if self.kind == "normal":
            u = (z - np.asarray(self.loc)) / np.asarray(self.scale)
            return np.prod(ndtr(u), axis=-1)
        if self.kind == "lognormal":
            mu, sig = self.loc[0], self.scale[0]
            zz = z[..., 0]
            with np.errstate(divide="ignore"):
                v = np.where(zz > 0.0, ndtr((np.log(np.maximum(zz, 1e-300)) - mu) / sig), 0.0)
            return v
        raise ValueError(f"unknown atom kind {self.kind!r}")

    def mean(self):
        if self.kind == "lognormal":
            mu, sig = self.loc[0], self.scale[0]
            return np.array([np.exp(mu + sig * sig / 2.0)])
        return np.asarray(self.loc, dtype=float)

    def mass_below(self, k, threshold=0.0):
        """Probability that coordinate k falls below ``threshold``."""
        if self.kind == "point":
            return float(self.loc[k] < threshold)
        if self.kind == "normal":
            return float(ndtr((threshold - self.loc[k]) / self.scale[k]))
        if self.kind == "lognormal":
            if threshold <= 0.0:
                return 0.0
            return float(ndtr((np.log(threshold) - self.loc[0]) / self.scale[0]))
        raise ValueError(f"unknown atom kind {self.kind!r}")


@dataclass(frozen=True)
class TrueMixing:
    """Ground-truth distribution of the mixed coefficients."""

    labels: tuple[str, ...]
    atoms: tuple[MixAtom, ...]

    @property
    def dim(self):
        return len(self.labels)

    def cdf(self, z):
        """CDF at points z of shape (..., d)."""
        z = np.asarray(z, dtype=float)
        return sum(a.weight * a.cdf(z) for a in self.atoms)

    def mean(self):
        return sum(a.weight * a.mean() for a in self.atoms)

    def pct_negative(self, k=0):
        return sum(a.weight * a.mass_below(k) for a in self.atoms)

    def to_json(self):
        return {
            "labels": list(self.labels),
            "atoms": [
                {"weight": a.weight, "kind": a.kind,
                 "loc": list(a.loc), "scale": list(a.scale)}
                for a in self.atoms
            ],
        }

    @classmethod
    def from_json(cls, obj):
        atoms = tuple(
            MixAtom(weight=float(a["weight"]), kind=a["kind"],
                    loc=tuple(a["loc"]), scale=tuple(a.get("scale", ())))
            for a in obj["atoms"]
        )
        return cls(labels=tuple(obj["labels"]), atoms=atoms)


_TRUE_MIXINGS = {
    "1a": TrueMixing(("beta",), (
        MixAtom(0.75, "point", (1.0,)),
        MixAtom(0.25, "point", (-1.0,)),
    )),
    "1b": TrueMixing(("beta",), (
        MixAtom(1.0, "normal", (1.0,), (1.0,)),
    )),
    "1c": TrueMixing(("beta",), (
        MixAtom(1.0, "lognormal", (0.0,), (0.5,)),
    )),
    "2a": TrueMixing(("asc2", "asc3"), (
        MixAtom(1.0, "point", (0.0, 0.0)),
    )),
    "2b": TrueMixing(("asc2", "asc3"), (
        MixAtom(0.5, "point", (0.0, 0.0)),
        MixAtom(0.5, "point", (1.0, -1.0)),
    )),
}


def case_kernel(case_id, error_cov=None):
    """Estimation-model kernel for a simulation case.

    ``error_cov`` overrides the default MNP error covariance (the
    generating covariance of the first error component).
    """
    if case_id not in CASE_IDS:
        raise ValueError(f"unknown case {case_id!r}")
    if case_id.startswith("1"):
        cov = np.eye(3) if error_cov is None else error_cov
        return KernelSpec("mnp", 3, cov, mixed=("beta",),
                          fixed={"asc2": 0.0, "asc3": 0.0})
    cov = SIGMA_2A if error_cov is None else error_cov
    return KernelSpec("mnp", 3, cov, mixed=("asc2", "asc3"), fixed={"beta": 1.0})


def _true_prob_1c(X, y, n_nodes=64):
    """Exact case-1c probabilities by Gauss-Hermite quadrature over log-beta."""
    nodes, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    wts = wts / np.sqrt(2.0 * np.pi)
    spec = case_kernel("1c")
    p = np.zeros(len(y))
    for z, w in zip(nodes, wts):
        b = np.exp(0.5 * z)
        p += w * component_probs(X, y, spec, [b])
    return p


def _true_probs(case_id, X, y):
    if case_id == "1a":
        i3 = np.eye(3)
        return (0.75 * _mnp_prob_rows(X, i3, y - 1)
                + 0.25 * _mnp_prob_rows(-X, i3, y - 1))
    if case_id == "1b":
        return component_probs(X, y, case_kernel("1b"), [1.0], [1.0])
    if case_id == "1c":
        return _true_prob_1c(X, y)
    if case_id == "2a":
        return _mnp_prob_rows(X, SIGMA_2A, y - 1)
    if case_id == "2b":
        return (0.5 * _mnp_prob_rows(X, SIGMA_2A, y - 1)
                + 0.5 * _mnp_prob_rows(X + MEAN_2B, SIGMA_2B, y - 1))
    raise ValueError(f"unknown case {case_id!r}")


def simulate_case(case_id, n, seed):
    """Generate one dataset for a simulation case.

    Returns (Dataset, TrueMixing).  Sub-streams for regressors,
    coefficients, and errors are spawned deterministically from ``seed``,
    so individual i's data does not change when n grows.
    """
    if case_id not in CASE_IDS:
        raise ValueError(f"unknown case {case_id!r}")
    if n < 1:
        raise ValueError("n must be at least 1")
    ss_x, ss_coef, ss_eps = np.random.SeedSequence(seed).spawn(3)
    rng_x = np.random.default_rng(ss_x)
    rng_coef = np.random.default_rng(ss_coef)
    rng_eps = np.random.default_rng(ss_eps)

    X = _REGRESSOR_SD * rng_x.standard_normal((n, 3))
    if case_id.startswith("1"):
        if case_id == "1a":
            beta = np.where(rng_coef.random(n) < 0.75, 1.0, -1.0)
        elif case_id == "1b":
            beta = 1.0 + rng_coef.standard_normal(n)
        else:
            beta = np.exp(0.5 * rng_coef.standard_normal(n))
        eps = rng_eps.standard_normal((n, 3))
        U = X * beta[:, None] + eps
    else:
        z = rng_eps.standard_normal((n, 3))
        if case_id == "2a":
            eps = z @ np.linalg.cholesky(SIGMA_2A).T
        else:
            second = rng_coef.random(n) < 0.5
            eps_a = z @ np.linalg.cholesky(SIGMA_2A).T
            eps_b = MEAN_2B + z @ np.linalg.cholesky(SIGMA_2B).T
            eps = np.where(second[:, None], eps_b, eps_a)
        U = X + eps
    y = np.argmax(U, axis=1) + 1
    dataset = Dataset(X=X, y=y, true_prob=_true_probs(case_id, X, y))
    return dataset, _TRUE_MIXINGS[case_id]


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def save_dataset(dataset, path):
    """Write a dataset as CSV with header id,choice,x1,...,xJ[,true_prob]."""
    header = ["id", "choice"] + [f"x{j}" for j in range(1, dataset.J + 1)]
    if dataset.true_prob is not None:
        header.append("true_prob")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [i + 1, int(dataset.y[i])] + [f"{v:.17g}" for v in dataset.X[i]]
            if dataset.true_prob is not None:
                row.append(f"{dataset.true_prob[i]:.17g}")
            writer.writerow(row)


def load_dataset(path):
    """Read a dataset written by :func:`save_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("no observations") from None
        x_cols = [c for c in header if c.startswith("x")]
        J = len(x_cols)
        if J < 2 or header[:2] != ["id", "choice"]:
            raise ValueError(f"malformed header: {header}")
        has_prob = "true_prob" in header
        expected = 2 + J + int(has_prob)
        X_rows, y_rows, p_rows = [], [], []
        for idx, row in enumerate(reader):
            if len(row) != expected:
                raise ValueError(
                    f"row {idx + 1}: expected {expected} fields, found {len(row)}")
            try:
                choice = int(row[1])
                xs = [float(v) for v in row[2:2 + J]]
                prob = float(row[2 + J]) if has_prob else None
            except ValueError:
                raise ValueError(f"row {idx + 1}: unparseable value") from None
            if not 1 <= choice <= J:
                raise ValueError(
                    f"row {idx + 1}: choice {choice} out of range 1..{J}")
            X_rows.append(xs)
            y_rows.append(choice)
            if has_prob:
                p_rows.append(prob)
    if not X_rows:
        raise ValueError("no observations")
    return Dataset(
        X=np.array(X_rows), y=np.array(y_rows),
        true_prob=np.array(p_rows) if has_prob else None)


def save_truth(truth, path, scenario=None):
    """Write a TrueMixing (plus optional scenario descriptor) as JSON."""
    obj = truth.to_json()
    if scenario is not None:
        obj["scenario"] = scenario
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_truth(path):
    with open(path) as fh:
        return TrueMixing.from_json(json.load(fh))
