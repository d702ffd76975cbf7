"""Mixing distributions, the probability cache, and the gradient function D.

The cache holds the n x S matrix of per-observation, per-component choice
probabilities; every solver in the package works off this matrix.  D(beta; Q)
is the directional derivative of the scaled log-likelihood toward a candidate
component and drives both the optimality check and candidate search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .kernel import KernelSpec, make_evaluator

__all__ = [
    "Component",
    "MixingDistribution",
    "ProbCache",
    "build_cache",
    "scaled_loglik",
    "gradient_D",
    "check_optimality",
    "PROB_FLOOR",
]

# Floor applied inside logarithms and ratio denominators.
PROB_FLOOR = 1e-300

WEIGHT_TOL = 1e-10


@dataclass(frozen=True)
class Component:
    """One mixture component: location, diagonal covariance, weight."""

    location: np.ndarray
    cov_diag: np.ndarray
    weight: float

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        cov = np.atleast_1d(np.asarray(self.cov_diag, dtype=float))
        if cov.shape != loc.shape:
            raise ValueError("location and cov_diag dimensions differ")
        if np.any(cov < 0.0):
            raise ValueError("cov_diag entries must be nonnegative")
        if not 0.0 <= self.weight <= 1.0 + WEIGHT_TOL:
            raise ValueError(f"weight {self.weight} outside [0, 1]")
        loc.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "cov_diag", cov)

    @property
    def is_point_mass(self):
        return not np.any(self.cov_diag > 0.0)

    @property
    def dim(self):
        return self.location.shape[0]


@dataclass
class MixingDistribution:
    """A finite mixture Q over the mixed coefficients of a kernel."""

    components: list[Component]
    kernel: KernelSpec
    cap_warn: int | None = None  # soft component cap, usually n + 1

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixing distribution needs at least one component")
        d = self.kernel.dim
        for c in self.components:
            if c.dim != d:
                raise ValueError("component dimension does not match kernel")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"component weights sum to {total}, not 1")
        if self.cap_warn is not None and self.S > 2 * self.cap_warn:
            raise ValueError(
                f"component count {self.S} exceeds twice the cap {self.cap_warn}")

    @property
    def S(self):
        return len(self.components)

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])

    @property
    def locations(self):
        return np.stack([c.location for c in self.components])

    @property
    def cov_diags(self):
        return np.stack([c.cov_diag for c in self.components])

    def with_weights(self, weights):
        """Same support, new weights (renormalized to absorb rounding)."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.S,):
            raise ValueError("weight vector length mismatch")
        w = w / w.sum()
        comps = [replace(c, weight=float(wi)) for c, wi in zip(self.components, w)]
        return MixingDistribution(comps, self.kernel, self.cap_warn)

    def to_json(self):
        return {
            "components": [
                {"location": c.location.tolist(),
                 "cov_diag": c.cov_diag.tolist(),
                 "weight": c.weight}
                for c in self.components
            ],
            "kernel": self.kernel.to_json(),
        }

    @classmethod
    def from_json(cls, obj):
        kernel = KernelSpec.from_json(obj["kernel"])
        comps = [
            Component(np.asarray(c["location"], float),
                      np.asarray(c["cov_diag"], float),
                      float(c["weight"]))
            for c in obj["components"]
        ]
        return cls(comps, kernel)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ProbCache:
    """Per-component and mixed choice probabilities for one dataset."""

    P: np.ndarray  # (n, S)
    weights: np.ndarray  # (S,)
    mixed: np.ndarray = field(init=False)  # (n,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.remix(self.weights)

    def remix(self, weights):
        """Cheap update of the mixed probabilities after a weight change."""
        self.weights = np.asarray(weights, dtype=float)
        self.mixed = np.maximum(self.P @ self.weights, PROB_FLOOR)

    def append_component(self, p_new, alpha):
        """Blend in a new component with weight alpha, rescaling the rest."""
        self.P = np.column_stack([self.P, p_new])
        self.remix(np.append(self.weights * (1.0 - alpha), alpha))

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def S(self):
        return self.P.shape[1]


def build_cache(dataset, mixing):
    """Fill the n x S probability matrix for a mixing distribution."""
    n, S = dataset.n, mixing.S
    P = np.empty((n, S))
    probs = make_evaluator(dataset.X, dataset.y, mixing.kernel)
    for s, c in enumerate(mixing.components):
        try:
            P[:, s] = probs(c.location, None if c.is_point_mass else c.cov_diag)
        except Exception as exc:
            raise RuntimeError(f"kernel evaluation failed for component {s}: {exc}") from exc
    return ProbCache(P=P, weights=mixing.weights)


def scaled_loglik(cache):
    """Scaled log-likelihood (1/n) sum_i log p(y_i | X_i; Q)."""
    return float(np.mean(np.log(np.maximum(cache.mixed, PROB_FLOOR))))


def loglik_of(P, weights):
    mixed = np.maximum(P @ np.asarray(weights, float), PROB_FLOOR)
    return float(np.mean(np.log(mixed)))


def gradient_D(location, cov_diag, mixing, cache, dataset, evaluator=None):
    """Directional derivative D(beta; Q) toward a candidate component.

    Returns (D, p_new) where p_new holds the candidate's per-observation
    probabilities, reusable by the subsequent line search.  Pass a
    precomputed ``evaluator`` (from kernel.make_evaluator) when evaluating
    many candidates against the same dataset.
    """
    if evaluator is None:
        evaluator = make_evaluator(dataset.X, dataset.y, mixing.kernel)
    p_new = evaluator(location, cov_diag)
    D = float(np.mean(p_new / np.maximum(cache.mixed, PROB_FLOOR)) - 1.0)
    return D, p_new


def check_optimality(mixing, dataset, probe_points, tol=1e-4,
                     probe_cov=None, cache=None, active_tol=1e-3):
    """First-order-condition report for a (presumed optimized) mixture.

    Evaluates D at every probe point (with covariance ``probe_cov``, zero
    for point-mass probes) and at every support point carrying weight above
    ``active_tol``.  At an NP-MLE optimum max_D <= tol and |D| <= tol at
    the support points.
    """
    if cache is None:
        cache = build_cache(dataset, mixing)
    probs = make_evaluator(dataset.X, dataset.y, mixing.kernel)
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
    probe_D = np.array([
        gradient_D(p, probe_cov, mixing, cache, dataset, probs)[0]
        for p in probe_points])
    support_D = np.array([
        gradient_D(c.location, c.cov_diag, mixing, cache, dataset, probs)[0]
        for c in mixing.components])
    active = mixing.weights > active_tol
    max_support = float(np.max(np.abs(support_D[active]))) if active.any() else 0.0
    return {
        "max_D": float(np.max(probe_D)) if probe_D.size else -np.inf,
        "probe_D": probe_D,
        "support_D": support_D,
        "max_support_absD": max_support,
        "optimal": bool(
            (probe_D.size == 0 or np.max(probe_D) <= tol) and max_support <= tol),
    }
