"""Choice probability kernels: multinomial logit and 3-alternative probit.

The probit evaluator reduces the choice probability to a bivariate normal
CDF of the two utility differences against the chosen alternative.  Gaussian
mixing of utility coefficients is absorbed into the error covariance, so a
Gaussian mixture component costs no more to evaluate than a point mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

__all__ = [
    "KernelSpec",
    "mnl_prob",
    "bvn_cdf",
    "mnp_prob",
    "component_prob",
    "component_probs",
]

_SYM_TOL = 1e-10


# ---------------------------------------------------------------------------
# Bivariate normal CDF (Drezner-Wesolowsky / Genz scheme, vectorized)
# ---------------------------------------------------------------------------

# 20-point Gauss-Legendre half-nodes and weights on [-1, 1].
_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
# Signed nodes for the symmetric quadrature sums.
_GL_XS = np.concatenate([_GL_X, -_GL_X])
_GL_WS = np.concatenate([_GL_W, _GL_W])


def _bvnu(dh, dk, r):
    """P(X > dh, Y > dk) for standard bivariate normal, elementwise.

    Port of the Drezner-Wesolowsky algorithm with Genz's modifications for
    |r| close to one, using the 20-point Gauss-Legendre rule throughout.
    All inputs must be finite arrays of the same shape.
    """
    dh = np.asarray(dh, dtype=float)
    dk = np.asarray(dk, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.empty(dh.shape)

    small = np.abs(r) < 0.925
    if small.all():
        hk = dh * dk
        hs = (dh * dh + dk * dk) / 2.0
        asr = np.arcsin(r)
        sn = np.sin(asr[..., None] * (1.0 - _GL_XS) / 2.0)
        terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
        bvn = (terms @ _GL_WS) * asr / (4.0 * np.pi)
        return np.clip(bvn + ndtr(-dh) * ndtr(-dk), 0.0, 1.0)
    if np.any(small):
        h = dh[small]
        k = dk[small]
        rs = r[small]
        hk = h * k
        hs = (h * h + k * k) / 2.0
        asr = np.arcsin(rs)
        sn = np.sin(asr[..., None] * (1.0 - _GL_XS) / 2.0)
        terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
        bvn = (terms @ _GL_WS) * asr / (4.0 * np.pi)
        out[small] = bvn + ndtr(-h) * ndtr(-k)

    big = ~small
    if np.any(big):
        h = dh[big]
        k = np.where(r[big] < 0.0, -dk[big], dk[big])
        hk = np.where(r[big] < 0.0, -dh[big] * dk[big], dh[big] * dk[big])
        rb = r[big]
        bvn = np.zeros(h.shape)

        inner = np.abs(rb) < 1.0
        if np.any(inner):
            hi, ki, hki = h[inner], k[inner], hk[inner]
            ri = rb[inner]
            a2 = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(a2)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            asr = -(bs / a2 + hki) / 2.0
            b0 = np.where(
                asr > -100.0,
                a * np.exp(np.maximum(asr, -745.0))
                * (1.0 - c * (bs - a2) * (1.0 - d * bs / 5.0) / 3.0
                   + c * d * a2 * a2 / 5.0),
                0.0,
            )
            b = np.sqrt(bs)
            sp = np.sqrt(2.0 * np.pi) * ndtr(-b / a)
            b0 = np.where(
                -hki < 100.0,
                b0 - np.exp(np.maximum(-hki / 2.0, -745.0)) * sp * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0),
                b0,
            )
            ah = a[..., None] / 2.0
            xs = (ah * (_GL_XS + 1.0)) ** 2
            rs = np.sqrt(1.0 - xs)
            asr = -(bs[..., None] / xs + hki[..., None]) / 2.0
            sp = 1.0 + c[..., None] * xs * (1.0 + d[..., None] * xs)
            ep = np.exp(-hki[..., None] * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
            terms = np.where(
                asr > -100.0,
                ah * np.exp(np.maximum(asr, -745.0)) * (ep - sp),
                0.0,
            )
            bvn[inner] = -(b0 + terms @ _GL_WS) / (2.0 * np.pi)

        pos = rb > 0.0
        bvn = np.where(pos, bvn + ndtr(-np.maximum(h, k)), bvn)
        bvn = np.where(~pos, -bvn + np.maximum(0.0, ndtr(-h) - ndtr(-k)), bvn)
        out[big] = bvn

    return np.clip(out, 0.0, 1.0)


def bvn_cdf(h, k, rho):
    """P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho.

    Accepts scalars or broadcastable arrays; infinite arguments and
    rho = +/-1 are honored exactly.  Raises ValueError for rho outside
    [-1, 1] or NaN arguments.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float),
        np.asarray(k, dtype=float),
        np.asarray(rho, dtype=float),
    )
    scalar = h.ndim == 0
    h = np.atleast_1d(h).copy()
    k = np.atleast_1d(k).copy()
    rho = np.atleast_1d(rho)
    if np.any(np.isnan(h)) or np.any(np.isnan(k)) or np.any(np.isnan(rho)):
        raise ValueError("bvn_cdf: NaN argument")
    if np.any(np.abs(rho) > 1.0):
        raise ValueError("bvn_cdf: correlation outside [-1, 1]")

    out = np.empty(h.shape)
    done = np.zeros(h.shape, dtype=bool)

    # Infinite arguments collapse to univariate quantities.
    neg_inf = np.isneginf(h) | np.isneginf(k)
    out[neg_inf] = 0.0
    done |= neg_inf
    h_inf = np.isposinf(h) & ~done
    out[h_inf] = ndtr(k[h_inf])
    done |= h_inf
    k_inf = np.isposinf(k) & ~done
    out[k_inf] = ndtr(h[k_inf])
    done |= k_inf

    # Degenerate correlations.
    r_one = (rho == 1.0) & ~done
    out[r_one] = ndtr(np.minimum(h[r_one], k[r_one]))
    done |= r_one
    r_mone = (rho == -1.0) & ~done
    out[r_mone] = np.maximum(0.0, ndtr(h[r_mone]) + ndtr(k[r_mone]) - 1.0)
    done |= r_mone

    rest = ~done
    if np.any(rest):
        out[rest] = _bvnu(-h[rest], -k[rest], rho[rest])
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Multinomial logit
# ---------------------------------------------------------------------------

def mnl_prob(utilities):
    """Softmax choice probabilities with max-subtraction for overflow safety."""
    u = np.asarray(utilities, dtype=float)
    if np.any(np.isnan(u)):
        raise ValueError("mnl_prob: NaN utility")
    z = u - np.max(u, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# 3-alternative multinomial probit
# ---------------------------------------------------------------------------

def _check_pd3(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (3, 3):
        raise ValueError("mnp_prob supports exactly 3 alternatives")
    if np.max(np.abs(sigma - sigma.T)) > _SYM_TOL * max(1.0, np.max(np.abs(sigma))):
        raise ValueError("error covariance is not symmetric")
    sigma = (sigma + sigma.T) / 2.0
    if np.min(np.linalg.eigvalsh(sigma)) <= 0.0:
        raise ValueError("error covariance is not positive definite")
    return sigma


# index pairs (k1, k2) of the competitors of alternative j (0-based)
_OTHERS = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def _mnp_prob_rows(V, Sigma, y0):
    """P(chosen alternative has maximal utility), vectorized over rows.

    V : (n, 3) systematic utilities; Sigma : (3, 3) or (n, 3, 3);
    y0 : (n,) chosen alternative, 0-based.  No validity checks.
    """
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    per_row = np.asarray(Sigma).ndim == 3
    out = np.empty(n)
    for j in range(3):
        rows = np.flatnonzero(y0 == j)
        if rows.size == 0:
            continue
        k1, k2 = _OTHERS[j]
        m1 = V[rows, j] - V[rows, k1]
        m2 = V[rows, j] - V[rows, k2]
        if per_row:
            S = Sigma[rows]
            c11 = S[:, k1, k1] + S[:, j, j] - 2.0 * S[:, k1, j]
            c22 = S[:, k2, k2] + S[:, j, j] - 2.0 * S[:, k2, j]
            c12 = S[:, k1, k2] - S[:, k1, j] - S[:, j, k2] + S[:, j, j]
        else:
            S = Sigma
            c11 = S[k1, k1] + S[j, j] - 2.0 * S[k1, j]
            c22 = S[k2, k2] + S[j, j] - 2.0 * S[k2, j]
            c12 = S[k1, k2] - S[k1, j] - S[j, k2] + S[j, j]
        s1 = np.sqrt(c11)
        s2 = np.sqrt(c22)
        rho = np.clip(c12 / (s1 * s2), -1.0, 1.0)
        out[rows] = bvn_cdf(m1 / s1, m2 / s2, rho)
    return out


def mnp_prob(V, Sigma, j):
    """P(U_j >= U_k for all k) with U = V + eps, eps ~ N(0, Sigma), J = 3.

    ``j`` is the 1-based chosen alternative.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (3,):
        raise ValueError("mnp_prob supports exactly 3 alternatives")
    sigma = _check_pd3(Sigma)
    if j not in (1, 2, 3):
        raise ValueError(f"chosen alternative {j} out of range 1..3")
    return float(_mnp_prob_rows(V[None, :], sigma, np.array([j - 1]))[0])


# ---------------------------------------------------------------------------
# Kernel specification and mixture-component probabilities
# ---------------------------------------------------------------------------

def _coef_names(J):
    return ("beta",) + tuple(f"asc{j}" for j in range(2, J + 1))


@dataclass(frozen=True)
class KernelSpec:
    """Which choice-probability family to use and how utilities are built.

    Utilities are U_ij = X_ij * beta + asc_j (asc1 normalized to zero).
    ``mixed`` names the coefficients supplied by a mixture component, in
    component-coordinate order; all remaining coefficients take their
    value from ``fixed``.
    """

    family: str  # "mnl" or "mnp"
    J: int = 3
    error_cov: np.ndarray | None = None  # (J, J), MNP only
    mixed: tuple[str, ...] = ("beta",)
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("mnl", "mnp"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        names = _coef_names(self.J)
        for name in self.mixed:
            if name not in names:
                raise ValueError(f"unknown mixed coefficient {name!r}")
        free = set(names) - set(self.mixed)
        missing = free - set(self.fixed)
        if missing:
            raise ValueError(f"coefficients neither mixed nor fixed: {sorted(missing)}")
        doubled = set(self.mixed) & set(self.fixed)
        if doubled:
            raise ValueError(f"coefficients both mixed and fixed: {sorted(doubled)}")
        if self.family == "mnp":
            cov = np.eye(self.J) if self.error_cov is None else np.asarray(self.error_cov, float)
            if self.J != 3:
                raise ValueError("MNP kernel is unsupported for J != 3")
            _check_pd3(cov)
            object.__setattr__(self, "error_cov", cov)

    @property
    def dim(self):
        """Dimension of the mixed-coefficient space."""
        return len(self.mixed)

    def to_json(self):
        return {
            "family": self.family,
            "J": self.J,
            "error_cov": None if self.error_cov is None else np.asarray(self.error_cov).tolist(),
            "mixed": list(self.mixed),
            "fixed": {k: float(v) for k, v in self.fixed.items()},
        }

    @classmethod
    def from_json(cls, obj):
        cov = obj.get("error_cov")
        return cls(
            family=obj["family"],
            J=int(obj.get("J", 3)),
            error_cov=None if cov is None else np.asarray(cov, float),
            mixed=tuple(obj["mixed"]),
            fixed=dict(obj.get("fixed", {})),
        )


def _utilities(X, spec, location):
    """Systematic utilities (n, J) for mixed-coordinate values ``location``."""
    coef = dict(spec.fixed)
    for name, val in zip(spec.mixed, np.atleast_1d(location)):
        coef[name] = float(val)
    asc = np.zeros(spec.J)
    for j in range(2, spec.J + 1):
        asc[j - 1] = coef[f"asc{j}"]
    return X * coef["beta"] + asc


def _mix_map(X, spec):
    """Map A from mixed-coefficient space to utility space: (n, J, d) or (J, d)."""
    cols = []
    per_row = "beta" in spec.mixed
    n = X.shape[0]
    for name in spec.mixed:
        if name == "beta":
            cols.append(X)
        else:
            j = int(name[3:]) - 1
            e = np.zeros(spec.J)
            e[j] = 1.0
            cols.append(np.broadcast_to(e, (n, spec.J)) if per_row else e)
    if per_row:
        return np.stack(cols, axis=-1)  # (n, J, d)
    return np.stack(cols, axis=-1)  # (J, d)


def make_evaluator(X, y, spec):
    """Precompute the per-observation utility-difference geometry.

    Returns ``probs(location, cov_diag=None) -> (n,)``, the choice
    probabilities of the observed alternatives under one mixture component.
    All data-dependent quantities (difference contrasts of the mixing map
    and of the error covariance) are computed once, so repeated calls with
    different components only cost the bivariate CDF evaluation.
    """
    X = np.asarray(X, dtype=float)
    y0 = np.asarray(y, dtype=int) - 1
    n = X.shape[0]
    if np.any((y0 < 0) | (y0 >= spec.J)):
        raise ValueError("choice index out of range")
    d = spec.dim

    if spec.family == "mnl":
        rows = np.arange(n)

        def probs_mnl(location, cov_diag=None):
            if cov_diag is not None and np.any(np.asarray(cov_diag) > 0.0):
                raise ValueError(
                    "Gaussian components are not admissible with the MNL kernel")
            return mnl_prob(_utilities(X, spec, location))[rows, y0]

        return probs_mnl

    # competitors of the chosen alternative (J = 3)
    K1 = np.array([1, 0, 0])[y0]
    K2 = np.array([2, 2, 1])[y0]
    S = spec.error_cov
    base11 = S[K1, K1] + S[y0, y0] - 2.0 * S[K1, y0]
    base22 = S[K2, K2] + S[y0, y0] - 2.0 * S[K2, y0]
    base12 = S[K1, K2] - S[K1, y0] - S[y0, K2] + S[y0, y0]

    # fixed part of the systematic utilities
    vfix = _utilities(X, spec, np.zeros(d))
    rows = np.arange(n)
    f1 = vfix[rows, y0] - vfix[rows, K1]
    f2 = vfix[rows, y0] - vfix[rows, K2]

    # per-coordinate contrasts of the mixing map (chosen minus competitor)
    g1 = np.empty((n, d))
    g2 = np.empty((n, d))
    for c, name in enumerate(spec.mixed):
        if name == "beta":
            col = X
        else:
            col = np.zeros((1, spec.J))
            col[0, int(name[3:]) - 1] = 1.0
            col = np.broadcast_to(col, (n, spec.J))
        g1[:, c] = col[rows, y0] - col[rows, K1]
        g2[:, c] = col[rows, y0] - col[rows, K2]
    g1sq = g1 * g1
    g2sq = g2 * g2
    g12 = g1 * g2

    def probs(location, cov_diag=None):
        b = np.atleast_1d(np.asarray(location, dtype=float))
        m1 = f1 + g1 @ b
        m2 = f2 + g2 @ b
        if cov_diag is not None:
            v = np.atleast_1d(np.asarray(cov_diag, dtype=float))
            c11 = base11 + g1sq @ v
            c22 = base22 + g2sq @ v
            c12 = base12 + g12 @ v
        else:
            c11, c22, c12 = base11, base22, base12
        s1 = np.sqrt(c11)
        s2 = np.sqrt(c22)
        rho = np.clip(c12 / (s1 * s2), -1.0, 1.0)
        return _bvnu(-m1 / s1, -m2 / s2, rho)

    return probs


def component_probs(X, y, spec, location, cov_diag=None):
    """Per-observation choice probabilities for one mixture component.

    For an MNP kernel with a Gaussian component (diagonal covariance
    ``cov_diag`` over the mixed coefficients) the mixing covariance is
    absorbed into the error covariance: Sigma + A diag(cov) A'.  Point
    masses (cov_diag zero or None) evaluate the kernel at ``location``.
    """
    location = np.atleast_1d(np.asarray(location, dtype=float))
    if location.shape != (spec.dim,):
        raise ValueError(
            f"component location has dimension {location.shape}, kernel mixes {spec.dim}")
    if cov_diag is not None and not np.any(np.asarray(cov_diag) > 0.0):
        cov_diag = None
    return make_evaluator(X, y, spec)(location, cov_diag)


def component_prob(x_row, y_choice, spec, component):
    """Choice probability of one observation under one mixture component."""
    p = component_probs(
        np.asarray(x_row, float)[None, :], np.array([y_choice]), spec,
        component.location, component.cov_diag)
    return float(p[0])
