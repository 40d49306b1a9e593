"""Population-average estimators over referral samples.

The family: plain sample average, the degree-adjusted IPW and VH forms, the
minimum-variance weighted average (general solve against a covariance model
and the closed form for distance-kernel covariances on trees), the
GLS-adjusted IPW/VH variants, and a plug-in feasible-GLS that estimates the
trait-class transition structure from the sample itself.

Weighted averages here always use weights that sum to one, so every
estimator returns c on a constant trait c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .spectral import expand_in_eigenbasis
from .tree import pairwise_distances

WEIGHT_SUM_TOL = 1e-10

ESTIMATOR_KINDS = ("mean", "ipw", "vh", "gls", "gls_ipw", "gls_vh", "sbm_fgls")

# estimates.csv splits each kind into a base estimator and an adjustment
KIND_TO_COLUMNS = {
    "mean": ("mean", "none"),
    "ipw": ("mean", "ipw"),
    "vh": ("mean", "vh"),
    "gls": ("gls", "none"),
    "gls_ipw": ("gls", "ipw"),
    "gls_vh": ("gls", "vh"),
    "sbm_fgls": ("sbm_fgls", "none"),
}


class EstimatorError(ValueError):
    pass


class DegreesUnavailable(EstimatorError):
    """Raised when an estimator needs degree information the sample lacks."""


@dataclass
class EstimateRecord:
    kind: str
    value: float
    n: int
    t: int
    seed_used: int
    replicate: int = -1
    seed_class: str | None = None
    detail: dict | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise EstimatorError(f"unknown estimator kind {self.kind!r}")
        if not np.isfinite(self.value):
            raise EstimatorError(f"{self.kind} produced a non-finite value")


@dataclass(frozen=True)
class GlsWeights:
    """Per-vertex weights in breadth-first order; they sum to one."""

    weights: np.ndarray
    source: str  # "closed_form" or "general_solve"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise EstimatorError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _record(kind, sample, value, detail=None):
    return EstimateRecord(
        kind=kind,
        value=float(value),
        n=sample.n,
        t=sample.max_generation,
        seed_used=sample.seed_used,
        detail=detail,
    )


def sample_mean(sample):
    """Plain average of the sampled trait values."""
    return _record("mean", sample, sample.traits.mean())


def _mean_degree_from(graph, mean_degree):
    if mean_degree is not None:
        return float(mean_degree)
    if graph is not None:
        return graph.volume / graph.node_count
    raise EstimatorError("ipw needs a population graph or its mean degree")


def ipw(sample, graph=None, *, mean_degree=None):
    """Inverse-probability-weighted average: the sample mean of
    y(X) * (vol/N) / deg(X). Needs per-vertex degrees and the population
    mean degree; without degrees, use vh instead."""
    if sample.degrees is None:
        raise DegreesUnavailable(
            "sample carries no degrees; the vh estimator works without "
            "population degree information"
        )
    vol_over_n = _mean_degree_from(graph, mean_degree)
    adjusted = sample.traits * vol_over_n / sample.degrees
    return _record("ipw", sample, adjusted.mean())


def vh(sample):
    """Degree-ratio average (sum y/deg) / (sum 1/deg); needs only the
    degrees recorded in the sample."""
    if sample.degrees is None:
        raise DegreesUnavailable("sample carries no degrees")
    inv = 1.0 / sample.degrees
    return _record("vh", sample, float((sample.traits * inv).sum() / inv.sum()))


def gls_weights_closed_form(tree, lambda2):
    """Closed-form minimum-variance weights on a tree.

    w(v) is proportional to 1 - lambda2*(deg_T(v) - 1) with deg_T the degree
    of v inside the tree; the normalizer is n*(1 - lambda2*(1 - 2/n)) because
    tree degrees sum to 2(n-1). Exactly solves Sigma x = 1 for the
    lambda2^distance covariance kernel, on any tree shape.
    """
    n = tree.size
    denom = n * (1.0 - lambda2 * (1.0 - 2.0 / n))
    if abs(denom) < 1e-12:
        raise EstimatorError(
            f"degenerate weight normalizer at lambda2={lambda2!r}, n={n}"
        )
    raw = 1.0 - lambda2 * (tree.tree_degrees - 1.0)
    return GlsWeights(weights=raw / denom, source="closed_form")


def gls_closed_form_2block(sample, lambda2):
    """Minimum-variance weighted average via the closed-form weights."""
    w = gls_weights_closed_form(sample.tree, lambda2)
    return _record("gls", sample, float(w.weights @ sample.traits))


def build_sigma_blockmodel(tree, dec, y):
    """Stationary-start covariance of the trait along the tree:
    Sigma[u, v] = sum_{j>=2} lambda_j^{d(u,v)} <y, f_j>_pi^2 with d the tree
    distance. For two states this is lambda2^d times the stationary trait
    variance."""
    coeff = expand_in_eigenbasis(y, dec)
    dist = pairwise_distances(tree)
    sigma = np.zeros(dist.shape)
    for j in range(1, dec.state_count):
        cj2 = coeff[j] ** 2
        if cj2 == 0.0:
            continue
        sigma += cj2 * np.power(dec.eigenvalues[j], dist)
    return sigma


def gls_general(sample, sigma):
    """Solve Sigma x = 1, normalize to weights, and average the trait.

    Sigma must be symmetric positive definite and indexed by the sample's
    breadth-first vertex order.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sample.n
    if sigma.shape != (n, n):
        raise EstimatorError(f"covariance must be {n}x{n} for this sample")
    if np.max(np.abs(sigma - sigma.T)) > 1e-9:
        raise EstimatorError("covariance must be symmetric")
    try:
        cho = scipy.linalg.cho_factor(sigma)
    except scipy.linalg.LinAlgError as exc:
        raise EstimatorError(f"covariance is not positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve(cho, np.ones(n))
    total = x.sum()
    if total <= 0:
        raise EstimatorError("weight normalizer is not positive")
    weights = GlsWeights(weights=x / total, source="general_solve")
    record = _record("gls", sample, float(weights.weights @ sample.traits))
    return weights, record


def _resolve_weights(sample, lambda2=None, sigma=None):
    if (lambda2 is None) == (sigma is None):
        raise EstimatorError("provide exactly one of lambda2 or sigma")
    if lambda2 is not None:
        return gls_weights_closed_form(sample.tree, lambda2)
    sigma = np.asarray(sigma, dtype=float)
    cho = scipy.linalg.cho_factor(sigma)
    x = scipy.linalg.cho_solve(cho, np.ones(sample.n))
    return GlsWeights(weights=x / x.sum(), source="general_solve")


def gls_ipw(sample, lambda2=None, sigma=None, graph=None, *, mean_degree=None):
    """GLS applied to the degree-adjusted trait y(X) * (vol/N) / deg(X)."""
    if sample.degrees is None:
        raise DegreesUnavailable("sample carries no degrees")
    vol_over_n = _mean_degree_from(graph, mean_degree)
    w = _resolve_weights(sample, lambda2, sigma)
    adjusted = sample.traits * vol_over_n / sample.degrees
    return _record("gls_ipw", sample, float(w.weights @ adjusted))


def gls_vh(sample, lambda2=None, sigma=None):
    """Ratio of GLS estimates of y/deg and 1/deg, sharing one weight vector."""
    if sample.degrees is None:
        raise DegreesUnavailable("sample carries no degrees")
    w = _resolve_weights(sample, lambda2, sigma)
    inv = 1.0 / sample.degrees
    denom = float(w.weights @ inv)
    if denom == 0:
        raise EstimatorError("degree-reciprocal series averaged to zero")
    return _record("gls_vh", sample, float(w.weights @ (sample.traits * inv)) / denom)


def sbm_fgls(sample):
    """Plug-in feasible GLS for a binary trait.

    Estimates the 2x2 trait-class transition matrix from parent-to-child
    transition counts with add-one smoothing, turns it into a correlation
    decay rate (sum of the diagonal estimates minus one), and applies the
    closed-form weights. A best-effort approximation, labeled as such in
    the record detail.
    """
    tree = sample.tree
    if tree.size < 3:
        raise EstimatorError("need at least 2 parent-child pairs")
    classes = np.unique(sample.traits)
    if classes.shape[0] > 2:
        raise EstimatorError("sbm_fgls needs a binary trait")
    hi = classes[-1]
    child_hi = sample.traits[1:] == hi
    parent_hi = sample.traits[tree.parent[1:]] == hi
    n_hi = int(parent_hi.sum())
    n_lo = int((~parent_hi).sum())
    stay_hi = int((parent_hi & child_hi).sum())
    stay_lo = int(((~parent_hi) & (~child_hi)).sum())
    p_hat = (stay_hi + 1.0) / (n_hi + 2.0)
    q_hat = (stay_lo + 1.0) / (n_lo + 2.0)
    lambda2_hat = p_hat + q_hat - 1.0
    w = gls_weights_closed_form(tree, lambda2_hat)
    detail = {
        "lambda2_hat": lambda2_hat,
        "p_hat": p_hat,
        "q_hat": q_hat,
        "note": "plug-in approximation; transition fitted from this sample",
    }
    return _record("sbm_fgls", sample, float(w.weights @ sample.traits), detail=detail)


def records_to_csv(records):
    """Audit export with the realized seed state per record."""
    lines = ["replicate,estimator,adjustment,t,n,seed_state,value"]
    for r in records:
        base, adj = KIND_TO_COLUMNS[r.kind]
        lines.append(
            f"{r.replicate},{base},{adj},{r.t},{r.n},{r.seed_used},{r.value!r}"
        )
    return "\n".join(lines) + "\n"
