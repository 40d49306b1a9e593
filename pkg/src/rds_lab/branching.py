"""Multitype branching-process diagnostics for tree-indexed walks.

Generation-level machinery: per-type counts Z_t, the mean matrix m*P, an
exact second-moment recursion (deterministic offspring), the rescaled
projection martingales Y_{t,j}, the vertex-indexed martingale M_n, the
limit-mean formula for the rescaled estimator error in the high-variance
regime, and an exact count-level simulator that reproduces generation
statistics without materializing vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Regime, classify_regime


class BranchingError(ValueError):
    pass


@dataclass(frozen=True)
class TypeCounts:
    """Per-generation type counts. counts[t, j] is the number of
    generation-t vertices in state j."""

    counts: np.ndarray
    seed_state: int

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 2:
            raise BranchingError("counts must be (generations, states)")
        if np.any(counts < 0):
            raise BranchingError("counts must be nonnegative")
        if not 0 <= self.seed_state < counts.shape[1]:
            raise BranchingError(f"seed state {self.seed_state} out of range")
        root = counts[0]
        if root.sum() != 1 or root[self.seed_state] != 1:
            raise BranchingError("generation 0 must hold exactly the seed")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def depth(self):
        return self.counts.shape[0] - 1

    @property
    def state_count(self):
        return self.counts.shape[1]

    @property
    def generation_sizes(self):
        return self.counts.sum(axis=1)

    def trait_totals(self, y):
        """W_t = sum of y over generation-t vertices."""
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.state_count:
            raise BranchingError("trait length must match state count")
        return self.counts @ y

    def running_means(self, y):
        """mu_hat_t = (sum of y over generations 0..t) / (vertices so far)."""
        s = np.cumsum(self.trait_totals(y))
        n = np.cumsum(self.generation_sizes)
        return s / n


def count_types(sample, state_count=None):
    """Tally a vertex-level sample into per-generation type counts."""
    states = sample.states
    if state_count is None:
        state_count = int(states.max()) + 1
    tree = sample.tree
    counts = np.zeros((tree.depth + 1, state_count), dtype=np.int64)
    np.add.at(counts, (tree.generation, states), 1)
    return TypeCounts(counts=counts, seed_state=sample.seed_used)


def mean_matrix(tm, m):
    """Expected-children matrix of the walk: entry (j, k) is the expected
    number of state-k children of a state-j parent."""
    if m <= 0:
        raise BranchingError("mean offspring number must be positive")
    return float(m) * tm.matrix


@dataclass(frozen=True)
class SecondMomentRecursion:
    """means[t] = E Z_t (row convention); second_moments[t] = E Z_t Z_t^T."""

    means: np.ndarray
    second_moments: np.ndarray

    @property
    def depth(self):
        return self.means.shape[0] - 1


def _per_type_child_covariances(P, m):
    # V_k = m * (diag(P_k) - P_k P_k^T): covariance of one state-k parent's
    # children-type counts under deterministic offspring m
    k = P.shape[0]
    v = np.empty((k, k, k))
    for j in range(k):
        row = P[j]
        v[j] = m * (np.diag(row) - np.outer(row, row))
    return v


def covariance_recursion(tm, m, seed_state, depth):
    """Exact means and second moments of Z_t for deterministic offspring m.

    E Z_t = Z_0 M^t and E Z_t Z_t^T = M^T E Z_{t-1} Z_{t-1}^T M
    + sum_k V_k E Z_{t-1,k}, seeded by the deterministic Z_0 = e_seed.
    """
    P = tm.matrix
    k = P.shape[0]
    if not 0 <= seed_state < k:
        raise BranchingError(f"seed state {seed_state} out of range")
    M = mean_matrix(tm, m)
    V = _per_type_child_covariances(P, float(m))
    means = np.zeros((depth + 1, k))
    sec = np.zeros((depth + 1, k, k))
    means[0, seed_state] = 1.0
    sec[0] = np.outer(means[0], means[0])
    for t in range(1, depth + 1):
        means[t] = means[t - 1] @ M
        sec[t] = M.T @ sec[t - 1] @ M + np.tensordot(means[t - 1], V, axes=1)
    return SecondMomentRecursion(means=means, second_moments=sec)


def projection_variance(recursion, f):
    """Var <Z_t, f> for each t, straight from the moment matrices."""
    f = np.asarray(f, dtype=float)
    first = recursion.means @ f
    second = np.einsum("i,tij,j->t", f, recursion.second_moments, f)
    return second - first**2


def projection_variance_series(tm, m, seed_state, f, lam, depth):
    """Var <Z_t, f> for an eigenvector f of the walk, by summing per-level
    reproduction noise scaled by (m*lam)^{2(t-l)}. Independent of the
    moment-matrix route; the two must agree."""
    P = tm.matrix
    f = np.asarray(f, dtype=float)
    # per-parent-state noise of <children, f>
    noise = float(m) * (P @ f**2 - (P @ f) ** 2)
    means = np.zeros((depth + 1, P.shape[0]))
    means[0, seed_state] = 1.0
    M = mean_matrix(tm, m)
    for t in range(1, depth + 1):
        means[t] = means[t - 1] @ M
    per_level = means @ noise  # per_level[l-1] feeds the generation-l children
    growth = float(m) * float(lam)
    var = np.zeros(depth + 1)
    for t in range(1, depth + 1):
        scales = growth ** (2.0 * (t - np.arange(1, t + 1)))
        var[t] = float(scales @ per_level[: t])
    return var


@dataclass(frozen=True)
class MartingaleTrace:
    """projections[t, j] = (m*lambda_j)^{-t} <Z_t, f_j>; vertex_walk[n] is
    the centered pair-increment sum over the first n non-root vertices in
    breadth-first order, starting at 0."""

    projections: np.ndarray
    vertex_walk: np.ndarray
    m: float
    lambda2: float


def martingale_traces(sample, dec, y, lambda2=None, m=None):
    """Rescaled eigen-projections of the generation counts and the
    vertex-indexed centered walk.

    The projection uses the plain dot product with the right eigenvectors.
    The vertex walk sums y(X_k) - lambda2*y(X_parent(k)) - (1-lambda2)*E_pi y
    over non-root vertices in breadth-first order; on a two-state chain its
    increments are conditionally mean-zero for any seed.
    """
    y = np.asarray(y, dtype=float)
    if lambda2 is None:
        lambda2 = dec.lambda2
    tree = sample.tree
    if m is None:
        root_children = int(tree.child_counts[0]) if tree.size > 1 else 0
        if root_children == 0:
            raise BranchingError("cannot infer offspring number from a bare root")
        m = root_children
    counts = count_types(sample, state_count=dec.state_count).counts
    raw = counts @ dec.vectors  # (t+1, k): <Z_t, f_j>
    growth = float(m) * dec.eigenvalues
    t_axis = np.arange(counts.shape[0])[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        projections = raw * np.power(growth[None, :], -t_axis.astype(float))
    e_pi_y = float(dec.pi @ y)
    child_y = y[sample.states[1:]]
    parent_y = y[sample.states[tree.parent[1:]]]
    increments = child_y - lambda2 * parent_y - (1.0 - lambda2) * e_pi_y
    vertex_walk = np.concatenate(([0.0], np.cumsum(increments)))
    return MartingaleTrace(
        projections=projections,
        vertex_walk=vertex_walk,
        m=float(m),
        lambda2=float(lambda2),
    )


def traces_to_csv(traces):
    """Trace export, one row per recorded quantity."""
    lines = ["replicate,t_or_n,quantity,value"]
    for rep, trace in enumerate(traces):
        depth_plus_1, k = trace.projections.shape
        for j in range(k):
            for t in range(depth_plus_1):
                value = trace.projections[t, j]
                lines.append(f"{rep},{t},Y{j + 1},{float(value)!r}")
        for n, value in enumerate(trace.vertex_walk):
            lines.append(f"{rep},{n},M,{float(value)!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MixtureComponentSummary:
    """Mean of the almost-sure limit of lambda2^{-t} times the centered
    estimator, for one seed state."""

    seed_state: int
    limit_mean: float
    lambda2: float
    regime: Regime


def _check_mixture_preconditions(dec, m):
    regime = classify_regime(m, dec.lambda2)
    if regime is not Regime.HIGH_VARIANCE:
        raise BranchingError(
            f"limit-mean formula needs the {Regime.HIGH_VARIANCE} regime, "
            f"got {regime} (m={m}, lambda2={dec.lambda2!r})"
        )
    if dec.repeated_second:
        raise BranchingError(
            "second eigenvalue is repeated; the limit splits across the "
            "eigenspace and a single-component mean is not defined"
        )
    return regime


def mixture_limit_mean(dec, y, m, seed_state):
    """Mean of the limit of lambda2^{-t} (mu_hat_t - E_pi y) started from
    seed_state: ((m-1) lambda2 / (m lambda2 - 1)) <y, f2>_pi f2(seed)."""
    regime = _check_mixture_preconditions(dec, m)
    y = np.asarray(y, dtype=float)
    lam = dec.lambda2
    f2 = dec.vectors[:, 1]
    coeff = (m - 1.0) * lam / (m * lam - 1.0)
    mean = coeff * dec.inner(y, f2) * f2[seed_state]
    return MixtureComponentSummary(
        seed_state=int(seed_state),
        limit_mean=float(mean),
        lambda2=float(lam),
        regime=regime,
    )


def vh_mixture_limit_mean(dec, y, degrees, m, seed_state):
    """Mean of the limit of lambda2^{-t} (mu_hat_VH,t - mu_true).

    The ratio estimator's numerator and denominator both fluctuate at the
    lambda2^t scale, so the limit is the plain-mean limit of the centered
    trait (y - mu_true)/deg, divided by E_pi(1/deg). Projecting y/deg
    alone drops the denominator fluctuation and is wrong whenever degrees
    vary across states.
    """
    regime = _check_mixture_preconditions(dec, m)
    y = np.asarray(y, dtype=float)
    degrees = np.asarray(degrees, dtype=float)
    if np.any(degrees <= 0):
        raise BranchingError("degrees must be positive")
    inv_deg = 1.0 / degrees
    e_pi_inv = float(dec.pi @ inv_deg)
    mu_true = float(dec.pi @ (y * inv_deg)) / e_pi_inv
    centered = (y - mu_true) * inv_deg
    lam = dec.lambda2
    f2 = dec.vectors[:, 1]
    coeff = (m - 1.0) * lam / (m * lam - 1.0)
    mean = coeff * dec.inner(centered, f2) * f2[seed_state] / e_pi_inv
    return MixtureComponentSummary(
        seed_state=int(seed_state),
        limit_mean=float(mean),
        lambda2=float(lam),
        regime=regime,
    )


@dataclass(frozen=True)
class CountSample:
    """Generation-level realization of the tree-indexed walk: type counts
    per generation plus the accumulated parent-state to child-state
    transition counts."""

    type_counts: TypeCounts
    transitions: np.ndarray

    @property
    def counts(self):
        return self.type_counts.counts


def simulate_type_counts(tm, law, seed_state, depth, rng):
    """Simulate generation type counts without materializing vertices.

    Children of same-state parents are exchangeable, so each generation
    only needs the total number of children per parent state (offspring
    occupancy draw) followed by one multinomial split across child states.
    Count statistics match the vertex-level walk in distribution exactly.
    Counts stay below 2^53 for the depths used here, so the integer
    arithmetic is exact.
    """
    P = tm.matrix
    k = P.shape[0]
    if not 0 <= seed_state < k:
        raise BranchingError(f"seed state {seed_state} out of range")
    counts = np.zeros((depth + 1, k), dtype=np.int64)
    counts[0, seed_state] = 1
    transitions = np.zeros((k, k), dtype=np.int64)
    offspring_values = np.arange(law.pmf.shape[0])
    for t in range(1, depth + 1):
        prev = counts[t - 1]
        for j in range(k):
            parents = int(prev[j])
            if parents == 0:
                continue
            if law.is_deterministic:
                total = parents * int(law.max_count)
            else:
                occupancy = rng.multinomial(parents, law.pmf)
                total = int(occupancy @ offspring_values)
            if total == 0:
                continue
            children = rng.multinomial(total, P[j])
            transitions[j] += children
            counts[t] += children
        if counts[t].sum() == 0:
            counts = counts[:t]
            break
    return CountSample(
        type_counts=TypeCounts(counts=counts, seed_state=int(seed_state)),
        transitions=transitions,
    )
