"""Blockmodels: k-block transition structure, traits, and node-level expansions.

Nodes in the same block share their trait and their weight row, so a walk on
an expanded node graph projects exactly to the k-state block chain. The
expansion assigns w_ij = W[b(i), b(j)] for every ordered pair (self-loops
included), with equal block sizes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .graph import STOCHASTIC_TOL, GraphError, TransitionMatrix, WeightedGraph


class BlockModelError(ValueError):
    pass


def stationary_distribution(P):
    """Stationary row vector of a small stochastic matrix via linear solve."""
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    A = P.T - np.eye(k)
    A[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise BlockModelError(f"stationary distribution solve failed: {exc}") from exc
    return pi


@dataclass(frozen=True)
class TwoBlockParams:
    """Diagonal entries (p, q) of the 2-block transition matrix."""

    p: float
    q: float

    def __post_init__(self):
        for name, v in (("p", self.p), ("q", self.q)):
            if not 0 < v < 1:
                raise BlockModelError(f"{name} must lie in (0, 1), got {v}")

    @property
    def lambda2(self):
        return self.p + self.q - 1.0

    @property
    def stationary(self):
        denom = 2.0 - self.p - self.q
        return np.array([(1.0 - self.q) / denom, (1.0 - self.p) / denom])

    @property
    def transition(self):
        return np.array([[self.p, 1.0 - self.p], [1.0 - self.q, self.q]])


class BlockModel:
    """k-block chain with one trait value per block and an optional
    node-level expansion.

    Parameters
    ----------
    transition : (k, k) array_like
        Row-stochastic, reversible block transition matrix.
    trait : (k,) array_like
        Trait value shared by every node of each block.
    nodes_per_block : int, optional
        Expansion size; blocks are equal sized.
    block_weights : (k, k) array_like, optional
        Symmetric inter-block weights W. When given, rows normalized by
        their sums must reproduce `transition`.
    """

    def __init__(self, transition, trait, nodes_per_block=None, block_weights=None):
        P = np.array(transition, dtype=float)
        y = np.array(trait, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise BlockModelError("block transition must be square")
        k = P.shape[0]
        if y.shape != (k,):
            raise BlockModelError("one trait value per block required")
        if np.any(P < 0):
            raise BlockModelError("block transition entries must be nonnegative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise BlockModelError("block transition rows must sum to 1")
        pi = stationary_distribution(P)
        if np.any(pi <= 0):
            raise BlockModelError("block chain must have a positive stationary law")
        flow = pi[:, None] * P
        if np.max(np.abs(flow - flow.T)) > STOCHASTIC_TOL:
            raise BlockModelError("block transition is not reversible")

        if (nodes_per_block is None) != (block_weights is None):
            raise BlockModelError(
                "expansion needs both nodes_per_block and block_weights"
            )
        if block_weights is not None:
            W = np.array(block_weights, dtype=float)
            if W.shape != (k, k):
                raise BlockModelError("block_weights must be k x k")
            if not np.array_equal(W, W.T):
                raise BlockModelError("block_weights must be symmetric")
            if np.any(W < 0):
                raise BlockModelError("block_weights must be nonnegative")
            rows = W.sum(axis=1)
            if np.any(rows <= 0):
                raise BlockModelError("every block needs positive total weight")
            if np.max(np.abs(W / rows[:, None] - P)) > 1e-12:
                raise BlockModelError(
                    "block_weights rows do not normalize to the transition matrix"
                )
            if int(nodes_per_block) < 1:
                raise BlockModelError("nodes_per_block must be positive")
            W.setflags(write=False)
            self.block_weights = W
            self.nodes_per_block = int(nodes_per_block)
        else:
            self.block_weights = None
            self.nodes_per_block = None

        P.setflags(write=False)
        y.setflags(write=False)
        pi.setflags(write=False)
        self.transition = P
        self.trait = y
        self.stationary = pi

    @classmethod
    def two_block(cls, p, q, trait=(1.0, 0.0), nodes_per_block=None, block_weights=None):
        params = TwoBlockParams(p, q)
        return cls(params.transition, trait, nodes_per_block, block_weights)

    @classmethod
    def from_weights(cls, block_weights, nodes_per_block, trait):
        """Derive the block transition by row-normalizing the weights."""
        W = np.asarray(block_weights, dtype=float)
        rows = W.sum(axis=1)
        if np.any(rows <= 0):
            raise BlockModelError("every block needs positive total weight")
        return cls(W / rows[:, None], trait, nodes_per_block, W)

    @property
    def k(self):
        return self.transition.shape[0]

    @property
    def has_expansion(self):
        return self.block_weights is not None

    @property
    def node_count(self):
        if not self.has_expansion:
            raise BlockModelError("model has no node-level expansion")
        return self.k * self.nodes_per_block

    @property
    def block_degrees(self):
        """Degree of any node in each block under the expansion."""
        if not self.has_expansion:
            raise BlockModelError("model has no node-level expansion")
        return self.nodes_per_block * self.block_weights.sum(axis=1)

    @property
    def mean_degree(self):
        return float(self.block_degrees.mean())


def block_process_from(model):
    """The k-state chain on block labels, validated like any walk matrix."""
    try:
        return TransitionMatrix(model.transition, model.stationary)
    except GraphError as exc:
        raise BlockModelError(f"invalid block chain: {exc}") from exc


def expand_to_graph(model):
    """Node-level graph (N = k * nodes_per_block) and the block assignment.

    Every ordered node pair (i, j), including i = j, gets weight
    W[b(i), b(j)], so all nodes of a block share one weight row.
    """
    if not model.has_expansion:
        raise BlockModelError("model has no node-level expansion")
    assignment = np.repeat(np.arange(model.k), model.nodes_per_block)
    W = model.block_weights[np.ix_(assignment, assignment)]
    return WeightedGraph(W), assignment


def project_node_walk(sample, assignment, block_trait=None):
    """Map a node-level sample to block labels on the same tree.

    Trait values are unchanged unless block_trait is supplied (nodes of a
    block share their trait, so both give the same values on consistent
    expansions).
    """
    from .sampler import RdsSample

    assignment = np.asarray(assignment)
    states = np.asarray(sample.states)
    if states.min() < 0 or states.max() >= assignment.shape[0]:
        raise BlockModelError(
            f"sampled node {int(states.max())} has no block label "
            f"(assignment covers {assignment.shape[0]} nodes)"
        )
    blocks = assignment[states]
    traits = sample.traits if block_trait is None else np.asarray(block_trait)[blocks]
    return RdsSample(
        tree=sample.tree,
        states=blocks,
        traits=traits,
        seed_used=int(blocks[0]),
        with_replacement=sample.with_replacement,
        degrees=sample.degrees,
    )


def block_seed_distribution(nu, assignment, k):
    """Seed law induced on blocks: mu_j = sum of nu over nodes with b(i)=j."""
    nu = np.asarray(nu, dtype=float)
    assignment = np.asarray(assignment)
    if nu.shape != assignment.shape:
        raise BlockModelError("seed distribution and assignment sizes disagree")
    return np.bincount(assignment, weights=nu, minlength=k)


def exact_walk_law(P, tree, seed_distribution, max_outcomes=1 << 20):
    """Exhaustively enumerate the joint law of a tree-indexed walk.

    Returns (outcomes, probabilities) where outcomes has one row per state
    assignment of the tree's vertices. Only feasible for tiny trees; guarded
    by max_outcomes.
    """
    P = np.asarray(P, dtype=float)
    nu = np.asarray(seed_distribution, dtype=float)
    k = P.shape[0]
    n = tree.size
    if k**n > max_outcomes:
        raise BlockModelError(f"enumeration of {k}^{n} outcomes is too large")
    outcomes = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64)
    probs = nu[outcomes[:, 0]].astype(float)
    for v in range(1, n):
        probs *= P[outcomes[:, tree.parent[v]], outcomes[:, v]]
    return outcomes, probs
