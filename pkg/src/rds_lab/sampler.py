"""Realizing referral samples: tree-indexed walks and the without-replacement
field protocol.

The with-replacement walk is the theoretical model: each child vertex draws
its state from the transition row of its parent's state, independently given
the parent. The without-replacement sampler follows the empirical-network
protocol: degree-proportional seeding, per-participant recruit counts from an
offspring law, uniform choice among not-yet-recruited contacts, breadth-first
order, truncation at an exact target size, and full restarts (fresh seed) if
recruitment dies early.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphError
from .tree import ReferralTree, TreeError


class SamplerError(ValueError):
    pass


class RestartExhausted(RuntimeError):
    """Recruitment died out on every allowed attempt."""

    def __init__(self, attempts, collected, target):
        super().__init__(
            f"recruitment died out on all {attempts} attempts "
            f"(last attempt reached {collected} of {target})"
        )
        self.attempts = attempts
        self.collected = collected
        self.target = target


@dataclass(frozen=True)
class SeedSpec:
    """How the root participant is chosen.

    kind is one of "fixed_node", "distribution", "stationary",
    "degree_proportional"; the payload fields apply per kind.
    """

    kind: str
    node: int | None = None
    probabilities: np.ndarray | None = None

    _KINDS = ("fixed_node", "distribution", "stationary", "degree_proportional")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise SamplerError(f"unknown seed kind {self.kind!r}")

    @classmethod
    def fixed_node(cls, node):
        return cls(kind="fixed_node", node=int(node))

    @classmethod
    def distribution(cls, nu):
        nu = np.array(nu, dtype=float)
        if np.any(nu < 0):
            raise SamplerError("seed distribution must be nonnegative")
        if abs(nu.sum() - 1.0) > 1e-12:
            raise SamplerError(f"seed distribution sums to {nu.sum()!r}, not 1")
        nu.setflags(write=False)
        return cls(kind="distribution", probabilities=nu)

    @classmethod
    def stationary(cls):
        return cls(kind="stationary")

    @classmethod
    def degree_proportional(cls):
        return cls(kind="degree_proportional")


@dataclass(frozen=True)
class RdsSample:
    """A realized referral sample: states (node or block ids) indexed by the
    vertices of a referral tree, with the trait values and, when known, the
    degree of each sampled state."""

    tree: ReferralTree
    states: np.ndarray
    traits: np.ndarray
    seed_used: int
    with_replacement: bool
    degrees: np.ndarray | None = None

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int64)
        traits = np.array(self.traits, dtype=float)
        n = self.tree.size
        if states.shape != (n,) or traits.shape != (n,):
            raise SamplerError("states and traits must cover every tree vertex")
        states.setflags(write=False)
        traits.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "traits", traits)
        if self.degrees is not None:
            deg = np.array(self.degrees, dtype=float)
            if deg.shape != (n,):
                raise SamplerError("degrees must cover every tree vertex")
            if np.any(deg <= 0):
                raise SamplerError("sampled degrees must be positive")
            deg.setflags(write=False)
            object.__setattr__(self, "degrees", deg)

    @property
    def n(self):
        return self.tree.size

    @property
    def max_generation(self):
        return self.tree.depth

    def to_csv(self):
        lines = ["vertex,parent,generation,state_id,trait_value"]
        for v in range(self.n):
            lines.append(
                f"{v},{self.tree.parent[v]},{self.tree.generation[v]},"
                f"{self.states[v]},{float(self.traits[v])!r}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, with_replacement=True, degrees_by_state=None):
        rows = [r for r in text.strip().splitlines() if r]
        if not rows or rows[0] != "vertex,parent,generation,state_id,trait_value":
            raise SamplerError(
                "expected header 'vertex,parent,generation,state_id,trait_value'"
            )
        parent, generation, states, traits = [], [], [], []
        for row in rows[1:]:
            v, p, g, s, y = row.split(",")
            if int(v) != len(parent):
                raise SamplerError("vertex ids must be consecutive from 0")
            parent.append(int(p))
            generation.append(int(g))
            states.append(int(s))
            traits.append(float(y))
        tree = ReferralTree(np.array(parent), np.array(generation))
        states = np.array(states, dtype=np.int64)
        degrees = None
        if degrees_by_state is not None:
            degrees = np.asarray(degrees_by_state, dtype=float)[states]
        return cls(
            tree=tree,
            states=states,
            traits=np.array(traits),
            seed_used=int(states[0]),
            with_replacement=with_replacement,
            degrees=degrees,
        )


def draw_seed(spec, rng, *, state_count, stationary=None, degrees=None):
    """Realize a seed state id according to the spec."""
    if spec.kind == "fixed_node":
        if not 0 <= spec.node < state_count:
            raise SamplerError(
                f"seed node {spec.node} outside 0..{state_count - 1}"
            )
        return int(spec.node)
    if spec.kind == "distribution":
        if spec.probabilities.shape[0] != state_count:
            raise SamplerError("seed distribution length mismatch")
        return int(rng.choice(state_count, p=spec.probabilities))
    if spec.kind == "stationary":
        if stationary is None:
            raise SamplerError("stationary seeding needs the stationary law")
        return int(rng.choice(state_count, p=stationary))
    if spec.kind == "degree_proportional":
        if degrees is None:
            raise SamplerError("degree-proportional seeding needs degrees")
        p = np.asarray(degrees, dtype=float)
        return int(rng.choice(state_count, p=p / p.sum()))
    raise SamplerError(f"unknown seed kind {spec.kind!r}")


def walk(tm, tree, seed, y, rng, state_degrees=None):
    """Tree-indexed Markov walk: the seed fills the root, then each child
    vertex draws its state from its parent's transition row.

    Parameters
    ----------
    tm : TransitionMatrix
    tree : ReferralTree
    seed : SeedSpec
    y : (state_count,) trait vector
    rng : numpy Generator
    state_degrees : optional per-state degrees, recorded per vertex for the
        degree-based estimators.
    """
    y = np.asarray(y, dtype=float)
    k = tm.state_count
    if y.shape != (k,):
        raise SamplerError("trait length must match the state count")
    cum = np.cumsum(tm.matrix, axis=1)
    states = np.zeros(tree.size, dtype=np.int64)
    states[0] = draw_seed(seed, rng, state_count=k, stationary=tm.stationary)
    for t in range(1, tree.depth + 1):
        start, stop = tree.generation_slice(t)
        if start == stop:
            break
        rows = cum[states[tree.parent[start:stop]]]
        u = rng.random(stop - start)
        states[start:stop] = (u[:, None] >= rows[:, :-1]).sum(axis=1)
    degrees = None
    if state_degrees is not None:
        degrees = np.asarray(state_degrees, dtype=float)[states]
    return RdsSample(
        tree=tree,
        states=states,
        traits=y[states],
        seed_used=int(states[0]),
        with_replacement=True,
        degrees=degrees,
    )


def walk_without_replacement(graph, law, seed, target_n, max_restarts, rng, y):
    """Field protocol on a population graph.

    Each participant, in breadth-first arrival order, draws a recruit count
    from the law and recruits that many distinct not-yet-recruited contacts
    uniformly at random (all of them when short). The process stops at
    exactly target_n participants; if it dies out first, it restarts from a
    fresh seed, up to max_restarts restarts.
    """
    y = np.asarray(y, dtype=float)
    n_nodes = graph.node_count
    if y.shape != (n_nodes,):
        raise SamplerError("trait length must match the node count")
    if not 1 <= target_n <= n_nodes:
        raise SamplerError(f"target size {target_n} outside 1..{n_nodes}")
    deg = graph.degrees
    if np.any(deg <= 0):
        raise GraphError("graphs with isolated nodes cannot be sampled")
    nbrs = graph.neighbor_lists()

    attempts = 0
    collected = 0
    while attempts <= max_restarts:
        attempts += 1
        recruited = np.zeros(n_nodes, dtype=bool)
        root = draw_seed(
            seed, rng, state_count=n_nodes, stationary=deg / deg.sum(), degrees=deg
        )
        order = [root]
        parent = [-1]
        generation = [0]
        recruited[root] = True
        head = 0
        while len(order) < target_n and head < len(order):
            node = order[head]
            xi = law.sample(rng)
            elig = nbrs[node]
            elig = elig[~recruited[elig]]
            take = min(int(xi), elig.shape[0], target_n - len(order))
            if take > 0:
                picked = rng.choice(elig.shape[0], size=take, replace=False)
                for idx in picked:
                    child = int(elig[idx])
                    recruited[child] = True
                    order.append(child)
                    parent.append(head)
                    generation.append(generation[head] + 1)
            head += 1
        if len(order) == target_n:
            tree = ReferralTree(
                np.array(parent, dtype=np.int64), np.array(generation, dtype=np.int64)
            )
            states = np.array(order, dtype=np.int64)
            return RdsSample(
                tree=tree,
                states=states,
                traits=y[states],
                seed_used=int(states[0]),
                with_replacement=False,
                degrees=deg[states],
            )
        collected = len(order)
    raise RestartExhausted(attempts=attempts, collected=collected, target=target_n)
