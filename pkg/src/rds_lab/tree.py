"""Referral trees: deterministic m-trees and Galton-Watson trees.

Vertices are 0-based ids in breadth-first order (level by level from the
root), which is the ordering every prefix-indexed quantity downstream
assumes. A tree is stored as a parent array (root parent -1) plus the
generation of each vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PMF_TOL = 1e-12


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class ReferralTree:
    parent: np.ndarray
    generation: np.ndarray

    def __post_init__(self):
        p = np.array(self.parent, dtype=np.int64)
        g = np.array(self.generation, dtype=np.int64)
        n = p.shape[0]
        if n == 0:
            raise TreeError("tree must have at least the root")
        if g.shape != (n,):
            raise TreeError("parent and generation arrays must align")
        if p[0] != -1 or g[0] != 0:
            raise TreeError("vertex 0 must be the root")
        if n > 1:
            kids = p[1:]
            if np.any(kids < 0) or np.any(kids >= np.arange(1, n)):
                raise TreeError("parents must precede their children")
            if np.any(g[1:] != g[kids] + 1):
                raise TreeError("child generation must be parent generation + 1")
            if np.any(np.diff(g) < 0):
                raise TreeError("vertices must be in breadth-first order")
        p.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "parent", p)
        object.__setattr__(self, "generation", g)

    @property
    def size(self):
        return self.parent.shape[0]

    @property
    def depth(self):
        return int(self.generation[-1])

    @property
    def child_counts(self):
        if self.size == 1:
            return np.zeros(1, dtype=np.int64)
        return np.bincount(self.parent[1:], minlength=self.size)

    @property
    def tree_degrees(self):
        """Degree of each vertex within the tree itself."""
        deg = self.child_counts.copy()
        deg[1:] += 1
        return deg

    @property
    def generation_sizes(self):
        return np.bincount(self.generation, minlength=self.depth + 1)

    def generation_slice(self, t):
        """Contiguous id range (start, stop) of generation t."""
        starts = np.searchsorted(self.generation, t, side="left")
        stops = np.searchsorted(self.generation, t, side="right")
        return int(starts), int(stops)

    def prefix(self, n):
        """First n vertices in breadth-first order, itself a valid tree."""
        if not 1 <= n <= self.size:
            raise TreeError(f"prefix size {n} outside 1..{self.size}")
        return ReferralTree(self.parent[:n], self.generation[:n])

    def to_csv(self):
        lines = ["vertex,parent,generation"]
        for v in range(self.size):
            lines.append(f"{v},{self.parent[v]},{self.generation[v]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [r for r in text.strip().splitlines() if r]
        if not rows or rows[0] != "vertex,parent,generation":
            raise TreeError("expected header 'vertex,parent,generation'")
        parent, generation = [], []
        for row in rows[1:]:
            v, p, g = row.split(",")
            if int(v) != len(parent):
                raise TreeError("vertex ids must be consecutive from 0")
            parent.append(int(p))
            generation.append(int(g))
        return cls(np.array(parent), np.array(generation))


def m_tree(m, depth):
    """Complete m-ary tree truncated at the given depth, BFS ordered."""
    if m < 1:
        raise TreeError("m must be at least 1")
    if depth < 0:
        raise TreeError("depth must be nonnegative")
    sizes = m ** np.arange(depth + 1, dtype=object)
    n = int(sum(sizes))
    ids = np.arange(n, dtype=np.int64)
    parent = (ids - 1) // m
    parent[0] = -1
    generation = np.zeros(n, dtype=np.int64)
    start = 1
    for t in range(1, depth + 1):
        cnt = int(m**t)
        generation[start : start + cnt] = t
        start += cnt
    return ReferralTree(parent, generation)


@dataclass(frozen=True)
class OffspringLaw:
    """Distribution of per-participant recruit counts, as a pmf over 0..max."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.shape[0] == 0:
            raise TreeError("pmf must be a nonempty vector")
        if np.any(pmf < 0):
            raise TreeError("pmf entries must be nonnegative")
        if abs(pmf.sum() - 1.0) > PMF_TOL:
            raise TreeError(f"pmf sums to {pmf.sum()!r}, not 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def deterministic(cls, m):
        if m < 0:
            raise TreeError("offspring count must be nonnegative")
        pmf = np.zeros(int(m) + 1)
        pmf[int(m)] = 1.0
        return cls(pmf)

    @classmethod
    def one_plus_binomial(cls, n=2, prob=0.5):
        """1 + Binomial(n, prob): always at least one recruit."""
        if not 0 <= prob <= 1:
            raise TreeError("prob must lie in [0, 1]")
        from math import comb

        pmf = np.zeros(n + 2)
        for k in range(n + 1):
            pmf[k + 1] = comb(n, k) * prob**k * (1 - prob) ** (n - k)
        return cls(pmf)

    @classmethod
    def custom(cls, pmf):
        if isinstance(pmf, dict):
            if not pmf:
                raise TreeError("pmf must be a nonempty vector")
            arr = np.zeros(max(pmf) + 1)
            for c, p in pmf.items():
                arr[c] = p
            pmf = arr
        return cls(pmf)

    @property
    def mean(self):
        return float(np.arange(self.pmf.shape[0]) @ self.pmf)

    @property
    def max_count(self):
        return int(np.flatnonzero(self.pmf > 0)[-1])

    @property
    def is_deterministic(self):
        return int(np.count_nonzero(self.pmf > 0)) == 1

    def sample(self, rng, size=None):
        """Draw offspring counts; deterministic laws consume no randomness."""
        if self.is_deterministic:
            value = self.max_count
            return value if size is None else np.full(size, value, dtype=np.int64)
        counts = rng.choice(self.pmf.shape[0], size=size, p=self.pmf)
        return int(counts) if size is None else counts.astype(np.int64)


def galton_watson(law, depth, rng):
    """Tree where every vertex above the last level draws iid offspring
    counts from the law; the realized tree is fixed before any walk runs.
    Zero offspring is allowed, so the tree may die out early."""
    if depth < 0:
        raise TreeError("depth must be nonnegative")
    parent = [-1]
    generation = [0]
    level = [0]
    for t in range(depth):
        if not level:
            break
        counts = law.sample(rng, size=len(level))
        nxt = []
        for v, c in zip(level, counts):
            for _ in range(int(c)):
                nxt.append(len(parent))
                parent.append(v)
                generation.append(t + 1)
        level = nxt
    return ReferralTree(np.array(parent, dtype=np.int64), np.array(generation, dtype=np.int64))


def grow_to_size(law, target_size, rng, max_depth=10_000):
    """Grow a Galton-Watson tree level by level until it holds target_size
    vertices, then truncate to exactly that breadth-first prefix."""
    if target_size < 1:
        raise TreeError("target size must be positive")
    parent = [-1]
    generation = [0]
    level = [0]
    depth = 0
    while len(parent) < target_size:
        if not level:
            raise TreeError(
                f"offspring law died out at {len(parent)} vertices, "
                f"short of target {target_size}"
            )
        if depth >= max_depth:
            raise TreeError(f"target size not reached within depth {max_depth}")
        counts = law.sample(rng, size=len(level))
        nxt = []
        for v, c in zip(level, counts):
            for _ in range(int(c)):
                nxt.append(len(parent))
                parent.append(v)
                generation.append(depth + 1)
        level = nxt
        depth += 1
    tree = ReferralTree(np.array(parent, dtype=np.int64), np.array(generation, dtype=np.int64))
    return tree.prefix(target_size)


def pairwise_distances(tree):
    """Integer matrix of tree distances via per-generation ancestor tables."""
    n = tree.size
    depth = tree.depth
    anc = np.full((n, depth + 1), -1, dtype=np.int64)
    # pad rows above each vertex's generation with unique negatives so they
    # can never match another row's entries
    anc[:, :] = -(np.arange(n, dtype=np.int64)[:, None]) - 1
    gen = tree.generation
    for v in range(n):
        g = int(gen[v])
        anc[v, g] = v
        u = v
        while g > 0:
            u = int(tree.parent[u])
            g -= 1
            anc[v, g] = u
    matches = np.zeros((n, n), dtype=np.int64)
    for g in range(depth + 1):
        col = anc[:, g]
        matches += col[:, None] == col[None, :]
    lca_gen = matches - 1
    dist = gen[:, None] + gen[None, :] - 2 * lca_gen
    np.fill_diagonal(dist, 0)
    return dist
