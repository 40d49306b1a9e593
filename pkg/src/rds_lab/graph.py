"""Weighted undirected population graphs and their random-walk structure.

A graph stores symmetric nonnegative edge weights over contiguous integer
node ids (external string labels are kept alongside). Degrees are row sums
of the weight matrix, the volume is the sum of degrees, and the associated
walk moves from i to j with probability w_ij / deg(i). Its stationary
distribution is degree proportional.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_TOL = 1e-12


class GraphError(ValueError):
    """Invalid graph input or construction."""


class EdgeListParseError(GraphError):
    """Malformed edge-list text; carries the 1-based line number."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class EdgeListFormat:
    """Whitespace-separated "u v [w]" lines, UTF-8, '#' comments."""

    comment_prefix: str = "#"
    default_weight: float = 1.0


class WeightedGraph:
    """Undirected weighted graph on nodes 0..N-1.

    Parameters
    ----------
    weights : (N, N) array_like
        Symmetric nonnegative weight matrix. w_ij = 0 means no edge;
        diagonal entries are self-weights and count once toward degree.
    labels : sequence of str, optional
        External node names. Defaults to the decimal node ids.
    """

    def __init__(self, weights, labels=None):
        W = np.array(weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError("weight matrix must be square")
        if W.shape[0] == 0:
            raise GraphError("graph must have at least one node")
        if not np.all(np.isfinite(W)):
            raise GraphError("weights must be finite")
        if np.any(W < 0):
            raise GraphError("weights must be nonnegative")
        if not np.array_equal(W, W.T):
            raise GraphError("weight matrix must be symmetric")
        if labels is None:
            labels = [str(i) for i in range(W.shape[0])]
        labels = [str(x) for x in labels]
        if len(labels) != W.shape[0]:
            raise GraphError("one label per node required")
        if len(set(labels)) != len(labels):
            raise GraphError("node labels must be unique")
        for lab in labels:
            if lab == "" or any(ch.isspace() for ch in lab):
                raise GraphError(f"label {lab!r} is empty or contains whitespace")
        W.setflags(write=False)
        self.weights = W
        self.labels = tuple(labels)
        self._neighbor_lists = None

    @classmethod
    def from_edges(cls, node_count, edges, labels=None):
        """Build from (i, j, w) triples; duplicate pairs collapse by max."""
        W = np.zeros((node_count, node_count))
        for i, j, w in edges:
            if w < 0:
                raise GraphError(f"negative weight on edge ({i}, {j})")
            W[i, j] = max(W[i, j], w)
            W[j, i] = W[i, j]
        return cls(W, labels=labels)

    @property
    def node_count(self):
        return self.weights.shape[0]

    @property
    def degrees(self):
        return self.weights.sum(axis=1)

    @property
    def volume(self):
        return float(self.degrees.sum())

    def edges(self):
        """Yield (i, j, w) with i <= j for every positive weight."""
        W = self.weights
        for i in range(W.shape[0]):
            for j in range(i, W.shape[0]):
                if W[i, j] > 0:
                    yield i, j, W[i, j]

    def neighbor_lists(self):
        """Per-node arrays of neighbor ids (self excluded); cached."""
        if self._neighbor_lists is None:
            W = self.weights
            lists = []
            for i in range(W.shape[0]):
                nbrs = np.flatnonzero(W[i] > 0)
                lists.append(nbrs[nbrs != i])
            self._neighbor_lists = tuple(lists)
        return self._neighbor_lists

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self):
        edge_count = int(np.count_nonzero(np.triu(self.weights)))
        return f"WeightedGraph(nodes={self.node_count}, edges={edge_count})"


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic walk matrix with its stationary distribution.

    Construction validates, at tolerance 1e-12: row sums, positivity and
    normalization of the stationary vector, stationarity, and detailed
    balance (reversibility).
    """

    matrix: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        P = np.array(self.matrix, dtype=float)
        pi = np.array(self.stationary, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != pi.shape[0]:
            raise GraphError("transition matrix and stationary sizes disagree")
        if np.any(P < -STOCHASTIC_TOL):
            raise GraphError("transition probabilities must be nonnegative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise GraphError("rows must sum to 1")
        if np.any(pi <= 0):
            raise GraphError("stationary distribution must be positive")
        if abs(pi.sum() - 1.0) > STOCHASTIC_TOL:
            raise GraphError("stationary distribution must sum to 1")
        if np.max(np.abs(pi @ P - pi)) > STOCHASTIC_TOL:
            raise GraphError("provided distribution is not stationary")
        flow = pi[:, None] * P
        if np.max(np.abs(flow - flow.T)) > STOCHASTIC_TOL:
            raise GraphError("detailed balance fails: chain is not reversible")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "stationary", pi)

    @property
    def state_count(self):
        return self.matrix.shape[0]


def build_transition(graph):
    """Walk matrix P_ij = w_ij / deg(i) with degree-proportional stationary law.

    Raises GraphError naming any zero-degree node.
    """
    deg = graph.degrees
    dead = np.flatnonzero(deg <= 0)
    if dead.size:
        lab = graph.labels[dead[0]]
        raise GraphError(
            f"node {lab!r} (id {int(dead[0])}) has zero degree; "
            "isolated nodes cannot be sampled"
        )
    P = graph.weights / deg[:, None]
    pi = deg / deg.sum()
    return TransitionMatrix(P, pi)


def read_edge_list(source, fmt=EdgeListFormat()):
    """Parse edge-list text into a WeightedGraph.

    Lines are "u v" or "u v w"; labels are arbitrary whitespace-free strings
    mapped to contiguous ids in sorted label order. Both directions of a pair
    (and duplicates) collapse by max weight; missing weights take the format
    default.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    else:
        raise GraphError(f"unreadable edge-list source: {type(source).__name__}")

    entries = []
    labels = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(fmt.comment_prefix):
            continue
        parts = stripped.split()
        if len(parts) not in (2, 3):
            raise EdgeListParseError(lineno, f"expected 'u v' or 'u v w', got {stripped!r}")
        u, v = parts[0], parts[1]
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise EdgeListParseError(lineno, f"bad weight {parts[2]!r}") from None
            if not np.isfinite(w):
                raise EdgeListParseError(lineno, f"bad weight {parts[2]!r}")
            if w < 0:
                raise EdgeListParseError(lineno, f"negative weight {w}")
        else:
            w = fmt.default_weight
        labels.add(u)
        labels.add(v)
        entries.append((u, v, w))

    if not labels:
        raise GraphError("empty edge list")
    ordered = sorted(labels)
    index = {lab: i for i, lab in enumerate(ordered)}
    W = np.zeros((len(ordered), len(ordered)))
    for u, v, w in entries:
        i, j = index[u], index[v]
        W[i, j] = max(W[i, j], w)
        W[j, i] = W[i, j]
    return WeightedGraph(W, labels=ordered)


def write_edge_list(graph):
    """Serialize to sorted "u v w" lines; read_edge_list round-trips exactly."""
    lines = []
    for i, j, w in graph.edges():
        lines.append(f"{graph.labels[i]} {graph.labels[j]} {float(w)!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def connected_components(graph):
    """List of sorted node-id arrays, one per component (positive weights)."""
    W = graph.weights
    n = W.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            u = stack.pop()
            members.append(u)
            nbrs = np.flatnonzero(W[u] > 0)
            for v in nbrs:
                if v != u and not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(np.array(sorted(members)))
    return comps


def largest_connected_component(graph):
    """Induced subgraph on the largest component plus the old->new id map.

    Ties in size break toward the component whose smallest original id is
    smallest. Surviving nodes are relabeled contiguously in ascending
    original-id order, so a connected graph maps to itself.
    """
    comps = connected_components(graph)
    if not comps:
        raise GraphError("empty graph")
    best = min(comps, key=lambda c: (-c.size, int(c[0])))
    sub = WeightedGraph(
        graph.weights[np.ix_(best, best)],
        labels=[graph.labels[i] for i in best],
    )
    old_to_new = {int(old): new for new, old in enumerate(best)}
    return sub, old_to_new
