"""Directed weighted graphs, edge-set splitting, weight masking, line graphs.

The Graph is the single source of truth for topology. All types here are
immutable after construction and safe to share across threads; splits are
deterministic functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

Edge = tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Directed graph with nonnegative edge weights and per-node features.

    Self-loops are rejected at construction: road networks have no
    zero-length segments, and the line-graph transform assumes their absence.
    """

    num_nodes: int
    edges: tuple[Edge, ...]
    weights: np.ndarray
    node_features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(s), int(t)) for s, t in self.edges))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "node_features", np.asarray(self.node_features, dtype=np.float64))
        if self.num_nodes <= 0:
            raise ValueError("graph needs at least one node")
        if len(self.weights) != len(self.edges):
            raise ValueError("weights length must equal edge count")
        if self.node_features.ndim != 2 or self.node_features.shape[0] != self.num_nodes:
            raise ValueError("node_features must be (num_nodes, f)")
        if np.any(self.weights < 0):
            raise ValueError("edge weights must be nonnegative")
        seen = set()
        for s, t in self.edges:
            if not (0 <= s < self.num_nodes and 0 <= t < self.num_nodes):
                raise ValueError(f"edge ({s},{t}) endpoint out of range")
            if s == t:
                raise ValueError(f"self-loop ({s},{s}) not allowed")
            if (s, t) in seen:
                raise ValueError(f"duplicate edge ({s},{t})")
            seen.add((s, t))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.node_features.shape[1]

    def edge_array(self) -> np.ndarray:
        """Edges as an (E, 2) int array."""
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class EdgeSplit:
    """Disjoint train/val/calib/test index sets partitioning a graph's edges."""

    train: tuple[int, ...]
    val: tuple[int, ...]
    calib: tuple[int, ...]
    test: tuple[int, ...]
    fractions: tuple[float, float, float]
    seed: int

    def __post_init__(self):
        for name in ("train", "val", "calib", "test"):
            object.__setattr__(self, name, tuple(sorted(int(i) for i in getattr(self, name))))
        parts = [set(self.train), set(self.val), set(self.calib), set(self.test)]
        total = sum(len(p) for p in parts)
        union = set().union(*parts)
        if len(union) != total:
            raise ValueError("split sets overlap")
        if union != set(range(total)):
            raise ValueError("split sets do not partition the edge indices")

    @property
    def num_edges(self) -> int:
        return len(self.train) + len(self.val) + len(self.calib) + len(self.test)

    @property
    def calib_test(self) -> tuple[int, ...]:
        return tuple(sorted(self.calib + self.test))


def build_adjacency(graph: Graph, subset) -> np.ndarray:
    """Binary n x n matrix with a 1 at (i, j) for every edge index in `subset`."""
    a = np.zeros((graph.num_nodes, graph.num_nodes), dtype=np.float64)
    for idx in subset:
        s, t = graph.edges[idx]
        a[s, t] = 1.0
    return a


def split_edges(graph: Graph, fractions: tuple[float, float, float],
                calib_ratio: float, seed: int, base: EdgeSplit | None = None) -> EdgeSplit:
    """Uniform-random partition of edge indices into train/val/calib/test.

    `fractions` allocates train/val and the combined calib+test pool; the pool
    is then divided by `calib_ratio`. Passing `base` keeps its train and val
    sets fixed and re-splits only the pool, which is how repeated
    calibration/test resplits are generated without touching training data.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if not 0.0 < calib_ratio < 1.0:
        raise ValueError("calib_ratio must be in (0, 1)")
    n_edges = graph.num_edges
    if n_edges < 4:
        raise ValueError("need at least 4 edges to split")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if base is None:
        perm = rng.permutation(n_edges)
        n_train = int(round(fractions[0] * n_edges))
        n_val = int(round(fractions[1] * n_edges))
        train = perm[:n_train]
        val = perm[n_train:n_train + n_val]
        pool = perm[n_train + n_val:]
    else:
        if base.num_edges != n_edges:
            raise ValueError("base split does not match this graph")
        train = np.array(base.train, dtype=np.int64)
        val = np.array(base.val, dtype=np.int64)
        pool = rng.permutation(np.array(base.calib_test, dtype=np.int64))
        fractions = base.fractions

    n_calib = int(round(calib_ratio * len(pool)))
    calib = pool[:n_calib]
    test = pool[n_calib:]
    if len(calib) == 0 or len(test) == 0:
        raise ValueError("calibration and test sets must both be non-empty")
    return EdgeSplit(train=tuple(train), val=tuple(val), calib=tuple(calib),
                     test=tuple(test), fractions=tuple(fractions), seed=seed)


def resplit_calib_test(graph: Graph, split: EdgeSplit, calib_ratio: float, seed: int) -> EdgeSplit:
    """New calib/test division of an existing split's pool; train/val unchanged."""
    return split_edges(graph, split.fractions, calib_ratio, seed, base=split)


class FillMode(Enum):
    ZERO = "zero"
    MEAN = "mean"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class MaskedWeightedAdjacency:
    """Weighted adjacency exposing true weights on train edges only.

    Every non-train edge carries a placeholder weight: 0 in ZERO mode, the
    train-edge mean in MEAN mode, or an i.i.d. draw from the train weights in
    BOOTSTRAP mode. Non-edges are always 0.
    """

    matrix: np.ndarray
    fill_mode: FillMode
    delta_values: np.ndarray = field(repr=False)


def fill_weights(graph: Graph, split: EdgeSplit, fill_mode: FillMode,
                 seed: int = 0) -> MaskedWeightedAdjacency:
    """Masked weighted adjacency: train weights kept, other edges filled."""
    if split.num_edges != graph.num_edges:
        raise ValueError("split does not match graph")
    train_w = graph.weights[list(split.train)]
    if fill_mode is not FillMode.ZERO and len(train_w) == 0:
        raise ValueError(f"{fill_mode.value} fill requires a non-empty train set")

    n = graph.num_nodes
    matrix = np.zeros((n, n), dtype=np.float64)
    for idx in split.train:
        s, t = graph.edges[idx]
        matrix[s, t] = graph.weights[idx]

    others = sorted(set(range(graph.num_edges)) - set(split.train))
    if fill_mode is FillMode.ZERO:
        deltas = np.zeros(len(others))
    elif fill_mode is FillMode.MEAN:
        deltas = np.full(len(others), train_w.mean())
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x66696c6c]))
        deltas = rng.choice(train_w, size=len(others), replace=True)
    for idx, d in zip(others, deltas):
        s, t = graph.edges[idx]
        matrix[s, t] = d
    return MaskedWeightedAdjacency(matrix=matrix, fill_mode=fill_mode, delta_values=deltas)


def line_graph(graph: Graph) -> tuple[Graph, tuple[Edge, ...]]:
    """Directed line graph: one node per edge, arcs for head-to-tail pairs.

    An arc runs from edge (i, j) to edge (j, k) whenever the first edge's
    target is the second's source; (i, j) -> (j, i) pairs are kept, since they
    satisfy that rule. Node features concatenate the source then target
    features of the original endpoints. Returns the line graph and the origin
    map giving each line-graph node's original edge; the original edge weights
    are the natural node labels under that map.
    """
    if graph.num_edges == 0:
        raise ValueError("line graph of an edgeless graph is undefined")
    edges = graph.edges
    by_source: dict[int, list[int]] = {}
    for idx, (s, _) in enumerate(edges):
        by_source.setdefault(s, []).append(idx)

    l_edges: list[Edge] = []
    for e1, (_, tgt) in enumerate(edges):
        for e2 in by_source.get(tgt, ()):
            l_edges.append((e1, e2))

    feats = np.hstack([
        graph.node_features[[s for s, _ in edges]],
        graph.node_features[[t for _, t in edges]],
    ])
    lg = Graph(
        num_nodes=len(edges),
        edges=tuple(l_edges),
        weights=np.zeros(len(l_edges)),
        node_features=feats,
    )
    return lg, edges


@dataclass(frozen=True)
class WeightScaler:
    """Z-scoring of edge weights by train-edge statistics.

    Models train and calibrate in standardized units; `inverse` maps
    predictions and interval endpoints back to raw volumes for display.
    """

    mean: float
    std: float

    @staticmethod
    def fit(train_weights: np.ndarray) -> "WeightScaler":
        w = np.asarray(train_weights, dtype=np.float64)
        if w.size == 0:
            raise ValueError("cannot fit a scaler on an empty train set")
        std = float(w.std())
        return WeightScaler(mean=float(w.mean()), std=std if std > 0 else 1.0)

    def transform(self, w) -> np.ndarray:
        return (np.asarray(w, dtype=np.float64) - self.mean) / self.std

    def inverse(self, w) -> np.ndarray:
        return np.asarray(w, dtype=np.float64) * self.std + self.mean
