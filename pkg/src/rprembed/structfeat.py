"""Structural identity descriptors from Monte Carlo rooted PageRank.

A node's descriptor is built from ``m`` restarting random walks of length
``l`` rooted at the node: visit counts are sorted descending (ties by node
id), the top ``k`` are kept and normalized to sum to one.  ``exact_rpr`` is
the dense closed-form matrix used as a test oracle.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNodeError, ValidationError
from .graph import Graph
from .io import atomic_write_text

SENTINEL = -1
EXACT_RPR_MAX_NODES = 2000


@dataclass(frozen=True)
class RprConfig:
    """Rooted-walk settings: continuation probability, descriptor length, walk count and length."""

    beta: float = 0.5
    k: int = 16
    m: int = 10
    l: int = 40
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.k < 1 or self.m < 1:
            raise ValidationError("k and m must be >= 1")
        if self.l < 2:
            raise ValidationError("walk length l must be >= 2")
        if self.k > self.m * self.l:
            raise ValidationError("k cannot exceed m * l")


@dataclass(frozen=True, eq=False)
class StructuralFeature:
    """Top-k normalized RPR estimates of one node and the nodes they belong to."""

    values: np.ndarray
    source_ids: np.ndarray

    @property
    def k(self) -> int:
        return len(self.values)


class FeatureTable:
    """Descriptors of many nodes stacked into ``(n, k)`` arrays."""

    def __init__(self, values: np.ndarray, source_ids: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        source_ids = np.asarray(source_ids, dtype=np.int64)
        if values.shape != source_ids.shape or values.ndim != 2:
            raise ValidationError("values and source_ids must be equal-shape 2-D arrays")
        self.values = values
        self.source_ids = source_ids

    @classmethod
    def stack(cls, feats) -> "FeatureTable":
        feats = list(feats)
        return cls(np.vstack([f.values for f in feats]), np.vstack([f.source_ids for f in feats]))

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i) -> StructuralFeature:
        return StructuralFeature(self.values[i], self.source_ids[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def take(self, nodes) -> "FeatureTable":
        return FeatureTable(self.values[nodes], self.source_ids[nodes])


def _rooted_walks(g: Graph, root: int, m: int, l: int, beta: float,
                  rng: np.random.Generator) -> np.ndarray:
    walks = np.empty((m, l), dtype=np.int64)
    walks[:, 0] = root
    cur = np.full(m, root, dtype=np.int64)
    for t in range(1, l):
        move = rng.random(m) < beta
        nxt = g.sample_neighbors(cur, rng.random(m))
        cur = np.where(move, nxt, root)
        walks[:, t] = cur
    return walks


def rooted_random_walk(g: Graph, root: int, l: int, beta: float,
                       rng: np.random.Generator) -> np.ndarray:
    """One restarting walk of exactly ``l`` nodes starting at ``root``.

    At every step the walk moves to a neighbor of the current node with
    probability ``beta`` (neighbor chosen proportionally to edge weight, i.e.
    uniformly on unweighted graphs), otherwise it jumps back to ``root``.  An
    isolated root yields an all-root walk.
    """
    if l < 1:
        raise ValidationError("walk length must be >= 1")
    return _rooted_walks(g, root, 1, l, beta, rng)[0]


def _top_k(walks: np.ndarray, k: int) -> StructuralFeature:
    ids, counts = np.unique(walks, return_counts=True)
    order = np.lexsort((ids, -counts))[:k]
    values = np.zeros(k)
    sources = np.full(k, SENTINEL, dtype=np.int64)
    values[: len(order)] = counts[order]
    sources[: len(order)] = ids[order]
    total = values.sum()
    if total > 0:
        values /= total
    return StructuralFeature(values, sources)


def structural_features(g: Graph, v: int, cfg: RprConfig,
                        rng: np.random.Generator) -> StructuralFeature:
    """Descriptor of node ``v``: normalized top-k visit counts of ``cfg.m`` rooted walks.

    The root is counted at position 0 of every walk and at every restart.
    Fewer than ``k`` visited nodes are padded with zero values and
    ``SENTINEL`` ids.
    """
    walks = _rooted_walks(g, v, cfg.m, cfg.l, cfg.beta, rng)
    return _top_k(walks, cfg.k)


def node_rng(seed: int, key: int) -> np.random.Generator:
    """Independent generator for one node, derived from ``(seed, key)``."""
    return np.random.default_rng([int(seed), int(key)])


def all_structural_features(g: Graph, cfg: RprConfig, seed: int | None = None,
                            nodes=None, seed_keys=None, threads: int = 1) -> FeatureTable:
    """Descriptors for ``nodes`` (default: all), one RNG stream per node.

    Node ``v`` is featurized with ``node_rng(seed, seed_keys[v])`` (by default
    the key is ``v`` itself), so the result does not depend on processing
    order or on ``threads``.
    """
    seed = cfg.seed if seed is None else seed
    nodes = np.arange(g.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    keys = nodes if seed_keys is None else np.asarray(seed_keys, dtype=np.int64)[nodes]

    def one(pair):
        v, key = pair
        return structural_features(g, int(v), cfg, node_rng(seed, key))

    pairs = list(zip(nodes.tolist(), keys.tolist()))
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            feats = list(pool.map(one, pairs))
    else:
        feats = [one(p) for p in pairs]
    if not feats:
        return FeatureTable(np.zeros((0, cfg.k)), np.zeros((0, cfg.k), dtype=np.int64))
    return FeatureTable.stack(feats)


def exact_rpr(g: Graph, beta: float) -> np.ndarray:
    """Dense rooted-PageRank matrix ``(1 - beta) (I - beta P)^-1``.

    Row ``i`` is the stationary distribution of a walk that restarts at ``i``
    with probability ``1 - beta``.  Test oracle only: refuses graphs larger
    than ``EXACT_RPR_MAX_NODES`` nodes.
    """
    if not 0.0 <= beta < 1.0:
        raise ValidationError(f"beta must lie in [0, 1), got {beta}")
    n = g.num_nodes
    if n > EXACT_RPR_MAX_NODES:
        raise ValidationError(f"exact_rpr refuses graphs above {EXACT_RPR_MAX_NODES} nodes")
    if g.isolated.any():
        raise DegenerateNodeError(
            f"exact RPR needs a row-stochastic P; node {int(np.argmax(g.isolated))} is isolated")
    P = g.transition_matrix()
    return (1.0 - beta) * np.linalg.solve(np.eye(n) - beta * P, np.eye(n))


def rooted_google_matrix(g: Graph, root: int, beta: float) -> np.ndarray:
    """Transition matrix of the restarting walk: ``beta P + (1 - beta) 1 g_root^T``."""
    P = g.transition_matrix()
    M = beta * P
    M[:, root] += 1.0 - beta
    return M


def format_features(g: Graph, table: FeatureTable, nodes=None) -> str:
    """``node_id<TAB>src:val,src:val,...`` lines, values descending, padding omitted."""
    nodes = range(len(table)) if nodes is None else nodes
    lines = []
    for row, v in enumerate(nodes):
        vals, srcs = table.values[row], table.source_ids[row]
        body = ",".join(f"{g.node_ids[s]}:{float(x)!r}" for s, x in zip(srcs, vals) if s != SENTINEL)
        lines.append(f"{g.node_ids[v]}\t{body}")
    return "\n".join(lines) + "\n"


def write_features(path, g: Graph, table: FeatureTable, nodes=None) -> None:
    atomic_write_text(path, format_features(g, table, nodes))
