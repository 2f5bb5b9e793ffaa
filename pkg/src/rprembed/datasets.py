"""Synthetic graphs for smoke runs, tests and desk-scale experiments."""

from __future__ import annotations

from importlib import resources

import networkx as nx
import numpy as np

from .graph import Graph, LabelSet, load_graph


def _binary_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Bernoulli rows; every row gets at least one 1 and one 0."""
    X = (rng.random(probs.shape) < probs).astype(np.float64)
    for row in X:
        if row.all():
            row[rng.integers(len(row))] = 0.0
        if not row.any():
            row[rng.integers(len(row))] = 1.0
    return X


def clique_bridge_graph(clique_size: int = 10, f: int = 16, seed: int = 0) -> Graph:
    """Two cliques joined through one bridge node (2 * clique_size + 1 nodes).

    Nodes ``0..c-1`` form clique A, ``c..2c-1`` clique B and node ``2c`` links
    node ``c-1`` to node ``c``.  Content is binary and community-correlated;
    labels are 0 for A (and the bridge) and 1 for B.
    """
    c = clique_size
    rng = np.random.default_rng(seed)
    src, dst = [], []
    for base in (0, c):
        for a in range(c):
            for b in range(a + 1, c):
                src.append(base + a)
                dst.append(base + b)
    bridge = 2 * c
    src += [c - 1, bridge]
    dst += [bridge, c]
    half = f // 2
    probs = np.full((2 * c + 1, f), 0.1)
    probs[:c, :half] = 0.6
    probs[c:2 * c, half:] = 0.6
    probs[bridge] = 0.35
    content = _binary_rows(rng, probs)
    y = np.array([0] * c + [1] * c + [0])
    return Graph.from_edges(2 * c + 1, src, dst, None, content, LabelSet.from_array(y))


def scale_free_graph(n: int = 30, m: int = 2, f: int = 32, density: float = 0.3,
                     seed: int = 0) -> Graph:
    """Barabasi-Albert graph with random binary content."""
    rng = np.random.default_rng(seed)
    nxg = nx.barabasi_albert_graph(n, m, seed=int(rng.integers(2**31)))
    content = _binary_rows(rng, np.full((n, f), density))
    return Graph.from_networkx(nxg, content)


def planted_partition(n: int = 120, blocks: int = 3, p_in: float = 0.15, p_out: float = 0.01,
                      f: int = 60, p_signal: float = 0.3, p_background: float = 0.15,
                      seed: int = 0) -> Graph:
    """Equal-size block model with class-correlated binary content.

    Block ``b`` owns the feature slice ``[b * f / blocks, (b + 1) * f / blocks)``
    whose bits fire with ``p_signal``; all other bits fire with
    ``p_background``.  Isolated nodes are attached to a random block mate.
    """
    rng = np.random.default_rng(seed)
    size = n // blocks
    sizes = [size] * blocks
    sizes[-1] += n - size * blocks
    nxg = nx.random_partition_graph(sizes, p_in, p_out, seed=int(rng.integers(2**31)))
    y = np.concatenate([[b] * s for b, s in enumerate(sizes)])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    for v in range(n):
        if nxg.degree(v) == 0:
            b = y[v]
            mates = [u for u in range(starts[b], starts[b + 1]) if u != v]
            nxg.add_edge(v, int(rng.choice(mates)))
    per = f // blocks
    probs = np.full((n, f), p_background)
    for v in range(n):
        probs[v, y[v] * per:(y[v] + 1) * per] = p_signal
    content = _binary_rows(rng, probs)
    order = sorted(nxg.nodes())
    src, dst = zip(*nxg.edges()) if nxg.number_of_edges() else ((), ())
    return Graph.from_edges(n, src, dst, None, content[order], LabelSet.from_array(y[order]))


def random_connected_graph(n: int, p: float, seed: int = 0, f: int = 0,
                           weighted: bool = False) -> Graph:
    """Erdos-Renyi graph, with components chained together so the result is connected."""
    rng = np.random.default_rng(seed)
    nxg = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
    comps = [sorted(c) for c in nx.connected_components(nxg)]
    for a, b in zip(comps[:-1], comps[1:]):
        nxg.add_edge(int(rng.choice(a)), int(rng.choice(b)))
    src, dst = zip(*nxg.edges()) if nxg.number_of_edges() else ((), ())
    w = rng.uniform(0.5, 3.0, size=len(src)) if weighted else None
    content = _binary_rows(rng, np.full((n, f), 0.3)) if f else None
    return Graph.from_edges(n, src, dst, w, content)


def preferential_attachment_graph(n: int = 500, m: int = 2, seed: int = 0) -> Graph:
    nxg = nx.barabasi_albert_graph(n, m, seed=seed)
    return Graph.from_networkx(nxg)


def smoke_graph() -> Graph:
    """The bundled 21-node clique-bridge graph."""
    root = resources.files("rprembed") / "data"
    with resources.as_file(root / "smoke_edges.tsv") as e, \
            resources.as_file(root / "smoke_features.tsv") as fpath, \
            resources.as_file(root / "smoke_labels.tsv") as lab:
        return load_graph(e, fpath, lab)
