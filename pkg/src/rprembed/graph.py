"""Weighted undirected graph with node content, labels and text-file loaders.

Edges are stored in CSR form (``indptr``, ``indices``, ``weights``) with each
undirected edge present in both endpoint rows.  Neighbor lists are sorted by
node id, which keeps every walk reproducible for a given RNG stream.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateNodeError, ParseError, ValidationError

__all__ = [
    "Graph",
    "LabelSet",
    "load_graph",
    "save_graph",
    "read_edges",
    "read_features",
    "read_labels",
    "transition_prob",
    "degree_order",
]


def _class_sort_key(name: str):
    try:
        return (0, int(name), name)
    except ValueError:
        return (1, 0, name)


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Node labels, either one class per node or a class set per node.

    ``matrix[i, c]`` is True when node ``i`` carries class ``classes[c]``.
    Unlabeled nodes have an all-False row.
    """

    classes: tuple[str, ...]
    matrix: np.ndarray
    multilabel: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=bool)
        if m.ndim != 2 or m.shape[1] != len(self.classes):
            raise ValidationError("label matrix shape does not match class list")
        if not self.multilabel and np.any(m.sum(axis=1) > 1):
            raise ValidationError("single-label mode but a node has several classes")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_assignments(cls, assignments: Sequence[Iterable[str] | str | None],
                         multilabel: bool = False) -> "LabelSet":
        sets = []
        for a in assignments:
            if a is None:
                sets.append(set())
            elif isinstance(a, str):
                sets.append({a})
            else:
                sets.append({str(c) for c in a})
        classes = tuple(sorted(set().union(*sets), key=_class_sort_key)) if sets else ()
        index = {c: k for k, c in enumerate(classes)}
        m = np.zeros((len(sets), len(classes)), dtype=bool)
        for i, s in enumerate(sets):
            for c in s:
                m[i, index[c]] = True
        return cls(classes, m, multilabel)

    @classmethod
    def from_array(cls, y: Sequence[int]) -> "LabelSet":
        """Single-label set from integer class ids (negative = unlabeled)."""
        y = np.asarray(y, dtype=np.int64)
        ids = np.unique(y[y >= 0])
        classes = tuple(str(c) for c in ids)
        m = np.zeros((len(y), len(ids)), dtype=bool)
        lab = y >= 0
        m[np.flatnonzero(lab), np.searchsorted(ids, y[lab])] = True
        return cls(classes, m, False)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def labeled(self) -> np.ndarray:
        return self.matrix.any(axis=1)

    @property
    def y(self) -> np.ndarray:
        """Class index per node, -1 when unlabeled (single-label mode only)."""
        if self.multilabel:
            raise ValidationError("y is undefined in multi-label mode; use matrix")
        y = np.full(self.matrix.shape[0], -1, dtype=np.int64)
        rows, cols = np.nonzero(self.matrix)
        y[rows] = cols
        return y

    def subset(self, nodes: np.ndarray) -> "LabelSet":
        return LabelSet(self.classes, self.matrix[nodes], self.multilabel)


class Graph:
    """Immutable weighted undirected graph.

    Parameters
    ----------
    indptr, indices, weights : arrays
        Symmetric CSR adjacency. Rows must be sorted by neighbor id, all
        weights positive and no self-loops present.
    content : array, shape (n, f)
        Node content matrix (``f`` may be 0).
    labels : LabelSet, optional
    node_ids : sequence of str, optional
        External id of each dense node index; defaults to ``"0".."n-1"``.
    """

    def __init__(self, indptr, indices, weights, content, labels: LabelSet | None = None,
                 node_ids: Sequence[str] | None = None):
        indptr = np.array(indptr, dtype=np.int64)
        indices = np.array(indices, dtype=np.int64)
        weights = np.array(weights, dtype=np.float64)
        n = len(indptr) - 1
        if n < 0:
            raise ValidationError("indptr must have at least one entry")
        content = np.array(content, dtype=np.float64)
        if content.ndim == 1 and content.size == 0:
            content = np.zeros((n, 0))
        if content.ndim != 2 or content.shape[0] != n:
            raise ValidationError(
                f"content has {content.shape[0] if content.ndim else 0} rows, expected {n}")
        if node_ids is None:
            node_ids = [str(i) for i in range(n)]
        node_ids = tuple(str(x) for x in node_ids)
        if len(node_ids) != n or len(set(node_ids)) != n:
            raise ValidationError("node_ids must be unique and one per node")
        if labels is not None and labels.matrix.shape[0] != n:
            raise ValidationError("label rows do not match node count")
        self._indptr = indptr
        self._indices = indices
        self._weights = weights
        self._content = content
        self.labels = labels
        self.node_ids = node_ids
        self._validate()
        for a in (indptr, indices, weights, content):
            a.setflags(write=False)

    def _validate(self):
        n = self.num_nodes
        ip, ix, w = self._indptr, self._indices, self._weights
        if ip[0] != 0 or np.any(np.diff(ip) < 0) or ip[-1] != len(ix) or len(ix) != len(w):
            raise ValidationError("malformed CSR structure")
        if len(ix) and (ix.min() < 0 or ix.max() >= n):
            raise ValidationError("neighbor index out of range")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("edge weights must be finite and > 0")
        rows = np.repeat(np.arange(n), np.diff(ip))
        if np.any(rows == ix):
            raise ValidationError("self-loops are not allowed")
        # sorted, duplicate-free rows
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (ix[1:] <= ix[:-1])):
            raise ValidationError("neighbor lists must be strictly increasing")
        fwd = rows * n + ix
        bwd = ix * n + rows
        order_f = np.argsort(fwd, kind="stable")
        order_b = np.argsort(bwd, kind="stable")
        if not (np.array_equal(fwd[order_f], bwd[order_b])
                and np.array_equal(w[order_f], w[order_b])):
            raise ValidationError("adjacency is not symmetric")
        if not np.all(np.isfinite(self._content)):
            raise ValidationError("content contains non-finite values")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_edges(cls, num_nodes: int, src, dst, weight=None, content=None,
                   labels: LabelSet | None = None, node_ids=None) -> "Graph":
        """Build from an undirected edge list.

        Each (src, dst) pair is one undirected edge; repeated pairs (in either
        orientation) have their weights summed.  Self-loops are dropped with a
        warning.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if weight is None:
            weight = np.ones(len(src))
        weight = np.asarray(weight, dtype=np.float64).ravel()
        if not (len(src) == len(dst) == len(weight)):
            raise ValidationError("src, dst and weight must have equal length")
        loops = src == dst
        if loops.any():
            warnings.warn(f"dropping {int(loops.sum())} self-loop(s)", stacklevel=2)
            src, dst, weight = src[~loops], dst[~loops], weight[~loops]
        if content is None:
            content = np.zeros((num_nodes, 0))
        a = np.minimum(src, dst)
        b = np.maximum(src, dst)
        key = a * max(num_nodes, 1) + b
        uniq, inv = np.unique(key, return_inverse=True)
        wsum = np.bincount(inv, weights=weight, minlength=len(uniq))
        ua, ub = np.divmod(uniq, max(num_nodes, 1))
        rows = np.concatenate([ua, ub])
        cols = np.concatenate([ub, ua])
        ws = np.concatenate([wsum, wsum])
        order = np.lexsort((cols, rows))
        rows, cols, ws = rows[order], cols[order], ws[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=indptr[1:])
        return cls(indptr, cols, ws, content, labels, node_ids)

    @classmethod
    def from_networkx(cls, nxg, content=None, labels: LabelSet | None = None,
                      weight: str = "weight") -> "Graph":
        nodes = list(nxg.nodes())
        index = {v: i for i, v in enumerate(nodes)}
        src, dst, w = [], [], []
        for u, v, data in nxg.edges(data=True):
            src.append(index[u])
            dst.append(index[v])
            w.append(float(data.get(weight, 1.0)))
        return cls.from_edges(len(nodes), src, dst, w, content, labels,
                              [str(v) for v in nodes])

    # -- basic accessors ----------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self._indptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self._indices) // 2

    @property
    def content(self) -> np.ndarray:
        return self._content

    @property
    def content_dim(self) -> int:
        return self._content.shape[1]

    @property
    def indptr(self) -> np.ndarray:
        return self._indptr

    @property
    def indices(self) -> np.ndarray:
        return self._indices

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and edge weights of node ``i``."""
        s, e = self._indptr[i], self._indptr[i + 1]
        return self._indices[s:e], self._weights[s:e]

    def adjacency(self, i: int) -> list[tuple[int, float]]:
        idx, w = self.neighbors(i)
        return [(int(j), float(x)) for j, x in zip(idx, w)]

    @cached_property
    def degree(self) -> np.ndarray:
        """Weighted degree of every node."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self._indptr))
        d = np.bincount(rows, weights=self._weights, minlength=self.num_nodes)
        d.setflags(write=False)
        return d

    @cached_property
    def isolated(self) -> np.ndarray:
        m = np.diff(self._indptr) == 0
        m.setflags(write=False)
        return m

    @cached_property
    def degree_order(self) -> np.ndarray:
        order = np.argsort(self.degree, kind="stable")
        order.setflags(write=False)
        return order

    @cached_property
    def degree_rank(self) -> np.ndarray:
        """Position of each node in ``degree_order``."""
        rank = np.empty(self.num_nodes, dtype=np.int64)
        rank[self.degree_order] = np.arange(self.num_nodes)
        rank.setflags(write=False)
        return rank

    @cached_property
    def _step_keys(self) -> np.ndarray:
        # row r holds r + (cumulative weight / degree), strictly inside (r, r + 1]
        n = self.num_nodes
        rows = np.repeat(np.arange(n), np.diff(self._indptr))
        cum = np.cumsum(self._weights)
        start = np.concatenate([[0.0], cum])[self._indptr[:-1]]
        local = cum - start[rows]
        deg = self.degree
        keys = rows + local / deg[rows]
        last = self._indptr[1:][~self.isolated] - 1
        keys[last] = rows[last] + 1.0
        keys.setflags(write=False)
        return keys

    def sample_neighbors(self, nodes: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Pick one neighbor of each node with probability ``w_ij / deg_i``.

        ``u`` holds uniform draws in [0, 1), one per node.  Isolated nodes map
        to themselves.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.searchsorted(self._step_keys, nodes + np.asarray(u), side="right")
        lo = self._indptr[nodes]
        hi = self._indptr[nodes + 1] - 1
        pos = np.clip(pos, lo, np.maximum(hi, lo))
        out = self._indices[np.minimum(pos, len(self._indices) - 1)] if len(self._indices) else nodes
        return np.where(hi >= lo, out, nodes)

    @cached_property
    def _id_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.node_ids)}

    def index_of(self, node_id: str) -> int:
        try:
            return self._id_index[str(node_id)]
        except KeyError:
            raise ValidationError(f"unknown node id {node_id!r}") from None

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected edge list with ``src < dst``."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self._indptr))
        keep = rows < self._indices
        return rows[keep], self._indices[keep], self._weights[keep]

    def transition_matrix(self) -> np.ndarray:
        """Dense row-stochastic transition matrix; isolated rows are zero."""
        n = self.num_nodes
        P = np.zeros((n, n))
        rows = np.repeat(np.arange(n), np.diff(self._indptr))
        P[rows, self._indices] = self._weights
        deg = self.degree
        nz = deg > 0
        P[nz] /= deg[nz, None]
        return P

    # -- derived graphs -----------------------------------------------------

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph on ``nodes`` (renumbered in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        s, d, w = self.edges()
        keep = (remap[s] >= 0) & (remap[d] >= 0)
        labels = self.labels.subset(nodes) if self.labels is not None else None
        return Graph.from_edges(len(nodes), remap[s[keep]], remap[d[keep]], w[keep],
                                self._content[nodes], labels,
                                [self.node_ids[i] for i in nodes])

    def with_edges(self, src, dst, weight, content=None) -> "Graph":
        """Same node set and labels with a new edge set (and optionally content)."""
        return Graph.from_edges(self.num_nodes, src, dst, weight,
                                self._content if content is None else content,
                                self.labels, self.node_ids)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self._indptr, self._indices, self._weights, self._content):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update("\x00".join(self.node_ids).encode())
        return h.hexdigest()

    def __repr__(self) -> str:
        return (f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"content_dim={self.content_dim})")


def disjoint_union(graphs: Sequence[Graph], suffixes: Sequence[str] | None = None) -> Graph:
    """Place graphs side by side; node ``i`` of graph ``g`` gets offset sum of earlier sizes."""
    if suffixes is None:
        suffixes = [f"@{k}" for k in range(len(graphs))]
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
    srcs, dsts, ws, ids = [], [], [], []
    for off, g, suf in zip(offsets, graphs, suffixes):
        s, d, w = g.edges()
        srcs.append(s + off)
        dsts.append(d + off)
        ws.append(w)
        ids.extend(v + suf for v in g.node_ids)
    content = np.vstack([g.content for g in graphs])
    labels = None
    if all(g.labels is not None for g in graphs) and graphs:
        first = graphs[0].labels
        if all(g.labels.classes == first.classes for g in graphs):
            labels = LabelSet(first.classes, np.vstack([g.labels.matrix for g in graphs]),
                              first.multilabel)
    return Graph.from_edges(int(offsets[-1]), np.concatenate(srcs), np.concatenate(dsts),
                            np.concatenate(ws), content, labels, ids)


def transition_prob(g: Graph, i: int, j: int) -> float:
    """``w_ij / sum_k w_ik``; raises for isolated ``i``."""
    if g.isolated[i]:
        raise DegenerateNodeError(f"node {i} has no neighbors")
    idx, w = g.neighbors(i)
    pos = np.searchsorted(idx, j)
    if pos < len(idx) and idx[pos] == j:
        return float(w[pos] / g.degree[i])
    return 0.0


def degree_order(g: Graph) -> np.ndarray:
    """Node ids by weighted degree ascending, ties by id ascending."""
    return g.degree_order


# -- file formats -------------------------------------------------------------

def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            yield lineno, line


def read_edges(path) -> list[tuple[str, str, float]]:
    """Parse ``src<TAB>dst[<TAB>weight]`` lines (``#`` starts a comment)."""
    out = []
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(path, lineno, f"expected 2 or 3 fields, got {len(parts)}")
        w = 1.0
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise ParseError(path, lineno, f"bad weight {parts[2]!r}") from None
            if not np.isfinite(w) or w <= 0:
                raise ParseError(path, lineno, f"weight must be positive, got {parts[2]}")
        out.append((parts[0], parts[1], w))
    return out


def read_features(path) -> tuple[list[str], np.ndarray]:
    """Parse a dense or ``#sparse f=<dim>`` feature file."""
    ids: list[str] = []
    rows: list = []
    sparse_dim = None
    dim = None
    first = True
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            if first and line[1:].strip().startswith("sparse"):
                try:
                    opt = line[1:].split()[1]
                    if not opt.startswith("f="):
                        raise ValueError
                    sparse_dim = int(opt[2:])
                except (IndexError, ValueError):
                    raise ParseError(path, lineno, "sparse header must read '#sparse f=<dim>'") from None
            first = False
            continue
        first = False
        parts = line.split(None, 1)
        node = parts[0]
        body = parts[1] if len(parts) > 1 else ""
        if sparse_dim is not None:
            row = np.zeros(sparse_dim)
            for tok in body.split():
                try:
                    k, v = tok.split(":")
                    k, v = int(k), float(v)
                except ValueError:
                    raise ParseError(path, lineno, f"bad sparse entry {tok!r}") from None
                if not 0 <= k < sparse_dim:
                    raise ValidationError(
                        f"{path}:{lineno}: sparse index {k} outside [0, {sparse_dim})")
                row[k] = v
        else:
            try:
                row = np.array([float(x) for x in body.split(",")]) if body else np.zeros(0)
            except ValueError:
                raise ParseError(path, lineno, "feature values must be comma-separated numbers") from None
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise ValidationError(
                    f"{path}:{lineno}: feature row has {len(row)} values, expected {dim}")
        ids.append(node)
        rows.append(row)
    f = sparse_dim if sparse_dim is not None else (dim or 0)
    mat = np.vstack(rows) if rows else np.zeros((0, f))
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate node ids in feature file")
    return ids, mat


def read_labels(path) -> tuple[dict[str, list[str]], bool]:
    """Parse a label file; returns ``(assignments, multilabel)``."""
    multilabel = False
    out: dict[str, list[str]] = {}
    first = True
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            if first and line[1:].strip() == "multilabel":
                multilabel = True
            first = False
            continue
        first = False
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ParseError(path, lineno, "expected node_id<TAB>class")
        classes = [c.strip() for c in parts[1].split(",")] if multilabel else [parts[1].strip()]
        if not all(classes):
            raise ParseError(path, lineno, "empty class name")
        if parts[0] in out:
            raise ValidationError(f"{path}:{lineno}: duplicate label for node {parts[0]!r}")
        out[parts[0]] = classes
    return out, multilabel


def load_graph(edge_path, feature_path=None, label_path=None) -> Graph:
    """Load a graph from the text formats.

    Node ids are numbered by first appearance in the edge file, then in the
    feature file.  The same unordered pair listed several times in one
    orientation has its weights summed; listing it in both orientations is
    accepted only when both orientations carry the same total weight.
    """
    edges = read_edges(edge_path)
    index: dict[str, int] = {}
    for a, b, _ in edges:
        index.setdefault(a, len(index))
        index.setdefault(b, len(index))

    first_names = list(index)
    directed: dict[tuple[int, int], float] = {}
    for a, b, w in edges:
        key = (index[a], index[b])
        directed[key] = directed.get(key, 0.0) + w
    src, dst, wts = [], [], []
    for (i, j), w in directed.items():
        if i == j:
            src.append(i)
            dst.append(j)
            wts.append(w)
            continue
        back = directed.get((j, i))
        if back is not None:
            if not np.isclose(back, w, rtol=1e-12, atol=0.0):
                raise ValidationError(
                    f"{edge_path}: asymmetric weights for edge "
                    f"{first_names[i]}-{first_names[j]}: {w} vs {back}")
            if i > j:
                continue
        src.append(i)
        dst.append(j)
        wts.append(w)

    content = None
    if feature_path is not None:
        fids, fmat = read_features(feature_path)
        for v in fids:
            index.setdefault(v, len(index))
        have = set(fids)
        missing = [v for v in index if v not in have]
        if missing:
            raise ValidationError(
                f"{feature_path}: no features for {len(missing)} node(s), e.g. {missing[0]!r}")
        content = np.zeros((len(index), fmat.shape[1]))
        content[[index[v] for v in fids]] = fmat

    names = [None] * len(index)
    for v, i in index.items():
        names[i] = v

    labels = None
    if label_path is not None:
        assign, multilabel = read_labels(label_path)
        unknown = [v for v in assign if v not in index]
        if unknown:
            raise ValidationError(f"{label_path}: label for unknown node {unknown[0]!r}")
        labels = LabelSet.from_assignments([assign.get(v) for v in names], multilabel)

    if content is None:
        content = np.zeros((len(index), 0))
    return Graph.from_edges(len(index), src, dst, wts, content, labels, names)


def save_graph(g: Graph, edge_path, feature_path=None, label_path=None,
               sparse: bool = False) -> None:
    """Write ``g`` in the formats read by :func:`load_graph` (lossless floats)."""
    from .io import atomic_write_text

    ids = g.node_ids
    s, d, w = g.edges()
    lines = ["# src\tdst\tweight"]
    lines += [f"{ids[a]}\t{ids[b]}\t{float(x)!r}" for a, b, x in zip(s, d, w)]
    atomic_write_text(edge_path, "\n".join(lines) + "\n")
    if feature_path is not None:
        if sparse:
            lines = [f"#sparse f={g.content_dim}"]
            for v, row in zip(ids, g.content):
                nz = np.flatnonzero(row)
                lines.append(v + "\t" + " ".join(f"{k}:{float(row[k])!r}" for k in nz))
        else:
            lines = [v + "\t" + ",".join(repr(float(x)) for x in row)
                     for v, row in zip(ids, g.content)]
        atomic_write_text(feature_path, "\n".join(lines) + "\n")
    if label_path is not None:
        if g.labels is None:
            raise ValidationError("graph has no labels to save")
        lab = g.labels
        lines = ["#multilabel"] if lab.multilabel else []
        for v, row in zip(ids, lab.matrix):
            cls = [lab.classes[c] for c in np.flatnonzero(row)]
            if cls:
                lines.append(f"{v}\t{','.join(cls)}")
        atomic_write_text(label_path, "\n".join(lines) + "\n")
