"""Positive and negative pair sampling.

Local positives come from window co-occurrence on plain random walks.
Structural positives are drawn among degree-neighbors of a node with
probability proportional to ``1 / (1 + dtw(T_i, T_j))``.  Negatives come
from a degree^power unigram table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNodeError, ValidationError
from .graph import Graph
from .io import atomic_write_text
from .structfeat import FeatureTable


@dataclass(frozen=True)
class SamplingConfig:
    alpha: float = 0.5
    window: int = 5
    walks_per_node: int = 10
    walk_len: int = 40
    neg_K: int = 5
    neg_power: float = 0.75
    cand_factor: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.window < 1:
            raise ValidationError("window must be >= 1")
        if self.neg_K < 1:
            raise ValidationError("neg_K must be >= 1")
        if self.walks_per_node < 0 or self.walk_len < 1:
            raise ValidationError("walks_per_node must be >= 0 and walk_len >= 1")
        if self.cand_factor < 0:
            raise ValidationError("cand_factor must be >= 0")


# -- local co-occurrence ------------------------------------------------------

class CooccurrenceLists:
    """Per-node context lists (with multiplicity) in CSR layout."""

    def __init__(self, indptr: np.ndarray, items: np.ndarray):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.items[self.indptr[i]:self.indptr[i + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)


def generate_walks(g: Graph, walks_per_node: int, walk_len: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Plain random walks, ``walks_per_node`` from every node; shape ``(n * w, walk_len)``.

    Walk ``r * n + v`` is repetition ``r`` started at node ``v``.  Isolated
    nodes produce constant walks.
    """
    n = g.num_nodes
    walks = np.empty((walks_per_node * n, walk_len), dtype=np.int64)
    for r in range(walks_per_node):
        cur = np.arange(n, dtype=np.int64)
        block = walks[r * n:(r + 1) * n]
        block[:, 0] = cur
        for t in range(1, walk_len):
            cur = g.sample_neighbors(cur, rng.random(n))
            block[:, t] = cur
    return walks


def cooccurrence_from_walks(walks, num_nodes: int, window: int) -> CooccurrenceLists:
    """Collect, for every walk position, all nodes within ``window`` steps (self-pairs dropped).

    Each node's list is sorted, so the result depends only on the multiset of pairs.
    """
    if isinstance(walks, np.ndarray) and walks.ndim == 2:
        groups = [walks]
    else:
        groups = [np.asarray(w, dtype=np.int64)[None, :] for w in walks]
    src, dst = [], []
    for w in groups:
        for off in range(1, window + 1):
            if off >= w.shape[1]:
                break
            a = w[:, :-off].ravel()
            b = w[:, off:].ravel()
            src += [a, b]
            dst += [b, a]
    if src:
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        keep = src != dst
        src, dst = src[keep], dst[keep]
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    # canonical (src, dst) order, so a pinned corpus reproduces the same pair stream
    order = np.lexsort((dst, src))
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])
    return CooccurrenceLists(indptr, dst[order])


def build_cooccurrence(g: Graph, cfg: SamplingConfig, seed: int) -> CooccurrenceLists:
    rng = np.random.default_rng([int(seed), 0x10CA1])
    walks = generate_walks(g, cfg.walks_per_node, cfg.walk_len, rng)
    return cooccurrence_from_walks(walks, g.num_nodes, cfg.window)


def save_walks(path, walks, g: Graph | None = None) -> None:
    """One walk per line, space-separated node ids (external ids when ``g`` is given)."""
    names = g.node_ids if g is not None else None
    lines = [" ".join(names[v] if names else str(v) for v in map(int, w)) for w in walks]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_walks(path, g: Graph | None = None) -> list[np.ndarray]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if not toks:
                continue
            ids = [g.index_of(t) for t in toks] if g is not None else [int(t) for t in toks]
            out.append(np.array(ids, dtype=np.int64))
    return out


# -- structural similarity ----------------------------------------------------

def dtw_distance(a, b) -> float:
    """Dynamic time warping with ``|x - y|`` local cost and no window constraint."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValidationError("dtw_distance needs non-empty sequences")
    return float(dtw_many(a[None, :], b[None, :])[0])


def dtw_many(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise DTW between ``A[p]`` and ``B[p]``, vectorized over pairs."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    P, n = A.shape
    m = B.shape[1]
    D = np.full((P, n + 1, m + 1), np.inf)
    D[:, 0, 0] = 0.0
    for i in range(1, n + 1):
        cost = np.abs(A[:, i - 1, None] - B)
        for j in range(1, m + 1):
            best = np.minimum(np.minimum(D[:, i - 1, j - 1], D[:, i - 1, j]), D[:, i, j - 1])
            D[:, i, j] = cost[:, j - 1] + best
    return D[:, n, m]


def similarity_from_distance(d):
    return 1.0 / (1.0 + np.asarray(d, dtype=np.float64))


def candidate_window(num_nodes: int, cand_factor: int) -> int:
    """Nodes taken on each side of a node in degree order: ``c * ceil(log2 |V|)``."""
    if num_nodes < 2:
        return 0
    return cand_factor * math.ceil(math.log2(num_nodes))


def structural_candidates(g: Graph, i: int, cand_factor: int = 2) -> np.ndarray:
    """Neighbors of ``i`` in the weighted-degree order, clipped at the ends."""
    w = candidate_window(g.num_nodes, cand_factor)
    pos = int(g.degree_rank[i])
    order = g.degree_order
    window = order[max(0, pos - w):pos + w + 1]
    return window[window != i]


# -- positive sampler ---------------------------------------------------------

class PositiveSampler:
    """Biased positive sampler.

    With probability ``alpha`` a structurally similar node is drawn from the
    degree-window candidates (or every other node with ``full_scan=True``);
    otherwise a uniform member of the node's co-occurrence list.  When one
    branch has nothing to offer the other is used.
    """

    def __init__(self, g: Graph, feats: FeatureTable, cooc: CooccurrenceLists,
                 cfg: SamplingConfig, full_scan: bool = False):
        if len(feats) != g.num_nodes or len(cooc) != g.num_nodes:
            raise ValidationError("features and co-occurrence lists must cover every node")
        self.graph = g
        self.feats = feats
        self.cooc = cooc
        self.cfg = cfg
        self.full_scan = full_scan
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def candidates(self, i: int) -> np.ndarray:
        if self.full_scan:
            allv = np.arange(self.graph.num_nodes)
            return allv[allv != i]
        return structural_candidates(self.graph, i, self.cfg.cand_factor)

    def structural_distribution(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Candidates of ``i`` and their sampling probabilities (sum 1)."""
        hit = self._cache.get(i)
        if hit is None:
            cands = self.candidates(i)
            if len(cands):
                vals = self.feats.values
                d = dtw_many(np.broadcast_to(vals[i], (len(cands), vals.shape[1])), vals[cands])
                sims = similarity_from_distance(d)
                probs = sims / sims.sum()
            else:
                probs = np.zeros(0)
            hit = (cands, probs)
            self._cache[i] = hit
        return hit

    def precompute(self, nodes=None) -> None:
        """Fill the similarity cache for ``nodes`` with one vectorized DTW pass."""
        nodes = range(self.graph.num_nodes) if nodes is None else nodes
        todo = [int(i) for i in nodes if int(i) not in self._cache]
        if not todo:
            return
        cand_lists = [self.candidates(i) for i in todo]
        lens = np.array([len(c) for c in cand_lists])
        if lens.sum() == 0:
            for i, c in zip(todo, cand_lists):
                self._cache[i] = (c, np.zeros(0))
            return
        left = np.repeat(np.array(todo), lens)
        right = np.concatenate(cand_lists)
        vals = self.feats.values
        sims = similarity_from_distance(dtw_many(vals[left], vals[right]))
        bounds = np.concatenate([[0], np.cumsum(lens)])
        for n_, (i, c) in enumerate(zip(todo, cand_lists)):
            s = sims[bounds[n_]:bounds[n_ + 1]]
            self._cache[i] = (c, s / s.sum() if len(s) else s)

    def has_local(self, i: int) -> bool:
        return self.cooc.indptr[i + 1] > self.cooc.indptr[i]

    def has_structural(self, i: int) -> bool:
        return len(self.structural_distribution(i)[0]) > 0

    def can_sample(self, i: int) -> bool:
        return self.has_local(i) or self.has_structural(i)

    def draw(self, i: int, rng: np.random.Generator) -> tuple[int, bool]:
        """Return ``(positive, used_structural_branch)``."""
        structural = rng.random() < self.cfg.alpha
        if structural and not self.has_structural(i):
            structural = False
        elif not structural and not self.has_local(i):
            structural = True
        if structural:
            cands, probs = self.structural_distribution(i)
            if not len(cands):
                raise DegenerateNodeError(f"node {i} has neither co-occurrences nor candidates")
            pick = np.searchsorted(np.cumsum(probs), rng.random(), side="right")
            return int(cands[min(pick, len(cands) - 1)]), True
        ctx = self.cooc[i]
        if not len(ctx):
            raise DegenerateNodeError(f"node {i} has neither co-occurrences nor candidates")
        return int(ctx[rng.integers(len(ctx))]), False

    def sample(self, i: int, rng: np.random.Generator) -> int:
        return self.draw(i, rng)[0]


def sample_positive(sampler: PositiveSampler, i: int, rng: np.random.Generator) -> int:
    return sampler.sample(i, rng)


# -- negatives ----------------------------------------------------------------

class NegativeTable:
    """Unigram noise distribution over nodes, ``P(v) ~ degree(v) ** power``."""

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0) or probs.sum() <= 0:
            raise ValidationError("negative table needs a non-empty non-negative distribution")
        self.probs = probs / probs.sum()
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0

    @classmethod
    def from_graph(cls, g: Graph, power: float = 0.75) -> "NegativeTable":
        deg = g.degree
        if not np.any(deg > 0):
            return cls(np.ones(g.num_nodes))
        mass = np.where(deg > 0, deg, 0.0) ** power
        mass[deg == 0] = 0.0
        return cls(mass)

    def __len__(self) -> int:
        return len(self.probs)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(idx, len(self.probs) - 1)

    def sample_excluding(self, size, exclude: np.ndarray, rng: np.random.Generator,
                         max_retries: int = 10) -> np.ndarray:
        """Draws of shape ``size = (B, ...)`` avoiding ``exclude[b]`` (shape ``(B, E)``) per row.

        Rows still holding excluded draws after ``max_retries`` rounds are
        finished with exact draws from the restricted table, as in
        :func:`sample_negatives`.
        """
        exclude = np.asarray(exclude, dtype=np.int64)
        draws = self.sample(size, rng)
        ex = exclude.reshape(exclude.shape[0], *([1] * (draws.ndim - 1)), exclude.shape[1])
        for _ in range(max_retries):
            bad = np.any(draws[..., None] == ex, axis=-1)
            if not bad.any():
                return draws
            draws[bad] = self.sample(int(bad.sum()), rng)
        bad = np.any(draws[..., None] == ex, axis=-1)
        for b in np.flatnonzero(bad.reshape(bad.shape[0], -1).any(axis=1)):
            allowed = self.probs.copy()
            row_ex = exclude[b]
            allowed[row_ex[(row_ex >= 0) & (row_ex < len(allowed))]] = 0.0
            if allowed.sum() > 0:
                draws[b][bad[b]] = NegativeTable(allowed).sample(int(bad[b].sum()), rng)
        return draws


def sample_negatives(table: NegativeTable, exclude, count: int, rng: np.random.Generator,
                     max_retries: int = 10) -> np.ndarray:
    """``count`` independent draws, resampling any that fall in ``exclude``.

    After ``max_retries`` rounds the remaining excluded draws are replaced by
    exact draws from the table restricted to allowed nodes; they are kept
    only if no allowed node has positive mass.
    """
    exclude = np.unique(np.asarray(list(exclude), dtype=np.int64))
    draws = table.sample(count, rng)
    for _ in range(max_retries):
        bad = np.isin(draws, exclude)
        if not bad.any():
            return draws
        draws[bad] = table.sample(int(bad.sum()), rng)
    bad = np.isin(draws, exclude)
    if bad.any():
        allowed = table.probs.copy()
        allowed[exclude[(exclude >= 0) & (exclude < len(allowed))]] = 0.0
        if allowed.sum() > 0:
            draws[bad] = NegativeTable(allowed).sample(int(bad.sum()), rng)
    return draws
