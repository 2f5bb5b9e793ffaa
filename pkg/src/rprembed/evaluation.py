"""Evaluation protocols: one-vs-rest logistic regression, F1 metrics,
mirror-network distances, edge perturbation and structure/embedding correlation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .config import TrainConfig
from .errors import ValidationError
from .graph import Graph, LabelSet, disjoint_union
from .io import atomic_write_text
from .sampling import dtw_many
from .structfeat import FeatureTable, all_structural_features


# -- logistic regression ------------------------------------------------------

@dataclass
class ClassifierParams:
    """One binary logistic model per class; ``W[:, c]`` and ``b[c]`` score class ``c``."""

    classes: np.ndarray
    W: np.ndarray
    b: np.ndarray
    l2: float = 1e-4
    max_iter: int = 500
    tol: float = 1e-6
    multilabel: bool = False
    history: list = field(default_factory=list, repr=False)
    n_iter: list = field(default_factory=list)


def _binary_objective(X, t, w, b, l2):
    z = X @ w + b
    # mean log-loss, written with logaddexp to stay finite for large |z|
    loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * (w @ w)
    r = (expit(z) - t) / len(t)
    return loss, X.T @ r + l2 * w, r.sum()


def _fit_binary(X, t, l2, max_iter, tol):
    w = np.zeros(X.shape[1])
    b = 0.0
    f, gw, gb = _binary_objective(X, t, w, b, l2)
    hist = [f]
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gnorm2 = gw @ gw + gb * gb
        if np.sqrt(gnorm2) < tol:
            break
        step *= 2.0
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            f_new, gw_new, gb_new = _binary_objective(X, t, w_new, b_new, l2)
            if f_new <= f - 0.5 * step * gnorm2 or step < 1e-14:
                break
            step *= 0.5
        if f_new > f:
            break
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
        hist.append(f)
    return w, b, hist, it


def fit_logreg(X, y, l2: float = 1e-4, max_iter: int = 500, tol: float = 1e-6,
               multilabel: bool = False) -> ClassifierParams:
    """One-vs-rest logistic regression by full-batch gradient descent with backtracking.

    ``y`` is a label vector (single-label) or an ``(n, C)`` boolean matrix
    (``multilabel=True``).  The penalty ``l2 / 2 * |w|^2`` excludes the bias.
    """
    X = np.asarray(X, dtype=np.float64)
    if multilabel:
        Y = np.asarray(y, dtype=bool)
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise ValidationError("multi-label targets must be an (n, C) matrix")
        classes = np.arange(Y.shape[1])
        if Y.shape[1] < 1:
            raise ValidationError("need at least one label column")
    else:
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValidationError("X and y disagree on the number of samples")
        classes = np.unique(y)
        if len(classes) < 2:
            raise ValidationError("logistic regression needs at least two classes")
        Y = y[:, None] == classes[None, :]
    W = np.zeros((X.shape[1], len(classes)))
    b = np.zeros(len(classes))
    hists, iters = [], []
    for c in range(len(classes)):
        W[:, c], b[c], h, it = _fit_binary(X, Y[:, c].astype(np.float64), l2, max_iter, tol)
        hists.append(h)
        iters.append(it)
    return ClassifierParams(classes, W, b, l2, max_iter, tol, multilabel, hists, iters)


def predict_scores(params: ClassifierParams, X) -> np.ndarray:
    return expit(np.asarray(X, dtype=np.float64) @ params.W + params.b)


def predict(params: ClassifierParams, X) -> np.ndarray:
    """Argmax class (lowest class on ties) or, in multi-label mode, scores >= 0.5."""
    scores = predict_scores(params, X)
    if params.multilabel:
        return scores >= 0.5
    return params.classes[np.argmax(scores, axis=1)]


def classification_report(pred, truth, classes=None) -> dict[str, float]:
    """Accuracy, micro-F1 and macro-F1.

    Single-label inputs are label vectors; multi-label inputs are boolean
    ``(n, C)`` matrices, for which accuracy is the exact-match rate.  Classes
    without any true or predicted instance contribute an F1 of 0 to the
    macro average.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError("pred and truth must have the same shape")
    if pred.size == 0:
        raise ValidationError("classification_report needs at least one sample")
    if pred.ndim == 2:
        P, T = pred.astype(bool), truth.astype(bool)
        accuracy = float(np.mean(np.all(P == T, axis=1)))
    else:
        if classes is None:
            classes = np.unique(np.concatenate([truth, pred]))
        classes = np.asarray(classes)
        P = pred[:, None] == classes[None, :]
        T = truth[:, None] == classes[None, :]
        accuracy = float(np.mean(pred == truth))
    tp = np.sum(P & T, axis=0).astype(np.float64)
    fp = np.sum(P & ~T, axis=0).astype(np.float64)
    fn = np.sum(~P & T, axis=0).astype(np.float64)
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    micro_den = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = float(2 * tp.sum() / micro_den) if micro_den > 0 else 0.0
    return {"accuracy": accuracy, "micro_f1": micro, "macro_f1": float(per_class.mean())}


def stratified_split(y: np.ndarray, train_frac: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random split of the indices of ``y``.

    Every class keeps at least one training and (for ``train_frac < 1``) one
    test example when it has two or more members.
    """
    if not 0.0 < train_frac <= 1.0:
        raise ValidationError("train_frac must lie in (0, 1]")
    y = np.asarray(y)
    train, test = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        if train_frac >= 1.0:
            cut = len(idx)
        else:
            cut = int(round(train_frac * len(idx)))
            cut = min(max(cut, 1), max(len(idx) - 1, 1))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass
class ClassificationSummary:
    runs: list[dict[str, float]]

    def mean(self, key: str) -> float:
        return float(np.mean([r[key] for r in self.runs]))

    def std(self, key: str) -> float:
        return float(np.std([r[key] for r in self.runs]))

    def table(self) -> str:
        rows = [f"{'metric':<10} {'mean':>8} {'std':>8}"]
        for key in ("accuracy", "micro_f1", "macro_f1"):
            rows.append(f"{key:<10} {self.mean(key):8.4f} {self.std(key):8.4f}")
        return "\n".join(rows)

    def csv(self) -> str:
        lines = ["metric,mean,std"]
        lines += [f"{k},{self.mean(k)!r},{self.std(k)!r}" for k in ("accuracy", "micro_f1", "macro_f1")]
        return "\n".join(lines) + "\n"


def evaluate_embeddings(X, labels: LabelSet, train_frac: float = 0.3, repeats: int = 10,
                        seed: int = 0, l2: float = 1e-4, max_iter: int = 500) -> ClassificationSummary:
    """Transductive protocol: stratified split of labeled nodes, ``repeats`` times."""
    X = np.asarray(X, dtype=np.float64)
    mask = labels.labeled
    if train_frac >= 1.0:
        warnings.warn("train_frac = 1.0: reporting training-set metrics only", stacklevel=2)
    runs = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        nodes = np.flatnonzero(mask)
        if labels.multilabel:
            strat = np.zeros(len(nodes), dtype=np.int64)
        else:
            strat = labels.y[nodes]
        tr, te = stratified_split(strat, train_frac, rng)
        tr, te = nodes[tr], nodes[te]
        if len(te) == 0:
            te = tr
        runs.append(_fit_and_score(X[tr], X[te], labels, tr, te, l2, max_iter))
    return ClassificationSummary(runs)


def _fit_and_score(Xtr, Xte, labels: LabelSet, tr, te, l2, max_iter, labels_test=None):
    lt = labels if labels_test is None else labels_test
    if labels.multilabel:
        clf = fit_logreg(Xtr, labels.matrix[tr], l2, max_iter, multilabel=True)
        return classification_report(predict(clf, Xte), lt.matrix[te])
    clf = fit_logreg(Xtr, labels.y[tr], l2, max_iter)
    return classification_report(predict(clf, Xte), lt.y[te],
                                 classes=np.arange(labels.num_classes))


def majority_baseline(labels: LabelSet, train_frac: float = 0.3, repeats: int = 10,
                      seed: int = 0) -> ClassificationSummary:
    """Predict the most frequent training class, on the same splits as :func:`evaluate_embeddings`."""
    nodes = np.flatnonzero(labels.labeled)
    y = labels.y
    runs = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        tr, te = stratified_split(y[nodes], train_frac, rng)
        tr, te = nodes[tr], nodes[te]
        if len(te) == 0:
            te = tr
        counts = np.bincount(y[tr], minlength=labels.num_classes)
        pred = np.full(len(te), int(np.argmax(counts)))
        runs.append(classification_report(pred, y[te], classes=np.arange(labels.num_classes)))
    return ClassificationSummary(runs)


# -- training pipelines used by the protocols -------------------------------

TrainFn = Callable[[Graph, int], np.ndarray]


def default_train_fn(cfg: TrainConfig | None = None, seed_matched: bool = False) -> TrainFn:
    """Training callback returning generated embeddings of every node.

    With ``seed_matched`` every node ``v`` of a graph with ``2n`` nodes is
    featurized with the RNG key ``v mod n``, so a node and its mirror copy
    get identical walks.
    """
    from dataclasses import replace

    from .trainer import train

    base = cfg or TrainConfig()

    def fn(g: Graph, seed: int) -> np.ndarray:
        c = replace(base, seed=seed)
        feats = None
        if seed_matched:
            half = g.num_nodes // 2
            keys = np.arange(g.num_nodes) % max(half, 1)
            feats = all_structural_features(g, c.rpr, seed, seed_keys=keys)
        return train(g, c, features=feats).embeddings

    return fn


def transductive_classification(g: Graph, cfg: TrainConfig, train_frac: float = 0.3,
                                repeats: int = 10, seed: int = 0) -> ClassificationSummary:
    """Train once per repeat (seed ``seed + r``) and classify on a fresh split."""
    from dataclasses import replace

    from .trainer import train

    if g.labels is None:
        raise ValidationError("graph has no labels")
    runs = []
    for r in range(repeats):
        emb = train(g, replace(cfg, seed=seed + r)).embeddings
        runs += evaluate_embeddings(emb, g.labels, train_frac, 1, seed=seed + r).runs
    return ClassificationSummary(runs)


def inductive_classification(g: Graph, cfg: TrainConfig, remove_frac: float = 0.2,
                             repeats: int = 10, seed: int = 0) -> ClassificationSummary:
    """Hold out ``remove_frac`` of the nodes (and their edges) during training.

    The classifier is fit on the training nodes' embeddings and evaluated on
    the held-out nodes, whose embeddings are inferred on the full graph.
    """
    from dataclasses import replace

    from .trainer import infer, train

    if g.labels is None:
        raise ValidationError("graph has no labels")
    if not 0.0 < remove_frac < 1.0:
        raise ValidationError("remove_frac must lie in (0, 1)")
    runs = []
    for r in range(repeats):
        rng = np.random.default_rng([seed + r, 7])
        labeled = np.flatnonzero(g.labels.labeled)
        strat = np.zeros(len(labeled), dtype=np.int64) if g.labels.multilabel else g.labels.y[labeled]
        keep_l, held_l = stratified_split(strat, 1.0 - remove_frac, rng)
        held = labeled[held_l]
        keep = np.setdiff1d(np.arange(g.num_nodes), held)
        sub = g.subgraph(keep)
        c = replace(cfg, seed=seed + r)
        res = train(sub, c)
        test_emb = infer(res.model, g, held, seed=seed + r)
        lab_keep = sub.labels.labeled
        tr = np.flatnonzero(lab_keep)
        runs.append(_fit_and_score(res.embeddings[tr], test_emb, sub.labels, tr,
                                   np.arange(len(held)), 1e-4, 500,
                                   labels_test=g.labels.subset(held)))
    return ClassificationSummary(runs)


# -- mirror network -----------------------------------------------------------

@dataclass
class DistanceDistributions:
    """Euclidean distances over mirrored pairs (``mirrored``) and edges (``connected``)."""

    mirrored: np.ndarray
    connected: np.ndarray

    @property
    def mean_mirrored(self) -> float:
        return float(np.mean(self.mirrored)) if len(self.mirrored) else 0.0

    @property
    def mean_connected(self) -> float:
        return float(np.mean(self.connected)) if len(self.connected) else 0.0

    @property
    def ratio(self) -> float:
        """mean(connected) / mean(mirrored); ``inf`` when mirrored pairs coincide."""
        if self.mean_mirrored <= 0.0:
            return float("inf")
        return self.mean_connected / self.mean_mirrored

    def csv(self) -> str:
        lines = ["pair_type,distance"]
        lines += [f"mirrored,{float(x)!r}" for x in self.mirrored]
        lines += [f"connected,{float(x)!r}" for x in self.connected]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.csv())


def mirror_graph(g: Graph) -> Graph:
    """``g`` plus a relabeled disjoint copy with identical content; node ``v`` mirrors ``v + n``."""
    return disjoint_union([g, g], suffixes=["", "~mirror"])


def distance_distributions(emb: np.ndarray, pairs: tuple[np.ndarray, np.ndarray],
                           g: Graph) -> DistanceDistributions:
    a, b = pairs
    s, d, _ = g.edges()
    return DistanceDistributions(np.linalg.norm(emb[a] - emb[b], axis=1),
                                 np.linalg.norm(emb[s] - emb[d], axis=1))


def mirror_experiment(g: Graph, train_fn: TrainFn | None = None, seed: int = 0) -> DistanceDistributions:
    """Train on ``g`` united with its mirror and compare mirrored vs connected distances."""
    train_fn = train_fn or default_train_fn()
    u = mirror_graph(g)
    n = g.num_nodes
    emb = train_fn(u, seed)
    return distance_distributions(emb, (np.arange(n), np.arange(n) + n), u)


def inductive_mirror_experiment(g: Graph, cfg: TrainConfig | None = None, survival: float = 0.2,
                                seed: int = 0) -> DistanceDistributions:
    """Train on two perturbed copies of ``g``, infer on two further copies.

    Mirrored pairs are the same original node in the two test copies.
    """
    from dataclasses import replace

    from .trainer import infer, train

    cfg = replace(cfg or TrainConfig(), seed=seed)
    rng = np.random.default_rng([seed, 11])
    copies = [perturb_network(g, survival, rng) for _ in range(4)]
    train_g = disjoint_union(copies[:2])
    test_g = disjoint_union(copies[2:])
    res = train(train_g, cfg)
    emb = infer(res.model, test_g, seed=seed)
    n = g.num_nodes
    return distance_distributions(emb, (np.arange(n), np.arange(n) + n), test_g)


def perturb_network(g: Graph, s: float, rng: np.random.Generator,
                    swap_content: bool = True) -> Graph:
    """Keep each edge with probability ``s``; in binary content move one 1 to a 0 slot per node."""
    if not 0.0 <= s <= 1.0:
        raise ValidationError("survival probability must lie in [0, 1]")
    src, dst, w = g.edges()
    keep = rng.random(len(src)) < s
    content = g.content
    if swap_content and g.content_dim:
        if np.isin(content, (0.0, 1.0)).all():
            content = content.copy()
            for row in content:
                ones = np.flatnonzero(row == 1.0)
                zeros = np.flatnonzero(row == 0.0)
                if len(ones) and len(zeros):
                    a = ones[rng.integers(len(ones))]
                    b = zeros[rng.integers(len(zeros))]
                    row[a], row[b] = 0.0, 1.0
        else:
            warnings.warn("content is not binary; skipping the content swap", stacklevel=2)
    return g.with_edges(src[keep], dst[keep], w[keep], content)


# -- correlation --------------------------------------------------------------

def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if den == 0:
        raise ValidationError("correlation undefined: a series has zero variance")
    return float((xc @ yc) / den)


def correlations(x, y) -> dict[str, float]:
    """Pearson r and Spearman rho (average ranks for ties)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be equal-length 1-D series")
    if len(x) < 3:
        raise ValidationError("need at least 3 pairs for a correlation")
    return {"pearson": _pearson(x, y), "spearman": _pearson(rankdata(x), rankdata(y))}


def structural_correlation(g: Graph, feats: FeatureTable, embeddings) -> dict[str, float]:
    """Correlate DTW distance of descriptors with embedding distance over all edges."""
    s, d, _ = g.edges()
    if len(s) < 3:
        raise ValidationError("need at least 3 connected pairs")
    vals = feats.values
    x = dtw_many(vals[s], vals[d])
    emb = np.asarray(embeddings, dtype=np.float64)
    y = np.linalg.norm(emb[s] - emb[d], axis=1)
    return correlations(x, y)
