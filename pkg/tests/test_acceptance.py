"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
quantities before asserting.  Criterion 11 needs prepared Cora files in the
directory named by ``RPREMBED_CORA_DIR`` and is skipped otherwise.
"""

import os
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chisquare

from rprembed import evaluation as ev
from rprembed.cli import run
from rprembed.config import TrainConfig
from rprembed.datasets import planted_partition, random_connected_graph, scale_free_graph
from rprembed.graph import load_graph
from rprembed.model import ACTIVATIONS, GeneratorParams, LossConfig, pair_gradients, pair_loss
from rprembed.sampling import CooccurrenceLists, PositiveSampler, SamplingConfig, build_cooccurrence
from rprembed.structfeat import FeatureTable, RprConfig, all_structural_features, exact_rpr
from rprembed.trainer import train

from conftest import ACCEPTANCE_LINES, make_graph

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(request, capsys):
    def emit(number, ok, detail):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(ACCEPTANCE_LINES, []).append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return emit


@pytest.fixture(scope="module")
def oracle_graphs():
    rng = np.random.default_rng(2024)
    graphs = []
    for gi in range(20):
        n = int(rng.integers(5, 51))
        graphs.append(random_connected_graph(n, float(rng.uniform(0.08, 0.4)), seed=gi))
    return graphs


@pytest.fixture(scope="module")
def planted():
    return planted_partition()


@pytest.fixture(scope="module")
def transductive(planted):
    start = time.perf_counter()
    summary = ev.transductive_classification(planted, TrainConfig(), 0.3, 10, seed=0)
    return summary, time.perf_counter() - start


def test_criterion_01_rpr_fixed_point(oracle_graphs, report):
    start = time.perf_counter()
    beta = 0.5
    fixed, rows = 0.0, 0.0
    for g in oracle_graphs:
        S = exact_rpr(g, beta)
        P = g.transition_matrix()
        # every row s satisfies s = beta P^T s + (1 - beta) e_root
        fixed = max(fixed, np.abs(S - (beta * S @ P + (1 - beta) * np.eye(g.num_nodes))).max())
        rows = max(rows, np.abs(S.sum(axis=1) - 1.0).max())
    elapsed = time.perf_counter() - start
    ok = fixed <= 1e-10 and rows <= 1e-10 and elapsed < 5.0
    report(1, ok, f"max fixed-point residual {fixed:.2e}, max row-sum error {rows:.2e}, "
                  f"{elapsed:.2f}s")


def test_criterion_02_monte_carlo_convergence(oracle_graphs, report):
    start = time.perf_counter()
    k = 8
    cfg = RprConfig(beta=0.5, k=k, m=500, l=200)
    assert cfg.m * cfg.l >= 10**5
    worst = 0.0
    for gi, g in enumerate(oracle_graphs):
        S = exact_rpr(g, cfg.beta)
        T = all_structural_features(g, cfg, seed=gi)
        for v in range(g.num_nodes):
            top = np.sort(S[v])[::-1][:k]
            top = top / top.sum()
            est = T.values[v]
            l1 = np.abs(est[:len(top)] - top).sum() + est[len(top):].sum()
            worst = max(worst, l1)
    two = all_structural_features(make_graph(2, [(0, 1)]), replace(cfg, k=2), seed=0)
    two_err = np.abs(two.values[0] - [2 / 3, 1 / 3]).max()
    elapsed = time.perf_counter() - start
    ok = worst <= 0.05 and two_err <= 0.02 and elapsed < 60.0
    report(2, ok, f"worst top-{k} L1 {worst:.4f}, two-node error {two_err:.4f}, {elapsed:.1f}s")


def test_criterion_03_gradient_fidelity(report):
    start = time.perf_counter()
    worst = 0.0
    h = 1e-5
    for t in range(100):
        rng = np.random.default_rng([3, t])
        f, d, n, K = (int(x) for x in rng.integers([1, 1, 4, 1], [6, 5, 9, 4]))
        activation = ACTIVATIONS[t % len(ACTIVATIONS)]
        gen = GeneratorParams.init(f, d, rng, activation, use_bias=bool(t % 2))
        gen.W[:] = rng.normal(scale=0.8, size=gen.W.shape)
        if gen.use_bias:
            gen.bias[:] = rng.normal(scale=0.3, size=d)
        W_S = rng.normal(scale=0.7, size=(n, d))
        agg = rng.normal(size=(n, f))
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        ne, ns = rng.integers(0, n, size=(2, K)), rng.integers(0, n, size=(2, K))
        lam1 = float(rng.uniform(0, 0.6))
        cfg = LossConfig(lam1, float(rng.uniform(0, 1 - lam1)), neg_K=K)
        grads = pair_gradients(gen, W_S, agg, i, j, ne, ns, cfg)
        pairs = [(grads.W_M, gen.W), (grads.W_S, W_S)]
        if gen.use_bias:
            pairs.append((grads.bias, gen.bias))
        for analytic, arr in pairs:
            numeric = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = pair_loss(gen, W_S, agg, i, j, ne, ns, cfg)
                arr[idx] = old - h
                down = pair_loss(gen, W_S, agg, i, j, ne, ns, cfg)
                arr[idx] = old
                numeric[idx] = (up - down) / (2 * h)
            scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
            worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 30.0
    report(3, ok, f"max relative error {worst:.2e} over 100 instances, {elapsed:.1f}s")


def test_criterion_04_sampler_statistics(report):
    start = time.perf_counter()
    alpha, draws = 0.3, 100_000
    g = random_connected_graph(30, 0.15, seed=8)
    feats = all_structural_features(g, RprConfig(k=6, m=5, l=20), seed=0)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)
    sampler = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=alpha))
    sampler.precompute()
    rng = np.random.default_rng(0)
    freq = sum(sampler.draw(i % g.num_nodes, rng)[1] for i in range(draws)) / draws

    tri = make_graph(3, [(0, 1), (1, 2), (0, 2)])
    vals = np.array([[1.0, 0.0], [1.0, 0.0], [0.5, 0.5]])
    table = FeatureTable(vals, np.tile(np.arange(2), (3, 1)))
    empty = CooccurrenceLists(np.zeros(4, dtype=np.int64), np.zeros(0, dtype=np.int64))
    worked = PositiveSampler(tri, table, empty, SamplingConfig(alpha=1.0))
    picks = np.array([worked.sample(0, rng) for _ in range(10_000)])
    counts = np.array([np.sum(picks == 1), np.sum(picks == 2)])
    p = chisquare(counts, 10_000 * np.array([2 / 3, 1 / 3])).pvalue
    elapsed = time.perf_counter() - start
    ok = abs(freq - alpha) <= 0.01 and p > 0.01 and elapsed < 30.0
    report(4, ok, f"structural-branch frequency {freq:.4f} (alpha {alpha}), "
                  f"worked example chi-square p {p:.3f}, {elapsed:.1f}s")


def test_criterion_05_degree_pruning_equivalence(report):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        n = 64 - 8 * seed
        g = random_connected_graph(n, 0.08, seed=100 + seed)
        feats = all_structural_features(g, RprConfig(k=8, m=6, l=12), seed=seed)
        cooc = build_cooccurrence(g, SamplingConfig(), seed)
        cfg = SamplingConfig(alpha=1.0, cand_factor=1 + seed % 2)
        pruned = PositiveSampler(g, feats, cooc, cfg)
        full = PositiveSampler(g, feats, cooc, cfg, full_scan=True)
        for i in range(n):
            cands, p = pruned.structural_distribution(i)
            all_c, all_p = full.structural_distribution(i)
            sub = all_p[np.searchsorted(all_c, cands)]
            worst = max(worst, float(np.abs(p - sub / sub.sum()).max()))
    elapsed = time.perf_counter() - start
    # both sides are the same similarities renormalized, so only rounding may differ
    ok = worst <= 1e-15 and elapsed < 10.0
    report(5, ok, f"max probability difference {worst:.1e}, {elapsed:.2f}s")


def test_criterion_06_mirror_structural_identity(report):
    start = time.perf_counter()
    g = scale_free_graph(30, seed=0)
    ratios = [ev.mirror_experiment(g, ev.default_train_fn(TrainConfig()), seed).ratio
              for seed in range(5)]
    elapsed = time.perf_counter() - start
    wins = sum(r > 3 for r in ratios)
    ok = wins >= 4 and elapsed < 300.0
    report(6, ok, f"connected/mirrored ratios {np.round(ratios, 2).tolist()}, "
                  f"{wins}/5 above 3, {elapsed:.1f}s")


def test_criterion_07_classification_lift(planted, transductive, report):
    start = time.perf_counter()
    summary, train_time = transductive
    acc = summary.mean("accuracy")
    raw = ev.evaluate_embeddings(planted.content, planted.labels, 0.3, 10, seed=0).mean("accuracy")
    majority = ev.majority_baseline(planted.labels, 0.3, 10, seed=0).mean("accuracy")
    elapsed = train_time + time.perf_counter() - start
    ok = acc >= 0.8 and acc - raw >= 0.05 and acc - majority >= 0.05 and elapsed < 300.0
    report(7, ok, f"transductive {acc:.3f}, raw features {raw:.3f}, majority {majority:.3f}, "
                  f"{elapsed:.1f}s")


def test_criterion_08_inductive_generalization(planted, transductive, report):
    start = time.perf_counter()
    trans = transductive[0].mean("accuracy")
    ind = ev.inductive_classification(planted, TrainConfig(), 0.2, 10, seed=0).mean("accuracy")
    elapsed = time.perf_counter() - start
    ok = abs(trans - ind) <= 0.10 and elapsed < 300.0
    report(8, ok, f"inductive {ind:.3f} vs transductive {trans:.3f}, {elapsed:.1f}s")


def test_criterion_09_structural_correlation(planted, report):
    start = time.perf_counter()
    rhos = []
    for seed in range(10):
        res = train(planted, replace(TrainConfig(), seed=seed))
        rhos.append(ev.structural_correlation(planted, res.features, res.embeddings)["spearman"])
    elapsed = time.perf_counter() - start
    wins = sum(r > 0.2 for r in rhos)
    report(9, wins >= 8, f"Spearman rho {np.round(rhos, 3).tolist()}, {wins}/10 above 0.2, "
                         f"{elapsed:.1f}s")


def test_criterion_10_determinism(tmp_path, report):
    start = time.perf_counter()
    root = resources.files("rprembed") / "data"
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.bin"
        code = run(["train", "--edges", str(root / "smoke_edges.tsv"),
                    "--features", str(root / "smoke_features.tsv"), "--out-model", str(out),
                    "--seed", "42", "--threads", "1"])
        assert code == 0
        blobs.append(out.read_bytes())
    elapsed = time.perf_counter() - start
    ok = blobs[0] == blobs[1] and elapsed < 60.0
    report(10, ok, f"model files identical: {blobs[0] == blobs[1]} "
                   f"({len(blobs[0])} bytes), {elapsed:.1f}s")


@pytest.mark.fullscale
@pytest.mark.skipif(not os.environ.get("RPREMBED_CORA_DIR"), reason="RPREMBED_CORA_DIR not set")
def test_criterion_11_cora_full_scale(report):
    root = Path(os.environ["RPREMBED_CORA_DIR"])
    g = load_graph(root / "edges.tsv", root / "features.tsv", root / "labels.tsv")
    start = time.perf_counter()
    summary = ev.transductive_classification(g, TrainConfig(), 0.3, 10, seed=0)
    acc = summary.mean("accuracy")
    elapsed = time.perf_counter() - start
    report(11, acc >= 0.70, f"Cora transductive accuracy {acc:.3f} (reference 0.837), "
                            f"{elapsed:.0f}s")
