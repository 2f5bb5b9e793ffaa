import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from rprembed.datasets import random_connected_graph
from rprembed.errors import DegenerateNodeError, ValidationError
from rprembed.sampling import (CooccurrenceLists, NegativeTable, PositiveSampler, SamplingConfig,
                               build_cooccurrence, candidate_window, cooccurrence_from_walks,
                               dtw_distance, dtw_many, generate_walks, load_walks,
                               sample_negatives, sample_positive, save_walks,
                               structural_candidates)
from rprembed.structfeat import FeatureTable, RprConfig, all_structural_features

from conftest import make_graph


def brute_dtw(a, b):
    """Minimum cost over every monotone alignment path, enumerated explicitly."""
    n, m = len(a), len(b)
    best = np.inf

    def walk(i, j, cost):
        nonlocal best
        cost += abs(a[i] - b[j])
        if i == n - 1 and j == m - 1:
            best = min(best, cost)
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def table(values):
    values = np.asarray(values, dtype=np.float64)
    n, k = values.shape
    return FeatureTable(values, np.tile(np.arange(k), (n, 1)) % n)


def empty_cooc(n):
    return CooccurrenceLists(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))


# -- configuration --------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(alpha=-0.1), dict(alpha=1.5), dict(window=0), dict(neg_K=0)])
def test_sampling_config_rejects_invalid(kw):
    with pytest.raises(ValidationError):
        SamplingConfig(**kw)


# -- co-occurrence ---------------------------------------------------------------------

def test_cooccurrence_forced_walk():
    lists = cooccurrence_from_walks([np.array([0, 1, 0])], 2, window=1)
    assert sorted(lists[0].tolist()) == [1, 1]
    assert sorted(lists[1].tolist()) == [0, 0]


def test_cooccurrence_window_and_self_pairs():
    lists = cooccurrence_from_walks(np.array([[0, 1, 0, 2]]), 3, window=2)
    # pairs within distance 2: (0,1) (1,0) (0,2) at distance 1, (0,0) dropped, (1,2) at 2
    assert sorted(lists[0].tolist()) == [1, 1, 2]
    assert sorted(lists[1].tolist()) == [0, 0, 2]
    assert sorted(lists[2].tolist()) == [0, 1]


def test_cooccurrence_isolated_node_empty():
    g = make_graph(3, [(0, 1)])
    lists = build_cooccurrence(g, SamplingConfig(), seed=0)
    assert len(lists[2]) == 0
    assert len(lists[0]) > 0


def test_cooccurrence_triangle_covers_both_others(triangle):
    lists = build_cooccurrence(triangle, SamplingConfig(window=2, walks_per_node=10, walk_len=40), 1)
    for i in range(3):
        assert set(lists[i].tolist()) == set(range(3)) - {i}


def test_generate_walks_are_paths(rng):
    g = random_connected_graph(12, 0.25, seed=1)
    walks = generate_walks(g, 3, 9, rng)
    assert walks.shape == (36, 9)
    np.testing.assert_array_equal(walks[:12, 0], np.arange(12))
    for w in walks:
        for a, b in zip(w[:-1], w[1:]):
            assert b in g.neighbors(int(a))[0]


def test_cooccurrence_deterministic_under_seed():
    g = random_connected_graph(15, 0.2, seed=2)
    a = build_cooccurrence(g, SamplingConfig(), seed=5)
    b = build_cooccurrence(g, SamplingConfig(), seed=5)
    np.testing.assert_array_equal(a.items, b.items)
    np.testing.assert_array_equal(a.indptr, b.indptr)


def test_walk_corpus_round_trip(tmp_path, rng):
    g = make_graph(3, [(0, 1), (1, 2)], node_ids=["x", "y", "z"])
    walks = generate_walks(g, 2, 5, rng)
    save_walks(tmp_path / "w.txt", walks, g)
    assert (tmp_path / "w.txt").read_text().split("\n")[0].split()[0] == "x"
    back = load_walks(tmp_path / "w.txt", g)
    np.testing.assert_array_equal(np.array(back), walks)
    pinned = cooccurrence_from_walks(back, 3, 2)
    np.testing.assert_array_equal(pinned.items, cooccurrence_from_walks(walks, 3, 2).items)


# -- DTW --------------------------------------------------------------------------------

def test_dtw_examples():
    assert dtw_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert dtw_distance([0], [5]) == 5.0
    assert dtw_distance([1, 2], [2]) == 1.0


def test_dtw_empty_rejected():
    with pytest.raises(ValidationError):
        dtw_distance([], [1.0])


def test_dtw_matches_alignment_enumeration():
    seqs = [s for n in range(1, 5) for s in itertools.product((0, 1, 2), repeat=n)]
    for a in seqs:
        for b in seqs:
            assert dtw_distance(a, b) == brute_dtw(a, b)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=7),
       st.lists(st.floats(-5, 5), min_size=1, max_size=7))
def test_dtw_symmetric_nonnegative(a, b):
    d = dtw_distance(a, b)
    assert d >= 0
    assert d == pytest.approx(dtw_distance(b, a), abs=1e-12)
    assert dtw_distance(a, a) == 0.0


def test_dtw_many_matches_pairwise(rng):
    A = rng.random((40, 6))
    B = rng.random((40, 6))
    np.testing.assert_allclose(dtw_many(A, B), [dtw_distance(a, b) for a, b in zip(A, B)])


# -- candidates ------------------------------------------------------------------------------

def test_candidates_two_nodes(two_node):
    assert list(structural_candidates(two_node, 0)) == [1]


def test_candidates_clip_at_left_boundary():
    g = make_graph(10, [(i, i + 1) for i in range(9)] + [(0, 5)])
    first = int(g.degree_order[0])
    cands = structural_candidates(g, first, cand_factor=1)
    pos = g.degree_rank[cands]
    assert np.all(pos > 0)
    assert len(cands) == candidate_window(10, 1)


def test_candidates_64_nodes():
    g = random_connected_graph(64, 0.08, seed=3)
    assert candidate_window(64, 1) == 6
    for i in range(64):
        c = structural_candidates(g, i, cand_factor=1)
        assert len(c) <= 12 and i not in c
        assert np.all(np.abs(g.degree_rank[c] - g.degree_rank[i]) <= 6)


# -- positive sampler ---------------------------------------------------------------------------

def test_alpha_zero_draws_from_cooccurrence(rng):
    g = random_connected_graph(20, 0.2, seed=6)
    feats = all_structural_features(g, RprConfig(k=4, m=5, l=10), seed=0)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)
    sampler = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=0.0))
    for i in range(20):
        allowed = set(cooc[i].tolist())
        for _ in range(20):
            assert sample_positive(sampler, i, rng) in allowed


def test_alpha_one_single_candidate(two_node, rng):
    feats = table([[1.0, 0.0], [0.5, 0.5]])
    sampler = PositiveSampler(two_node, feats, empty_cooc(2), SamplingConfig(alpha=1.0))
    assert all(sampler.sample(0, rng) == 1 for _ in range(50))


def test_worked_similarity_distribution(triangle, rng):
    feats = table([[1.0, 0.0], [1.0, 0.0], [0.5, 0.5]])
    sampler = PositiveSampler(triangle, feats, empty_cooc(3), SamplingConfig(alpha=1.0))
    cands, probs = sampler.structural_distribution(0)
    assert list(cands) == [1, 2]
    np.testing.assert_allclose(probs, [2 / 3, 1 / 3])
    draws = np.array([sampler.sample(0, rng) for _ in range(10_000)])
    counts = np.array([np.sum(draws == 1), np.sum(draws == 2)])
    assert abs(counts[0] / 10_000 - 2 / 3) <= 0.02
    assert chisquare(counts, 10_000 * np.array([2 / 3, 1 / 3])).pvalue > 0.01


def test_branch_fallbacks(rng):
    g = make_graph(3, [(0, 1)])
    feats = table([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    cooc = cooccurrence_from_walks([np.array([0, 1])], 3, 1)
    # no structural candidates at all: falls back to the local list
    local_only = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=1.0, cand_factor=0))
    assert local_only.draw(0, rng) == (1, False)
    # node 2 has an empty local list: falls back to the structural branch
    struct_only = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=0.0))
    node, used = struct_only.draw(2, rng)
    assert used and node in (0, 1)
    # neither branch available
    dead = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=0.5, cand_factor=0))
    assert not dead.can_sample(2)
    with pytest.raises(DegenerateNodeError):
        dead.draw(2, rng)


def test_branch_frequency_matches_alpha():
    g = random_connected_graph(30, 0.15, seed=8)
    feats = all_structural_features(g, RprConfig(k=6, m=5, l=20), seed=0)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)
    sampler = PositiveSampler(g, feats, cooc, SamplingConfig(alpha=0.3))
    sampler.precompute()
    rng = np.random.default_rng(0)
    used = sum(sampler.draw(i % 30, rng)[1] for i in range(100_000))
    assert abs(used / 100_000 - 0.3) <= 0.01


def test_precompute_equals_lazy_distribution():
    g = random_connected_graph(25, 0.2, seed=9)
    feats = all_structural_features(g, RprConfig(k=5, m=4, l=10), seed=1)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)
    lazy = PositiveSampler(g, feats, cooc, SamplingConfig())
    eager = PositiveSampler(g, feats, cooc, SamplingConfig())
    eager.precompute()
    for i in range(25):
        c1, p1 = lazy.structural_distribution(i)
        c2, p2 = eager.structural_distribution(i)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-15)


def test_pruned_distribution_is_renormalized_full_scan():
    g = random_connected_graph(64, 0.06, seed=10)
    feats = all_structural_features(g, RprConfig(k=8, m=6, l=12), seed=2)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)
    cfg = SamplingConfig(alpha=1.0, cand_factor=1)
    pruned = PositiveSampler(g, feats, cooc, cfg)
    full = PositiveSampler(g, feats, cooc, cfg, full_scan=True)
    for i in range(64):
        cands, p = pruned.structural_distribution(i)
        all_c, all_p = full.structural_distribution(i)
        sub = all_p[np.searchsorted(all_c, cands)]
        np.testing.assert_allclose(p, sub / sub.sum(), rtol=1e-12)


def test_pair_stream_deterministic():
    g = random_connected_graph(20, 0.2, seed=11)
    feats = all_structural_features(g, RprConfig(k=4, m=4, l=10), seed=0)
    cooc = build_cooccurrence(g, SamplingConfig(), 0)

    def stream(seed):
        sampler = PositiveSampler(g, feats, cooc, SamplingConfig())
        r = np.random.default_rng(seed)
        return [sampler.sample(i % 20, r) for i in range(200)]

    assert stream(4) == stream(4)
    assert stream(4) != stream(5)


# -- negatives ---------------------------------------------------------------------------------------

def test_negatives_uniform_on_regular_graph(rng):
    ring = make_graph(8, [(i, (i + 1) % 8) for i in range(8)])
    t = NegativeTable.from_graph(ring)
    counts = np.bincount(sample_negatives(t, [], 100_000, rng), minlength=8)
    assert chisquare(counts).pvalue > 0.01
    np.testing.assert_allclose(counts / 1e5, 1 / 8, atol=3 * np.sqrt(1 / 8 * 7 / 8 / 1e5))


def test_negatives_exclude_all_but_one(star4, rng):
    t = NegativeTable.from_graph(star4)
    assert np.all(sample_negatives(t, [0, 1, 2, 4], 200, rng) == 3)


def test_negatives_degree_power_one_star(star4, rng):
    t = NegativeTable.from_graph(star4, power=1.0)
    np.testing.assert_allclose(t.probs, [0.5, 0.125, 0.125, 0.125, 0.125])
    draws = t.sample(100_000, rng)
    assert abs(np.mean(draws == 0) - 0.5) <= 0.02


def test_negative_table_properties():
    g = make_graph(4, [(0, 1), (1, 2)])
    t = NegativeTable.from_graph(g)
    assert t.probs.sum() == pytest.approx(1.0)
    assert t.probs[3] == 0.0 and np.all(t.probs[:3] > 0)
    np.testing.assert_allclose(t.probs[:3], np.array([1, 2 ** 0.75, 1]) / (2 + 2 ** 0.75))
    with pytest.raises(ValidationError):
        NegativeTable(np.zeros(3))


def test_sample_excluding_per_row(rng):
    t = NegativeTable(np.ones(6))
    excl = np.array([[0, 1], [2, 3], [4, 5]])
    draws = t.sample_excluding((3, 2, 50), excl, rng)
    for b in range(3):
        assert not np.isin(draws[b], excl[b]).any()


def test_sample_excluding_finishes_with_restricted_table(rng):
    # nearly all mass on the excluded nodes, so plain retries cannot succeed
    t = NegativeTable(np.array([1e12, 1e12, 1.0, 1.0]))
    excl = np.array([[0, 1], [0, 2]])
    draws = t.sample_excluding((2, 2, 40), excl, rng, max_retries=1)
    assert np.isin(draws[0], [2, 3]).all()
    assert np.isin(draws[1], [1, 3]).all()
