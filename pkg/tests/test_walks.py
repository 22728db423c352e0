import numpy as np
import pytest
from scipy import stats

import poplex._backend as backend
from poplex import _pywalk
from poplex.errors import ConfigError
from poplex.graph import MultiplexGraph, NUM_LAYERS, build_csr_layer
from poplex.rng import Stream
from poplex.walks import (WalkConfig, WalkCorpus, generate_walks, next_step,
                          persistence_stats)


def graph_from_layer_edges(n, per_layer):
    layers = []
    for li in range(NUM_LAYERS):
        edges = per_layer.get(li, [])
        us = [e[0] for e in edges]
        vs = [e[1] for e in edges]
        layers.append(build_csr_layer(n, us, vs))
    return MultiplexGraph(n, layers)


@pytest.fixture(scope="module")
def two_layer_graph():
    # every node active in layers 0 and 1
    n = 30
    ring0 = [(i, (i + 1) % n) for i in range(n)]
    ring1 = [(i, (i + 2) % n) for i in range(n)]
    return graph_from_layer_edges(n, {0: ring0, 1: ring1})


def test_config_validation():
    with pytest.raises(ConfigError):
        WalkConfig(mode="weird").validate()
    with pytest.raises(ConfigError):
        WalkConfig(persistence_p=1.5).validate()
    with pytest.raises(ConfigError):
        WalkConfig(walk_length=1).validate()
    with pytest.raises(ConfigError):
        WalkConfig(walks_per_node=0).validate()


def test_next_step_two_layer_probabilities(two_layer_graph):
    # stay prob = p + (1-p)/2 = 0.9 for p=0.8 with two active layers
    stream = Stream(123)
    stays = 0
    trials = 100_000
    for _ in range(trials):
        _, used = next_step(two_layer_graph, 0, 0, 0.8, stream)
        stays += used == 0
    assert abs(stays / trials - 0.9) < 0.01


def test_next_step_single_active_layer():
    g = graph_from_layer_edges(3, {2: [(0, 1), (1, 2)]})
    stream = Stream(5)
    for _ in range(50):
        nxt, used = next_step(g, 1, 0, 0.8, stream)
        assert used == 2
        assert nxt in (0, 2)


def test_next_step_three_layer_monte_carlo():
    # P(stay) = 0.8 + 0.2/3 with three active layers
    n = 12
    per_layer = {l: [(i, (i + 1 + l) % n) for i in range(n)] for l in range(3)}
    g = graph_from_layer_edges(n, per_layer)
    stream = Stream(7)
    stays = 0
    trials = 100_000
    for _ in range(trials):
        _, used = next_step(g, 0, 0, 0.8, stream)
        stays += used == 0
    assert abs(stays / trials - (0.8 + 0.2 / 3)) < 0.01


def test_next_step_dead_end_returns_none():
    g = graph_from_layer_edges(3, {0: [(1, 2)]})
    assert next_step(g, 0, None, 0.8, Stream(1)) is None


def test_single_edge_aware_walk_shape():
    g = graph_from_layer_edges(2, {0: [(0, 1)]})
    cfg = WalkConfig(mode="aware", walk_length=4, walks_per_node=3, seed=9)
    corpus = generate_walks(g, cfg)
    hub0 = g.num_nodes
    for walk in corpus:
        assert walk.tolist() in ([0, hub0, 1, hub0, 0, hub0, 1],
                                 [1, hub0, 0, hub0, 1, hub0, 0])


def test_walk_counts_and_lengths(two_layer_graph):
    cfg = WalkConfig(mode="blind", walk_length=10, walks_per_node=3, seed=1)
    corpus = generate_walks(two_layer_graph, cfg)
    assert corpus.num_walks == 3 * two_layer_graph.num_nodes
    assert all(len(w) == 10 for w in corpus)


def test_aware_alternation_and_edge_soundness(two_layer_graph):
    cfg = WalkConfig(mode="aware", walk_length=12, walks_per_node=2, seed=3)
    corpus = generate_walks(two_layer_graph, cfg)
    hub_base = corpus.hub_base
    for walk in corpus:
        assert len(walk) % 2 == 1
        persons = walk[0::2]
        hubs = walk[1::2]
        assert (persons < hub_base).all()
        assert (hubs >= hub_base).all()
        for i in range(len(hubs)):
            u, l, v = int(persons[i]), int(hubs[i]) - hub_base, int(persons[i + 1])
            assert v in two_layer_graph.neighbors(l, u)


def test_blind_pairs_are_edges_in_some_layer(two_layer_graph):
    cfg = WalkConfig(mode="blind", walk_length=15, walks_per_node=2, seed=4)
    corpus = generate_walks(two_layer_graph, cfg)
    flat = two_layer_graph.flattened()
    for walk in corpus:
        for a, b in zip(walk[:-1], walk[1:]):
            assert b in flat.neighbors_of(int(a))


def test_isolated_nodes_get_no_walks():
    g = graph_from_layer_edges(5, {0: [(0, 1)]})
    corpus = generate_walks(g, WalkConfig(mode="blind", walk_length=5,
                                          walks_per_node=2, seed=0))
    assert corpus.num_walks == 4  # nodes 2, 3, 4 are isolated
    starts = {int(corpus.walk(i)[0]) for i in range(corpus.num_walks)}
    assert starts == {0, 1}


def test_backend_equivalence(two_layer_graph):
    cfg = WalkConfig(mode="aware", walk_length=20, walks_per_node=4, seed=11)
    native = generate_walks(two_layer_graph, cfg)
    orig = backend.walk_kernel
    backend.walk_kernel = _pywalk
    try:
        pure = generate_walks(two_layer_graph, cfg)
    finally:
        backend.walk_kernel = orig
    assert np.array_equal(native.tokens, pure.tokens)
    assert np.array_equal(native.offsets, pure.offsets)


def test_worker_count_invariance(two_layer_graph):
    cfg = WalkConfig(mode="aware", walk_length=15, walks_per_node=3, seed=77)
    c1 = generate_walks(two_layer_graph, cfg, workers=1)
    c8 = generate_walks(two_layer_graph, cfg, workers=8)
    assert np.array_equal(c1.tokens, c8.tokens)
    assert np.array_equal(c1.offsets, c8.offsets)


def test_determinism_same_seed(two_layer_graph):
    cfg = WalkConfig(mode="aware", walk_length=10, walks_per_node=2, seed=42)
    c1 = generate_walks(two_layer_graph, cfg)
    c2 = generate_walks(two_layer_graph, cfg)
    assert np.array_equal(c1.tokens, c2.tokens)
    c3 = generate_walks(two_layer_graph, WalkConfig(
        mode="aware", walk_length=10, walks_per_node=2, seed=43))
    assert not np.array_equal(c1.tokens, c3.tokens)


def test_flatten_single_layer_uniform_chi_square():
    # star around node 0 with 6 spokes in one layer: successors of 0 uniform
    spokes = [(0, i) for i in range(1, 7)]
    g = graph_from_layer_edges(7, {0: spokes})
    cfg = WalkConfig(mode="flatten", walk_length=2, walks_per_node=100_000, seed=5)
    corpus = generate_walks(g, cfg)
    first = corpus.tokens[corpus.offsets[:-1]]
    second = corpus.tokens[corpus.offsets[:-1] + 1]
    counts = np.bincount(second[first == 0], minlength=7)[1:]
    assert counts.sum() == 100_000
    p = stats.chisquare(counts).pvalue
    assert p > 0.01


def test_flatten_union_not_multiset():
    # edge 0-1 in two layers, 0-2 in one: flatten samples the union set
    g = graph_from_layer_edges(3, {0: [(0, 1)], 1: [(0, 1)], 2: [(0, 2)]})
    cfg = WalkConfig(mode="flatten", walk_length=2, walks_per_node=40_000, seed=6)
    corpus = generate_walks(g, cfg)
    succ = [int(corpus.walk(i)[1]) for i in range(corpus.num_walks)
            if corpus.walk(i)[0] == 0]
    share1 = np.mean([s == 1 for s in succ])
    assert abs(share1 - 0.5) < 0.01  # not 2/3, despite two typed 0-1 edges


def test_persistence_stats_two_layers(two_layer_graph):
    cfg = WalkConfig(mode="aware", persistence_p=0.8, walk_length=40,
                     walks_per_node=20, seed=8)
    corpus = generate_walks(two_layer_graph, cfg)
    out = persistence_stats(corpus, two_layer_graph)
    assert abs(out["overall_stay_frequency"] - 0.9) < 0.01
    assert abs(out["overall_theoretical_stay"] - 0.9) < 1e-9


def test_persistence_stats_p1_and_p0(two_layer_graph):
    c1 = generate_walks(two_layer_graph, WalkConfig(
        mode="aware", persistence_p=1.0, walk_length=30, walks_per_node=5, seed=2))
    assert persistence_stats(c1)["overall_stay_frequency"] == 1.0
    c0 = generate_walks(two_layer_graph, WalkConfig(
        mode="aware", persistence_p=0.0, walk_length=30, walks_per_node=20, seed=2))
    assert abs(persistence_stats(c0)["overall_stay_frequency"] - 0.5) < 0.01


def test_persistence_monotone_in_p(two_layer_graph):
    freqs = []
    for p in (0.2, 0.5, 0.8):
        c = generate_walks(two_layer_graph, WalkConfig(
            mode="aware", persistence_p=p, walk_length=30, walks_per_node=10, seed=2))
        freqs.append(persistence_stats(c)["overall_stay_frequency"])
    assert freqs[0] < freqs[1] < freqs[2]


def test_persistence_stats_rejects_blind(two_layer_graph):
    corpus = generate_walks(two_layer_graph, WalkConfig(
        mode="blind", walk_length=10, walks_per_node=1, seed=2))
    with pytest.raises(ConfigError):
        persistence_stats(corpus)


def test_corpus_file_roundtrip(tmp_path, two_layer_graph):
    cfg = WalkConfig(mode="aware", walk_length=10, walks_per_node=2, seed=13)
    corpus = generate_walks(two_layer_graph, cfg)
    path = str(tmp_path / "c.bin")
    corpus.save(path)
    back = WalkCorpus.load(path)
    assert np.array_equal(back.tokens, corpus.tokens)
    assert np.array_equal(back.offsets, corpus.offsets)
    assert back.config == corpus.config
    assert back.num_nodes == corpus.num_nodes
    assert back.fingerprint() == corpus.fingerprint()


def test_corpus_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 50)
    from poplex.errors import FormatError

    with pytest.raises(FormatError, match="bad.bin"):
        WalkCorpus.load(str(path))


def test_four_node_same_layer_bound(two_layer_graph):
    # with p=0.8 every four-person window keeps one layer w.p. >= p^2 = 0.64
    cfg = WalkConfig(mode="aware", persistence_p=0.8, walk_length=40,
                     walks_per_node=10, seed=21)
    corpus = generate_walks(two_layer_graph, cfg)
    same = total = 0
    for walk in corpus:
        hubs = walk[1::2]
        for i in range(len(hubs) - 2):
            total += 1
            same += hubs[i] == hubs[i + 1] == hubs[i + 2]
    assert same / total >= 0.64 - 0.02
