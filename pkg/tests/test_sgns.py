import numpy as np
import pytest

import poplex._backend as backend
from poplex import _pysgns
from poplex.errors import ConfigError
from poplex.graph import MultiplexGraph, NUM_LAYERS, build_csr_layer
from poplex.sgns import (EmbeddingMatrix, TrainConfig, build_alias_table,
                         build_unigram_table, cosine, init_vectors, pair_gradients,
                         pair_loss, train)
from poplex.walks import WalkConfig, WalkCorpus, generate_walks


def make_corpus(tokens_lists, num_nodes, num_layers=NUM_LAYERS,
                mode="blind", seed=0):
    tokens = np.concatenate([np.asarray(t, dtype=np.uint32) for t in tokens_lists])
    offsets = np.zeros(len(tokens_lists) + 1, dtype=np.int64)
    np.cumsum([len(t) for t in tokens_lists], out=offsets[1:])
    return WalkCorpus(tokens, offsets, num_nodes, num_layers,
                      WalkConfig(mode=mode, seed=seed), year=0)


def two_clique_graph():
    n = 40
    edges = []
    for g in range(2):
        ids = list(range(20 * g, 20 * g + 20))
        edges += [(a, b) for a in ids for b in ids if a < b]
    layers = [build_csr_layer(n, [e[0] for e in edges], [e[1] for e in edges])]
    layers += [build_csr_layer(n, [], []) for _ in range(NUM_LAYERS - 1)]
    return MultiplexGraph(n, layers)


class TestUnigramTable:
    def test_equal_counts_power_one(self):
        corpus = make_corpus([[0], [1]], num_nodes=2, num_layers=0)
        probs = build_unigram_table(corpus, power=1.0)
        assert np.allclose(probs, [0.5, 0.5])

    def test_power_smoothing(self):
        corpus = make_corpus([[0] * 8, [1]], num_nodes=2, num_layers=0)
        probs = build_unigram_table(corpus, power=0.75)
        expected = np.array([8**0.75, 1.0])
        assert np.allclose(probs, expected / expected.sum())

    def test_absent_token_zero_mass(self):
        corpus = make_corpus([[0, 1]], num_nodes=3, num_layers=0)
        probs = build_unigram_table(corpus)
        assert probs[2] == 0.0

    def test_alias_table_matches_distribution(self):
        probs = np.array([0.5, 0.3, 0.2, 0.0])
        prob, alias = build_alias_table(probs)
        # exact enumeration over the alias construction
        mass = np.zeros(4)
        for i in range(4):
            mass[i] += prob[i] / 4
            mass[alias[i]] += (1 - prob[i]) / 4
        assert np.allclose(mass, probs, atol=1e-12)


class TestGradients:
    def test_analytic_matches_finite_difference(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = rng.integers(3, 12)
            u = rng.standard_normal(d)
            v_pos = rng.standard_normal(d)
            v_negs = rng.standard_normal((rng.integers(1, 6), d))
            gu, gp, gn = pair_gradients(u, v_pos, v_negs)
            h = 1e-6

            def fd(vec, idx, setter):
                old = vec[idx]
                vec[idx] = old + h
                lp = pair_loss(u, v_pos, v_negs)
                vec[idx] = old - h
                lm = pair_loss(u, v_pos, v_negs)
                vec[idx] = old
                return (lp - lm) / (2 * h)

            scale = max(np.abs(gu).max(), np.abs(gp).max(), np.abs(gn).max(), 1e-9)
            for i in range(d):
                assert abs(fd(u, i, None) - gu[i]) / scale < 1e-4
                assert abs(fd(v_pos, i, None) - gp[i]) / scale < 1e-4
            for k in range(len(v_negs)):
                for i in range(d):
                    assert abs(fd(v_negs[k], i, None) - gn[k, i]) / scale < 1e-4


class TestTrain:
    def test_clique_separation(self):
        graph = two_clique_graph()
        corpus = generate_walks(graph, WalkConfig(
            mode="blind", walk_length=20, walks_per_node=8, seed=1))
        emb = train(corpus, TrainConfig(dim=16, window=5, negatives=5,
                                        epochs=10, seed=2))
        V = emb.vectors[:40].astype(np.float64)
        Vn = V / np.linalg.norm(V, axis=1, keepdims=True)
        S = Vn @ Vn.T
        within = (S[:20, :20].sum() - 20) / (20 * 19)
        cross = S[:20, 20:].mean()
        assert within > cross

    def test_epochs_zero_disallowed(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0).validate()

    def test_two_token_corpus_one_epoch(self):
        corpus = make_corpus([[0, 1]], num_nodes=2, num_layers=0)
        emb = train(corpus, TrainConfig(dim=4, window=2, negatives=1,
                                        epochs=1, seed=0))
        assert np.all(np.isfinite(emb.vectors))

    def test_empty_corpus_rejected(self):
        corpus = make_corpus([[]], num_nodes=2, num_layers=0)
        with pytest.raises(ValueError):
            train(corpus, TrainConfig(dim=4, epochs=1))

    def test_deterministic_single_worker(self):
        graph = two_clique_graph()
        corpus = generate_walks(graph, WalkConfig(
            mode="blind", walk_length=10, walks_per_node=2, seed=1))
        cfg = TrainConfig(dim=8, epochs=2, seed=5)
        e1 = train(corpus, cfg)
        e2 = train(corpus, cfg)
        assert np.array_equal(e1.vectors, e2.vectors)

    def test_loss_decreases(self):
        graph = two_clique_graph()
        corpus = generate_walks(graph, WalkConfig(
            mode="blind", walk_length=20, walks_per_node=8, seed=1))
        emb = train(corpus, TrainConfig(dim=16, epochs=4, seed=2))
        curve = emb.metadata["loss_curve"]
        assert curve[3] < curve[0]

    def test_multiworker_runs(self):
        graph = two_clique_graph()
        corpus = generate_walks(graph, WalkConfig(
            mode="blind", walk_length=10, walks_per_node=4, seed=1))
        emb = train(corpus, TrainConfig(dim=8, epochs=2, seed=5), workers=3)
        assert np.all(np.isfinite(emb.vectors))

    def test_subsampling_drops_frequent_tokens(self):
        # token 0 vastly over-represented; with subsampling on, training
        # still works and both backends accept the keep-probability table
        walks = [[0, 1, 0, 2, 0, 3] * 5] * 10
        corpus = make_corpus(walks, num_nodes=4, num_layers=0)
        cfg = TrainConfig(dim=4, window=2, negatives=2, epochs=1,
                          subsample_threshold=1e-3, seed=1)
        emb = train(corpus, cfg)
        assert np.all(np.isfinite(emb.vectors))
        orig = backend.sgns_kernel
        backend.sgns_kernel = _pysgns
        try:
            emb_py = train(corpus, cfg)
        finally:
            backend.sgns_kernel = orig
        assert np.all(np.isfinite(emb_py.vectors))

    def test_python_backend_trains(self):
        corpus = make_corpus([[0, 1, 2, 1, 0] * 4], num_nodes=3, num_layers=0)
        orig = backend.sgns_kernel
        backend.sgns_kernel = _pysgns
        try:
            emb = train(corpus, TrainConfig(dim=4, window=2, negatives=2,
                                            epochs=2, seed=1))
        finally:
            backend.sgns_kernel = orig
        assert np.all(np.isfinite(emb.vectors))

    def test_backends_follow_same_draws(self):
        # not bit-identical, but same draw sequence keeps them close early on
        corpus = make_corpus([[0, 1, 2, 3, 2, 1] * 3], num_nodes=4, num_layers=0)
        cfg = TrainConfig(dim=6, window=2, negatives=2, epochs=1, seed=3)
        orig = backend.sgns_kernel
        backend.sgns_kernel = _pysgns
        try:
            e_py = train(corpus, cfg)
        finally:
            backend.sgns_kernel = orig
        e_nat = train(corpus, cfg)
        assert np.abs(e_py.vectors - e_nat.vectors).max() < 1e-3


class TestHubTokens:
    def test_hub_vectors_distinct_after_training(self):
        rng = np.random.default_rng(0)
        n = 60
        per_layer = {}
        for l in range(5):
            perm = rng.permutation(n)
            per_layer[l] = [(int(perm[i]), int(perm[i + 1])) for i in range(0, n - 1, 2)]
        layers = [build_csr_layer(n, [e[0] for e in per_layer[l]],
                                  [e[1] for e in per_layer[l]]) for l in range(5)]
        graph = MultiplexGraph(n, layers)
        corpus = generate_walks(graph, WalkConfig(
            mode="aware", walk_length=20, walks_per_node=6, seed=2))
        emb = train(corpus, TrainConfig(dim=16, epochs=8, seed=3))
        hubs = emb.vectors[n : n + 5].astype(np.float64)
        hn = hubs / np.linalg.norm(hubs, axis=1, keepdims=True)
        S = hn @ hn.T
        np.fill_diagonal(S, 0.0)
        assert S.max() < 0.95


class TestFamilySignal:
    def test_family_pairs_closer_than_random(self):
        from poplex.synth import SyntheticPopulationConfig, generate_synthetic
        from scipy import stats as sp_stats

        cfg = SyntheticPopulationConfig(num_nodes=1200, num_years=1)
        graphs, attrs = generate_synthetic(cfg, seed=4)
        corpus = generate_walks(graphs[0], WalkConfig(
            mode="aware", walk_length=30, walks_per_node=4, seed=5))
        emb = train(corpus, TrainConfig(dim=24, epochs=6, seed=6))
        V = emb.vectors[:1200].astype(np.float64)
        Vn = V / np.linalg.norm(V, axis=1, keepdims=True)
        fam = graphs[0].layers[0]
        rng = np.random.default_rng(7)
        fam_cos, rnd_cos = [], []
        for _ in range(1000):
            v = int(rng.integers(1200))
            nbrs = fam.neighbors_of(v)
            if len(nbrs) == 0:
                continue
            w = int(nbrs[rng.integers(len(nbrs))])
            fam_cos.append(float(Vn[v] @ Vn[w]))
            r = int(rng.integers(1200))
            if r != v:
                rnd_cos.append(float(Vn[v] @ Vn[r]))
        t = sp_stats.ttest_ind(fam_cos, rnd_cos, alternative="greater")
        assert t.pvalue < 0.001


class TestCosine:
    def setup_method(self):
        vecs = np.array([[1, 0], [0, 1], [-1, 0], [0.5, 0.5], [0, 0]],
                        dtype=np.float32)
        self.emb = EmbeddingMatrix(vecs, {"num_nodes": 5})

    def test_self_similarity(self):
        assert cosine(self.emb, 0, 0) == pytest.approx(1.0)

    def test_opposite(self):
        assert cosine(self.emb, 0, 2) == pytest.approx(-1.0)

    def test_orthogonal(self):
        assert cosine(self.emb, 0, 1) == pytest.approx(0.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="zero norm"):
            cosine(self.emb, 0, 4)


class TestEmbeddingIO:
    def test_roundtrip(self, tmp_path):
        vecs = np.random.default_rng(0).standard_normal((7, 4)).astype(np.float32)
        emb = EmbeddingMatrix(vecs, {"num_nodes": 5, "year": 3})
        path = str(tmp_path / "e.bin")
        emb.save(path)
        back = EmbeddingMatrix.load(path)
        assert np.array_equal(back.vectors, vecs)
        assert back.metadata["year"] == 3

    def test_bad_magic(self, tmp_path):
        from poplex.errors import FormatError

        p = tmp_path / "x.bin"
        p.write_bytes(b"WRONGMAG" + b"\x00" * 20)
        with pytest.raises(FormatError, match="x.bin"):
            EmbeddingMatrix.load(str(p))

    def test_text_export(self, tmp_path):
        vecs = np.array([[1.5, -2.25]], dtype=np.float32)
        emb = EmbeddingMatrix(vecs, {"num_nodes": 1})
        path = tmp_path / "e.txt"
        emb.save_text(str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "1 2"
        assert lines[1].split() == ["0", "1.5", "-2.25"]

    def test_trained_mask_roundtrip(self, tmp_path):
        corpus = make_corpus([[0, 2, 0]], num_nodes=4, num_layers=0)
        emb = train(corpus, TrainConfig(dim=4, epochs=1, seed=0))
        path = str(tmp_path / "e.bin")
        emb.save(path)
        mask = EmbeddingMatrix.load(path).trained_mask()
        assert mask.tolist() == [True, False, True, False]

    def test_non_finite_rejected(self):
        bad = np.array([[np.nan, 1.0]], dtype=np.float32)
        with pytest.raises(ValueError):
            EmbeddingMatrix(bad, {})


def test_init_vectors_deterministic_and_bounded():
    a = init_vectors(10, 8, seed=3)
    b = init_vectors(10, 8, seed=3)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 0.5 / 8
