import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poplex.partition import (FibonacciGrid, Partition, WhiteningTransform,
                              assign, balance_metrics, fibonacci_grid,
                              fit_whitening, retention)
from poplex.sgns import EmbeddingMatrix


class TestWhitening:
    def test_fitted_data_white(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((5000, 12)) @ rng.standard_normal((12, 12)) + 5.0
        wt = fit_whitening(X)
        Xw = wt.transform(X)
        assert np.abs(Xw.mean(0)).max() < 1e-8
        C = (Xw - Xw.mean(0)).T @ (Xw - Xw.mean(0)) / (len(Xw) - 1)
        assert np.abs(C - np.eye(12)).max() < 1e-6

    def test_already_white_gives_identity(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((8000, 10))
        wt1 = fit_whitening(X)
        Xw = wt1.transform(X)
        wt2 = fit_whitening(Xw)
        assert np.abs(wt2.matrix - np.eye(10)).max() < 1e-6
        assert np.abs(wt2.mean).max() < 1e-6

    def test_anisotropic_gaussian_monte_carlo(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((10_000, 2)) * np.array([10.0, 1.0])
        wt = fit_whitening(X)
        Xw = wt.transform(rng.standard_normal((10_000, 2)) * np.array([10.0, 1.0]))
        C = np.cov(Xw, rowvar=False)
        assert np.abs(C - np.eye(2)).max() < 1e-1

    def test_rank_deficient_floor(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((500, 4))
        X[:, 3] = X[:, 2]  # degenerate direction
        wt = fit_whitening(X, eps=1e-9)
        Xw = wt.transform(X)
        assert np.all(np.isfinite(Xw))
        assert Xw.var(axis=0, ddof=1).max() <= 1.0 + 1e-9

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="rows"):
            fit_whitening(np.ones((5, 8)))

    def test_non_finite_rejected(self):
        X = np.ones((100, 3))
        X[0, 0] = np.nan
        with pytest.raises(ValueError):
            fit_whitening(X)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((300, 6)) * np.arange(1, 7)
        w1 = fit_whitening(X)
        w2 = fit_whitening(X.copy())
        assert np.array_equal(w1.matrix, w2.matrix)

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        wt = fit_whitening(rng.standard_normal((100, 4)))
        path = str(tmp_path / "w.wht")
        wt.save(path)
        back = WhiteningTransform.load(path)
        assert np.array_equal(back.matrix, wt.matrix)
        assert np.array_equal(back.mean, wt.mean)
        assert back.eps == wt.eps


class TestFibonacciGrid:
    def test_circle_gaps_equal(self):
        grid = fibonacci_grid(10, 2)
        ang = np.sort(np.arctan2(grid.directions[:, 1], grid.directions[:, 0]))
        gaps = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
        ideal = 2 * np.pi / 10
        assert np.abs(gaps - ideal).max() / ideal <= 0.20

    def test_sphere_min_angle(self):
        grid = fibonacci_grid(100, 3)
        G = grid.directions @ grid.directions.T
        np.fill_diagonal(G, -1.0)
        assert np.degrees(np.arccos(G.max())) > 10.0

    @pytest.mark.parametrize("k,d", [(1, 2), (10, 2), (100, 3), (50, 8),
                                     (100, 32), (100, 128)])
    def test_unit_norms_and_distinct(self, k, d):
        grid = fibonacci_grid(k, d)
        norms = np.linalg.norm(grid.directions, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-9
        if k > 1:
            G = grid.directions @ grid.directions.T
            np.fill_diagonal(G, -1.0)
            assert G.max() < 1.0 - 1e-12

    def test_deterministic(self):
        g1 = fibonacci_grid(64, 32)
        g2 = fibonacci_grid(64, 32)
        assert np.array_equal(g1.directions, g2.directions)
        assert g1.fingerprint() == g2.fingerprint()

    def test_high_dim_isotropic_balance(self):
        grid = fibonacci_grid(100, 128)
        rng = np.random.default_rng(6)
        X = rng.standard_normal((100_000, 128))
        part = assign(X, grid)
        metrics = balance_metrics(part)
        assert metrics["max_share"] < 3.0 / 100

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            fibonacci_grid(0, 3)
        with pytest.raises(ValueError):
            fibonacci_grid(5, 1)

    def test_roundtrip(self, tmp_path):
        grid = fibonacci_grid(20, 16)
        path = str(tmp_path / "g.grd")
        grid.save(path)
        back = FibonacciGrid.load(path)
        assert np.array_equal(back.directions, grid.directions)
        assert back.construction == grid.construction


class TestAssign:
    def test_direction_vector_goes_to_own_cluster(self):
        grid = fibonacci_grid(12, 3)
        part = assign(grid.directions.copy(), grid)
        assert part.assignment.tolist() == list(range(12))

    def test_tie_breaks_to_lowest_index(self):
        dirs = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        grid = FibonacciGrid(dirs, "circle2d")
        x = np.array([[1.0, 1.0]])  # equidistant between clusters 0 and 1
        part = assign(x, grid)
        assert part.assignment[0] == 0

    def test_zero_vector_unassignable(self):
        grid = fibonacci_grid(5, 2)
        part = assign(np.array([[0.0, 0.0], [1.0, 0.0]]), grid)
        assert part.assignment[0] == -1
        assert part.num_unassigned == 1
        assert part.counts.sum() == 1

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        grid = fibonacci_grid(30, 8)
        X = rng.standard_normal((500, 8))
        p1 = assign(X, grid)
        p2 = assign(X * 37.5, grid)
        assert np.array_equal(p1.assignment, p2.assignment)

    def test_dimension_mismatch(self):
        grid = fibonacci_grid(5, 3)
        with pytest.raises(ValueError, match="mismatch"):
            assign(np.ones((4, 2)), grid)

    def test_embedding_matrix_input_uses_person_rows(self):
        grid = fibonacci_grid(5, 4)
        vecs = np.random.default_rng(8).standard_normal((12, 4)).astype(np.float32)
        emb = EmbeddingMatrix(vecs, {"num_nodes": 10})
        part = assign(emb, grid)
        assert len(part.assignment) == 10

    def test_whitened_assignment(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((2000, 8)) * np.geomspace(1, 20, 8)
        grid = fibonacci_grid(20, 8)
        wt = fit_whitening(X)
        raw = balance_metrics(assign(X, grid))
        white = balance_metrics(assign(X, grid, wt))
        assert white["gini"] < raw["gini"]


class TestBalanceMetrics:
    def test_uniform_partition(self):
        part = Partition(np.repeat(np.arange(10), 5), 10, "g")
        m = balance_metrics(part)
        assert m["gini"] == pytest.approx(0.0, abs=1e-12)
        lorenz = np.asarray(m["lorenz"])
        assert np.allclose(lorenz, np.arange(1, 11) / 10)

    def test_single_cluster_hoards_everything(self):
        part = Partition(np.zeros(100, dtype=np.int32), 8, "g")
        m = balance_metrics(part)
        assert m["gini"] == pytest.approx((8 - 1) / 8)
        assert m["clusters_holding_half"] == 1

    def test_empty_partition_rejected(self):
        part = Partition(np.full(5, -1, dtype=np.int32), 4, "g")
        with pytest.raises(ValueError):
            balance_metrics(part)


class TestRetention:
    def test_identical_partitions(self):
        a = Partition(np.arange(50) % 7, 7, "g")
        assert retention(a, a) == 1.0

    def test_random_relabel_near_uniform(self):
        rng = np.random.default_rng(10)
        n, k = 100_000, 100
        base = Partition(rng.integers(0, k, n).astype(np.int32), k, "g")
        later = Partition(rng.integers(0, k, n).astype(np.int32), k, "g")
        r = retention(base, later)
        assert abs(r - 0.01) < 0.003

    def test_grid_fingerprint_mismatch(self):
        a = Partition(np.zeros(5, dtype=np.int32), 3, "g1")
        b = Partition(np.zeros(5, dtype=np.int32), 3, "g2")
        with pytest.raises(ValueError, match="grids"):
            retention(a, b)

    def test_common_ids_subset(self):
        a = Partition(np.array([0, 1, 2, 3], dtype=np.int32), 4, "g")
        b = Partition(np.array([0, 9, 2, 9], dtype=np.int32) % 4, 4, "g")
        r = retention(a, b, common_ids=np.array([0, 2]))
        assert r == 1.0

    def test_partition_roundtrip(self, tmp_path):
        part = Partition(np.array([0, 1, -1, 1], dtype=np.int32), 3, "gfp", "efp")
        path = str(tmp_path / "p.prt")
        part.save(path)
        back = Partition.load(path)
        assert np.array_equal(back.assignment, part.assignment)
        assert back.k == 3
        assert back.grid_fingerprint == "gfp"
        assert back.num_unassigned == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(2, 6))
def test_assign_scale_invariance_property(k, d):
    rng = np.random.default_rng(k * 10 + d)
    grid = fibonacci_grid(k, d)
    X = rng.standard_normal((50, d))
    c = float(rng.uniform(0.01, 100.0))
    assert np.array_equal(assign(X, grid).assignment,
                          assign(c * X, grid).assignment)
