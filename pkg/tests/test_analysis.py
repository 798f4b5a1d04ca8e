import numpy as np
import pytest

from metakg import analysis, meta
from metakg.episodes import DistributionConfig, RngStream, make_task_distribution


class TestKnnGraph:
    def test_collinear_hand_case(self):
        pts = np.array([[0.0], [1.0], [3.0]])
        adj = analysis.knn_graph(pts, 1)
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert np.array_equal(adj, expected)

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pts = rng.standard_normal((12, 3))
            adj = analysis.knn_graph(pts, 5)
            assert np.array_equal(adj, adj.T)
            assert np.all(np.diag(adj) == 0)

    def test_duplicate_points_tie_break_lower_index(self):
        pts = np.array([[0.0], [0.0], [0.0], [10.0]])
        adj = analysis.knn_graph(pts, 1)
        # node 3's nearest duplicate is node 0 (lowest index)
        assert adj[3, 0] == 1 and adj[3, 1] == 0 and adj[3, 2] == 0

    def test_preconditions(self):
        with pytest.raises(ValueError):
            analysis.knn_graph(np.zeros((3, 2)), 3)
        with pytest.raises(ValueError):
            analysis.knn_graph(np.zeros((3, 2)), 0)


class TestFourierBasis:
    def test_connected_graph_null_space(self):
        adj = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        w, u = analysis.graph_fourier_basis(adj)
        assert np.isclose(w[0], 0.0, atol=1e-12)
        v0 = u[:, 0]
        assert np.allclose(v0, v0[0])

    def test_disconnected_components_multiplicity(self):
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = 1
        adj[2, 3] = adj[3, 2] = 1
        w, _ = analysis.graph_fourier_basis(adj)
        assert np.sum(np.isclose(w, 0.0, atol=1e-10)) == 2

    def test_path_graph_p3_eigenvalues(self):
        adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        w, _ = analysis.graph_fourier_basis(adj)
        # independently: eigvals of [[1,-1,0],[-1,2,-1],[0,-1,1]]
        expected = np.sort(np.linalg.eigvalsh(np.array(
            [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])))
        assert np.allclose(w, expected, atol=1e-12)
        assert np.allclose(w, [0.0, 1.0, 3.0], atol=1e-10)

    def test_orthonormal(self):
        rng = np.random.default_rng(1)
        adj = analysis.knn_graph(rng.standard_normal((15, 3)), 4)
        _, u = analysis.graph_fourier_basis(adj)
        assert np.allclose(u.T @ u, np.eye(15), atol=1e-8)


class TestConcentration:
    def basis(self, n=10, seed=2):
        rng = np.random.default_rng(seed)
        adj = analysis.knn_graph(rng.standard_normal((n, 3)), 3)
        return analysis.graph_fourier_basis(adj)

    def test_constant_signal_all_low_frequency(self):
        adj = np.ones((6, 6)) - np.eye(6)  # connected
        basis = analysis.graph_fourier_basis(adj)
        rep = analysis.gft_and_concentration(np.full(6, 3.7), basis)
        for q in (0.1, 0.5, 1.0):
            assert np.isclose(rep.concentration(q), 1.0, atol=1e-12)

    def test_highest_frequency_eigenvector(self):
        basis = self.basis()
        _, u = basis
        rep = analysis.gft_and_concentration(u[:, -1], basis)
        assert rep.concentration(0.9) < 1e-16
        assert np.isclose(rep.concentration(1.0), 1.0)

    def test_parseval(self):
        basis = self.basis(n=20, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(10):
            sig = rng.standard_normal(20)
            rep = analysis.gft_and_concentration(sig, basis)
            assert abs((rep.coefficients**2).sum() - (sig**2).sum()) <= 1e-8

    def test_monotone_nondecreasing(self):
        basis = self.basis(n=15, seed=5)
        rep = analysis.gft_and_concentration(np.random.default_rng(6).standard_normal(15), basis)
        qs = np.linspace(0.05, 1.0, 20)
        vals = [rep.concentration(q) for q in qs]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
        assert np.isclose(vals[-1], 1.0)

    def test_planted_low_frequency_signal(self):
        basis = self.basis(n=50, seed=7)
        _, u = basis
        sig = u[:, 1]  # second-lowest graph frequency
        rep = analysis.gft_and_concentration(sig, basis)
        assert rep.concentration(0.2) >= 0.99


@pytest.fixture(scope="module")
def setup():
    dcfg = DistributionConfig(n_datasets=1, classes_per_dataset=10, input_dim=6, n_modes=2)
    dist = make_task_distribution(dcfg, RngStream(8, 0))
    cfg = meta.TrainConfig(
        n_way=2, k_shot=1, q_per_class=3, kg_dim=6, kg_nodes=2,
        embed_hidden=(8,), task_hidden=(8,), inner_steps=1, seed=8,
    )
    state = meta.init_learner(cfg, 6)
    return state, dist, cfg


class TestQualityStudy:
    def test_too_few_tasks(self, setup):
        state, dist, cfg = setup
        with pytest.raises(ValueError):
            analysis.encoding_quality_study(state, dist, 5, cfg, k=5)

    def test_deterministic_and_exports(self, setup, tmp_path):
        state, dist, cfg = setup
        out = tmp_path / "enc.jsonl"
        r1, z1, a1 = analysis.encoding_quality_study(state, dist, 12, cfg, k=3, out_path=out)
        r2, z2, a2 = analysis.encoding_quality_study(state, dist, 12, cfg, k=3)
        assert np.array_equal(z1, z2)
        assert np.array_equal(a1, a2)
        assert np.array_equal(r1.coefficients, r2.coefficients)
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 12
        import json

        rec = json.loads(lines[0])
        assert set(rec) == {"episode_id", "z", "accuracy"}
        assert len(rec["z"]) == cfg.kg_dim
