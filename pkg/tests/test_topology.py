import numpy as np
import pytest

from dsgda.errors import ConnectivityFailure
from dsgda.topology import (
    Graph,
    MixingMatrix,
    build_complete,
    build_erdos_renyi,
    build_graph,
    build_line,
    build_ring,
    dump_edge_list,
    load_edge_list,
    metropolis_weights,
    second_eigenvalue_modulus,
    spectral_gap,
    validate,
)


class TestGraph:
    def test_edges_are_normalized(self):
        g = Graph(3, [(1, 0), (2, 1), (0, 1)])
        assert g.sorted_edges() == [(0, 1), (1, 2)]

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            Graph(3, [(1, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Graph(3, [(0, 3)])

    def test_degrees_and_neighbors(self):
        g = build_line(4)
        assert g.degrees().tolist() == [1, 2, 2, 1]
        assert g.neighbors(1) == [0, 2]

    def test_disconnected(self):
        assert not Graph(4, [(0, 1), (2, 3)]).is_connected()


class TestBuilders:
    @pytest.mark.parametrize("K", [2, 5, 10])
    def test_line_ring_complete_edge_counts(self, K):
        assert len(build_line(K).edges) == K - 1
        assert len(build_ring(K).edges) == (K if K > 2 else 1)
        assert len(build_complete(K).edges) == K * (K - 1) // 2

    def test_erdos_renyi_connected_and_deterministic(self):
        for seed in range(20):
            g = build_erdos_renyi(10, 0.5, seed)
            assert g.is_connected()
            assert g == build_erdos_renyi(10, 0.5, seed)

    def test_sparse_erdos_renyi_exhausts_retries(self):
        with pytest.raises(ConnectivityFailure):
            build_erdos_renyi(30, 0.01, 0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_graph("star", 5)


class TestMetropolis:
    def test_line_three_nodes(self):
        # degrees 1,2,1 -> off-diagonal 1/3 everywhere an edge exists
        W = metropolis_weights(build_line(3)).weights
        expected = np.array([[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])
        np.testing.assert_allclose(W, expected, atol=1e-15)

    def test_complete_graph_is_uniform(self):
        m = metropolis_weights(build_complete(6))
        np.testing.assert_allclose(m.weights, np.full((6, 6), 1 / 6), atol=1e-15)
        assert m.lam == pytest.approx(0.0, abs=1e-12)
        assert m.spectral_gap == pytest.approx(1.0, abs=1e-12)

    def test_k2_complete(self):
        m = metropolis_weights(build_complete(2))
        np.testing.assert_allclose(m.weights, np.full((2, 2), 0.5))
        assert validate(m) == []

    @pytest.mark.parametrize("kind", ["line", "ring", "complete", "erdos_renyi"])
    def test_valid(self, kind):
        g = build_graph(kind, 10, 0.5, 3)
        assert validate(metropolis_weights(g), g) == []

    def test_ring_gap_matches_closed_form(self):
        # ring of K with Metropolis weights 1/3: eigenvalues 1/3 + 2/3 cos(2 pi j / K)
        K = 8
        lam = max(abs(1 / 3 + 2 / 3 * np.cos(2 * np.pi * j / K)) for j in range(1, K))
        assert metropolis_weights(build_ring(K)).lam == pytest.approx(lam, abs=1e-12)

    def test_weights_read_only(self):
        m = metropolis_weights(build_ring(4))
        with pytest.raises(ValueError):
            m.weights[0, 0] = 1.0


class TestValidate:
    def test_asymmetric_matrix(self):
        W = np.array([[0.5, 0.5, 0.0], [0.5, 0.25, 0.25], [0.5, 0.0, 0.5]])
        names = validate(W)
        assert "Symmetry" in names and "ColumnStochastic" in names

    def test_negative_entry(self):
        W = np.array([[1.2, -0.2], [-0.2, 1.2]])
        assert "Nonnegativity" in validate(W)

    def test_identity_has_no_gap(self):
        assert "SpectralGap" in validate(np.eye(3))

    def test_support_outside_graph(self):
        W = metropolis_weights(build_complete(3)).weights
        assert "Support" in validate(W, build_line(3))

    def test_spectral_gap_on_array(self):
        W = metropolis_weights(build_line(5)).weights
        assert spectral_gap(W) == pytest.approx(1 - second_eigenvalue_modulus(W))

    def test_single_worker(self):
        m = MixingMatrix(np.ones((1, 1)))
        assert m.lam == 0.0 and m.spectral_gap == 1.0


class TestEdgeListIO:
    def test_round_trip(self, tmp_path):
        g = build_erdos_renyi(10, 0.5, 4)
        path = tmp_path / "g.txt"
        dump_edge_list(g, path)
        assert load_edge_list(path) == g

    def test_isolated_tail_nodes_survive(self, tmp_path):
        g = Graph(5, [(0, 1)])
        dump_edge_list(g, tmp_path / "g.txt")
        assert load_edge_list(tmp_path / "g.txt").node_count == 5
