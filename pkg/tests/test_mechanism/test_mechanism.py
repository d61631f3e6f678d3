import numpy as np
import pytest

from asgl.exceptions import DomainError, NonFiniteGradientError
from asgl.models import EmbeddingTable, RowGradient, Sign, SignedGraph
from asgl.services.adversarial import init_embeddings
from asgl.services.mechanism import (
    clip,
    clip_gradient,
    empirical_sensitivity_check,
    noisy_batch_gradient,
    noisy_row_gradient,
    sensitivity,
    sum_gradients,
)
from asgl.utils.rng import stream


class TestClip:
    """L2 clipping of gradient vectors."""

    def test_scales_long_vector_to_bound(self):
        out = clip(np.array([3.0, 4.0]), 1.0)
        np.testing.assert_allclose(out, [0.6, 0.8])
        assert np.linalg.norm(out) == pytest.approx(1.0)

    def test_short_vector_unchanged(self):
        v = np.array([0.3, 0.4])
        np.testing.assert_array_equal(clip(v, 1.0), v)

    def test_random_vectors_within_bound(self):
        rng = stream(0, "test-clip")
        for c in (0.01, 0.5, 1.0, 10.0):
            vectors = rng.standard_normal((200, 6)) * rng.uniform(0, 50, size=(200, 1))
            for v in vectors[:20]:
                assert np.linalg.norm(clip(v, c)) <= c + 1e-12

    def test_gradient_scaled_as_a_whole(self):
        grad = RowGradient(np.array([2, 5]), np.array([[6.0, 8.0], [0.0, 0.0]]))
        out = clip_gradient(grad, 5.0)
        assert out.rows.tolist() == [2, 5]
        np.testing.assert_allclose(out.values, [[3.0, 4.0], [0.0, 0.0]])

    def test_gradient_rows_share_one_factor(self):
        """Two rows of norm 3 and 4 are scaled together, not each to the bound."""
        grad = RowGradient(np.array([0, 1]), np.array([[3.0, 0.0], [0.0, 4.0]]))
        out = clip_gradient(grad, 1.0)
        np.testing.assert_allclose(out.values, [[0.6, 0.0], [0.0, 0.8]])
        assert np.linalg.norm(out.values) == pytest.approx(1.0)

    def test_random_gradients_within_bound(self):
        rng = stream(1, "test-clip")
        for c in (0.01, 1.0, 10.0):
            for _ in range(50):
                rows = np.sort(rng.choice(30, size=5, replace=False))
                grad = RowGradient(rows, rng.standard_normal((5, 4)) * rng.uniform(0, 50))
                assert np.linalg.norm(clip_gradient(grad, c).values) <= c + 1e-12

    def test_sum_gradients_adds_shared_rows(self):
        a = RowGradient(np.array([0, 2]), np.array([[1.0, 0.0], [0.0, 1.0]]))
        b = RowGradient(np.array([2, 3]), np.array([[2.0, 2.0], [1.0, 1.0]]))
        total = sum_gradients([a, b], 2)
        assert total.rows.tolist() == [0, 2, 3]
        np.testing.assert_allclose(total.values, [[1.0, 0.0], [2.0, 3.0], [1.0, 1.0]])
        assert len(sum_gradients([], 2)) == 0

    @pytest.mark.parametrize("c", [0.0, -1.0])
    def test_bound_must_be_positive(self, c):
        with pytest.raises(DomainError):
            clip(np.ones(2), c)


class TestSensitivity:
    """Closed-form sensitivity of the constrained sampler."""

    @pytest.mark.parametrize("n,l,c,expected", [
        (3, 4, 1.0, 121.0),
        (3, 2, 1.0, 13.0),
        (1, 4, 1.0, 5.0),
        (2, 2, 0.5, 3.5),
    ])
    def test_values(self, n, l, c, expected):
        assert sensitivity(n, l, c) == pytest.approx(expected)

    def test_monotone_in_each_argument(self):
        for n in range(1, 5):
            for l in range(1, 5):
                base = sensitivity(n, l, 1.0)
                assert sensitivity(n + 1, l, 1.0) >= base
                assert sensitivity(n, l + 1, 1.0) >= base
                assert sensitivity(n, l, 2.0) >= base


class TestNoisyGradient:
    """Gaussian perturbation of summed clipped gradients."""

    def test_vanishing_noise_gives_plain_mean(self):
        grads = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = noisy_batch_gradient(grads, 1.0, 1e-12, 2, stream(0, "noise", 1, 0))
        np.testing.assert_allclose(out, [2.0, 3.0], atol=1e-9)

    def test_single_gradient(self):
        g = np.array([0.3, -0.4])
        out = noisy_batch_gradient([g], 1.0, 1e-12, 1, stream(0))
        np.testing.assert_allclose(out, g, atol=1e-9)

    def test_noise_scale(self):
        """Per-coordinate standard deviation is delta_g * sigma / batch_size."""
        out = noisy_batch_gradient(np.zeros((1, 100_000)), 2.0, 3.0, 4, stream(1, "noise", 1, 0))
        assert out.std() == pytest.approx(1.5, rel=0.02)
        assert abs(out.mean()) < 0.05

    def test_deterministic(self):
        grads = np.ones((3, 4))
        a = noisy_batch_gradient(grads, 1.0, 1.0, 3, stream(9, "noise", -1, 4))
        b = noisy_batch_gradient(grads, 1.0, 1.0, 3, stream(9, "noise", -1, 4))
        np.testing.assert_array_equal(a, b)

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteGradientError):
            noisy_batch_gradient(np.array([[np.inf, 0.0]]), 1.0, 1.0, 1, stream(0))

    @pytest.mark.parametrize("delta_g,sigma,batch_size", [(0.0, 1.0, 1), (1.0, 0.0, 1), (1.0, 1.0, 0)])
    def test_bad_arguments(self, delta_g, sigma, batch_size):
        with pytest.raises(DomainError):
            noisy_batch_gradient(np.ones((1, 2)), delta_g, sigma, batch_size, stream(0))

    def test_row_noise_reaches_untouched_rows(self):
        clipped = RowGradient(np.array([1]), np.array([[1.0, 1.0]]))
        out = noisy_row_gradient(clipped, 4, 1.0, 1.0, 1, stream(0))
        assert len(out) == 4
        assert np.all(out.to_dense(4)[[0, 2, 3]] != 0.0)


class TestEmpiricalSensitivity:
    """Removing one node never moves the summed clipped gradient further than delta_g."""

    @staticmethod
    def _tables(num_nodes: int, seed: int, scale: float = 3.0):
        """Discriminator rows large enough that every subgraph gradient is clipped."""
        theta_g = init_embeddings(num_nodes, 16, stream(seed, "init", "generator"))
        theta_d = EmbeddingTable(scale * stream(seed, "test-theta-d").standard_normal((num_nodes, 16)))
        return theta_g, theta_d

    @staticmethod
    def _hub_graph(leaves: int = 12) -> SignedGraph:
        """Hub 0 trusts every leaf; the leaves distrust their ring neighbours."""
        edges = [(0, v, Sign.POSITIVE) for v in range(1, leaves + 1)]
        edges += [(v, v % leaves + 1, Sign.NEGATIVE) for v in range(1, leaves + 1)]
        return SignedGraph.from_edges(leaves + 1, edges)

    @pytest.mark.slow
    @pytest.mark.parametrize("n,l,trials", [(2, 2, 200), (1, 1, 50)])
    def test_bound_holds_on_random_graphs(self, random_graph, n, l, trials):
        for trial in range(trials):
            g = random_graph(20, 40, trial)
            theta_g, theta_d = self._tables(g.num_nodes, trial)
            if trial % 2:
                removed = max(range(g.num_nodes), key=g.degree)
            else:
                removed = int(stream(trial, "test-removed").integers(g.num_nodes))
            check = empirical_sensitivity_check(g, removed, theta_g, theta_d, n, l, 1.0, seed=trial)
            assert check.bound == sensitivity(n, l, 1.0)
            assert check.affected_subgraphs <= check.bound
            assert check.within_bound, f"trial {trial}: deviation {check.deviation} > {check.bound}"

    def test_hub_removal_stays_within_bound(self):
        g = self._hub_graph()
        theta_g, theta_d = self._tables(g.num_nodes, 5)
        check = empirical_sensitivity_check(g, 0, theta_g, theta_d, 1, 1, 1.0, seed=5)
        assert check.bound == 2.0
        assert check.affected_subgraphs == 2
        assert 0.0 < check.deviation_pos <= 2.0 + 1e-9
        assert check.deviation_neg == 0.0
        assert check.within_bound

    def test_hub_removal_with_longer_walks(self):
        g = self._hub_graph(20)
        theta_g, theta_d = self._tables(g.num_nodes, 6, scale=10.0)
        check = empirical_sensitivity_check(g, 0, theta_g, theta_d, 3, 2, 0.5, seed=6)
        assert check.affected_subgraphs <= 13
        assert check.within_bound

    def test_isolated_node_changes_nothing(self, community_graph):
        base = community_graph
        g = SignedGraph.from_edges(base.num_nodes + 1, base.signed_edges())
        theta_g, theta_d = self._tables(g.num_nodes, 0)
        check = empirical_sensitivity_check(g, base.num_nodes, theta_g, theta_d, 2, 2, 1.0, seed=0)
        assert check.deviation == 0.0
        assert check.changed_rows == 0
        assert check.affected_subgraphs == 0

    def test_connected_node_changes_rows(self, community_graph):
        theta_g, theta_d = self._tables(community_graph.num_nodes, 1)
        check = empirical_sensitivity_check(community_graph, 0, theta_g, theta_d, 2, 2, 1.0, seed=1)
        assert check.changed_rows > 0
        assert 0.0 < check.deviation_pos
        assert check.within_bound
