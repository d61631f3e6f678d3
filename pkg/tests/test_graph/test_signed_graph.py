import pytest

from asgl.exceptions import DomainError
from asgl.models import Sign, SignedGraph


class TestSign:
    """Sign enum helpers."""

    @pytest.mark.parametrize("value,expected", [
        (5, Sign.POSITIVE),
        (0.5, Sign.POSITIVE),
        (-2, Sign.NEGATIVE),
    ])
    def test_from_value(self, value, expected):
        assert Sign.from_value(value) is expected

    def test_zero_has_no_sign(self):
        with pytest.raises(DomainError):
            Sign.from_value(0)

    @pytest.mark.parametrize("text,expected", [
        ("+", Sign.POSITIVE),
        ("+1", Sign.POSITIVE),
        ("positive", Sign.POSITIVE),
        ("-1", Sign.NEGATIVE),
        (" NEG ", Sign.NEGATIVE),
    ])
    def test_from_string(self, text, expected):
        assert Sign.from_string(text) is expected

    def test_str(self):
        assert str(Sign.POSITIVE) == "+1"
        assert str(Sign.NEGATIVE) == "-1"
        assert Sign.NEGATIVE.symbol == "-"


class TestSignedGraph:
    """Invariants and derived views of SignedGraph."""

    def test_rejects_self_loop(self):
        with pytest.raises(DomainError):
            SignedGraph.from_edges(2, [(1, 1, Sign.POSITIVE)])

    def test_rejects_both_signs_on_a_pair(self):
        with pytest.raises(DomainError):
            SignedGraph.from_edges(2, [(0, 1, Sign.POSITIVE), (1, 0, Sign.NEGATIVE)])

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            SignedGraph.from_edges(2, [(0, 2, Sign.POSITIVE)])

    def test_degree_and_neighbors(self, triangle_graph):
        assert triangle_graph.degree(0) == 2
        assert triangle_graph.neighbors(1) == frozenset({0, 2})

    def test_restrict_keeps_one_sign(self, community_graph):
        pos = community_graph.restrict(Sign.POSITIVE)
        assert pos.num_edges(Sign.NEGATIVE) == 0
        assert pos.edges(Sign.POSITIVE) == community_graph.edges(Sign.POSITIVE)
        assert pos.num_nodes == community_graph.num_nodes

    def test_without_node(self, community_graph):
        """The removed node keeps its id but has no incident edges."""
        g = community_graph.without_node(3)
        assert g.num_nodes == community_graph.num_nodes
        assert g.degree(3) == 0
        assert g.num_edges() == community_graph.num_edges() - community_graph.degree(3)
        assert all(3 not in g.neighbors(v) for v in g)

    def test_community_counts(self, community_graph):
        assert community_graph.num_nodes == 24
        assert community_graph.num_edges(Sign.POSITIVE) == 48
        assert community_graph.num_edges(Sign.NEGATIVE) == 24
