import io
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpassort.errors import ParameterError, ParseError, RejectedEdgeError, UndefinedStatisticError
from dpassort.graph import (
    Graph,
    assortativity_factor_edge_form,
    denominator_edge_form,
    exact_stats,
    generate_ba,
    load_edge_list,
    neighbor_degree_sum,
    save_edge_list,
)

from conftest import complete, cycle, erdos_renyi, path3, random_graphs, star, triangle


def to_nx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges.tolist())
    return G


class TestLoad:
    def test_path(self):
        g = load_edge_list("0 1\n1 2\n")
        assert (g.n, g.M) == (3, 2)
        assert g.degrees.tolist() == [1, 2, 1]

    def test_self_loop_rejected(self):
        with pytest.raises(RejectedEdgeError) as info:
            load_edge_list("0 0\n")
        assert info.value.pair == (0, 0)

    def test_self_loop_skipped(self, caplog):
        g = load_edge_list("0 0\n0 1\n", self_loops="skip")
        assert g.M == 1
        assert "self-loop" in caplog.text

    def test_parse_error_has_line_number(self):
        with pytest.raises(ParseError) as info:
            load_edge_list("# comment\n0 1\n1 x\n")
        assert info.value.line_number == 3

    def test_comments_duplicates_and_remap(self):
        g = load_edge_list(b"# SNAP\n10 20\n20 10\n20 30\n\n10 20\n")
        assert (g.n, g.M) == (3, 2)
        assert g.remap == [10, 20, 30]
        assert g.degrees.tolist() == [1, 2, 1]

    def test_csv_with_header(self):
        g = load_edge_list("node_1,node_2\n0,1\n1,2\n", skip_header=True)
        assert g.M == 2

    def test_round_trip(self):
        g = erdos_renyi(40, 0.1, 3)
        buf = io.StringIO()
        save_edge_list(g, buf)
        again = load_edge_list(buf.getvalue())
        assert again == g
        out2 = io.StringIO()
        save_edge_list(again, out2)
        assert out2.getvalue() == buf.getvalue()

    def test_round_trip_keeps_isolated_nodes(self):
        g = Graph.from_edges(5, [(3, 1)])
        buf = io.StringIO()
        save_edge_list(g, buf)
        assert load_edge_list(buf.getvalue()) == g


class TestBA:
    @pytest.mark.parametrize("n,m", [(3, 1), (50, 3), (1000, 10)])
    def test_edge_count(self, n, m):
        assert generate_ba(n, m, 1).M == (n - m) * m

    def test_table_sizes(self):
        # BA(m=10) and BA(m=50) rows of the datasets table
        assert generate_ba(10000, 10, 0).M == 99900
        assert generate_ba(10000, 50, 0).M == 497500

    def test_tree(self):
        g = generate_ba(3, 1, 5)
        assert g.M == 2 and nx.is_tree(to_nx(g))

    def test_deterministic(self):
        assert generate_ba(200, 4, 9) == generate_ba(200, 4, 9)
        assert generate_ba(200, 4, 9) != generate_ba(200, 4, 10)

    @pytest.mark.parametrize("n,m", [(5, 5), (5, 0), (3, 7)])
    def test_bad_params(self, n, m):
        with pytest.raises(ParameterError):
            generate_ba(n, m, 0)


class TestExactStats:
    def test_path(self):
        assert exact_stats(path3()).r_u == -0.25

    def test_triangle(self):
        s = exact_stats(triangle())
        assert s.r_u == 0 and s.r_d == 0 and s.r is None

    def test_star(self):
        s = exact_stats(star(3))
        assert s.r_u == -1.0
        assert s.r == pytest.approx(-1.0)

    @pytest.mark.parametrize("g", [cycle(7), complete(6), Graph.from_edges(4, [(0, 1), (2, 3)])])
    def test_regular(self, g):
        s = exact_stats(g)
        assert (s.r_u, s.r_d, s.r) == (0.0, 0.0, None)

    def test_no_edges(self):
        with pytest.raises(UndefinedStatisticError):
            exact_stats(Graph.from_edges(3, []))

    def test_matches_networkx(self):
        for g in random_graphs(20, 80, seed=7):
            s = exact_stats(g)
            if s.r is None:
                continue
            assert s.r == pytest.approx(nx.degree_assortativity_coefficient(to_nx(g)), rel=1e-9, abs=1e-12)

    def test_sign_follows_numerator(self):
        for g in random_graphs(40, 60, seed=8):
            s = exact_stats(g)
            if s.r is not None and s.r_u != 0:
                assert math.copysign(1, s.r) == math.copysign(1, s.r_u)
                assert s.r == pytest.approx(s.r_u / s.r_d)

    def test_denominator_nonnegative(self):
        for g in random_graphs(1000, 200, seed=11):
            assert exact_stats(g).r_d >= -1e-9

    def test_two_denominator_forms_agree(self):
        for g in random_graphs(200, 200, seed=12):
            poly = exact_stats(g).r_d
            edge = denominator_edge_form(g)
            assert abs(poly - edge) <= 1e-9 * max(1.0, abs(poly))

    def test_numerator_edge_form(self):
        for g in random_graphs(50, 100, seed=13):
            assert assortativity_factor_edge_form(g) == pytest.approx(exact_stats(g).r_u, rel=1e-9, abs=1e-9)

    def test_half_square_identity(self):
        for g in random_graphs(50, 100, seed=14):
            d = g.degrees
            i, j = g.edges[:, 0], g.edges[:, 1]
            # 1/2 sum d_i^2 == sum over edges of (d_i + d_j) / 2, in integers
            assert int((d * d).sum()) == int((d[i] + d[j]).sum())
            assert 2 * g.M == int(d.sum())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 60), p=st.floats(0.05, 0.6))
def test_relabel_invariance(seed, n, p):
    g = erdos_renyi(n, p, seed)
    if g.M == 0:
        return
    perm = np.random.default_rng(seed + 1).permutation(n)
    a, b = exact_stats(g), exact_stats(g.relabel(perm))
    assert b.r_u == pytest.approx(a.r_u, rel=1e-12, abs=1e-12)
    assert b.r_d == pytest.approx(a.r_d, rel=1e-12, abs=1e-12)
    assert (a.r is None) == (b.r is None)


class TestNeighborDegreeSum:
    def test_path(self):
        g = path3()
        assert neighbor_degree_sum(g, 1) == 2
        assert neighbor_degree_sum(g, 0) == 2

    def test_star_center(self):
        assert neighbor_degree_sum(star(3), 0) == 3

    def test_out_of_range(self):
        with pytest.raises(ParameterError):
            neighbor_degree_sum(path3(), 3)

    def test_vector_matches_pointwise(self):
        g = erdos_renyi(50, 0.2, 4)
        T = g.neighbor_degree_sums()
        assert T.tolist() == [neighbor_degree_sum(g, i) for i in range(g.n)]

    def test_half_dT_equals_edge_products(self):
        for g in random_graphs(30, 100, seed=15):
            d, T = g.degrees, g.neighbor_degree_sums()
            i, j = g.edges[:, 0], g.edges[:, 1]
            assert int((d * T).sum()) == 2 * int((d[i] * d[j]).sum())


def test_graph_is_read_only():
    g = path3()
    with pytest.raises(ValueError):
        g.degrees[0] = 5
    with pytest.raises(ValueError):
        g.edges[0, 0] = 2
