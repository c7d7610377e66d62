import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lambdacover.network import build_tree_network
from lambdacover.tree import (
    ROOT, DomainError, LeafAddress, Params, Vertex, b_n, b_n_by_sum, bar_low_level, bar_set,
    boundary_distance_bound, cantor_embed, covering_bound, covering_exponent, lca, level, metric_d,
    mu_n_vertex, mu_sigma_cylinder, mu_T_edge_mass, parse_point, vertices,
)

P = Params(0.5, 3)


def vtx(depth, word):
    return Vertex(depth, word)


vertex_st = st.integers(0, 8).flatmap(lambda d: st.builds(Vertex, st.just(d), st.integers(0, (1 << d) - 1)))


class TestVertex:
    def test_bad_word(self):
        with pytest.raises(DomainError):
            Vertex(2, 4)

    def test_parent_child(self):
        v = vtx(3, 0b101)
        assert v.parent == vtx(2, 0b10)
        assert v.child(1) == vtx(4, 0b1011)
        assert all(c.parent == v for c in v.children)

    def test_root_has_no_parent(self):
        with pytest.raises(DomainError):
            ROOT.parent

    @given(vertex_st)
    def test_text_roundtrip(self, v):
        assert Vertex.parse(v.text) == v
        assert Vertex.from_heap_index(v.heap_index) == v
        assert Vertex.from_bits(v.bits) == v

    def test_root_text(self):
        assert ROOT.text == "∅"
        assert Vertex.parse("e") == ROOT

    def test_leaf_address_canonical(self):
        assert LeafAddress.parse("10|0*") == LeafAddress.parse("100|0*")
        assert LeafAddress.parse("101|0*").text == "101|0*"
        assert isinstance(parse_point("1|0*"), LeafAddress)


class TestLca:
    def test_siblings(self):
        assert lca(vtx(2, 0b00), vtx(2, 0b01)) == vtx(1, 0)

    @given(vertex_st)
    def test_root(self, x):
        assert lca(ROOT, x) == ROOT

    def test_last_bit(self):
        assert lca(vtx(3, 0b101), vtx(3, 0b100)) == vtx(2, 0b10)

    @given(vertex_st, vertex_st)
    def test_is_common_ancestor(self, x, y):
        a = lca(x, y)
        assert a.is_ancestor_of(x) and a.is_ancestor_of(y)
        if a.depth < min(x.depth, y.depth):
            assert x.ancestor(a.depth + 1) != y.ancestor(a.depth + 1)


class TestMetric:
    def test_examples(self):
        assert metric_d(ROOT, vtx(2, 0), Params(0.5, 2)) == pytest.approx(1.5)
        assert metric_d(vtx(1, 0), vtx(1, 1), Params(0.7, 2)) == pytest.approx(2.0)
        assert metric_d(vtx(2, 3), vtx(2, 3), P) == 0.0

    @settings(max_examples=200)
    @given(vertex_st, vertex_st, vertex_st, vertex_st, st.sampled_from([0.3, 0.5, 0.9, 1.5]))
    def test_axioms_and_four_point(self, x, y, z, w, lam):
        p = Params(lam, 8)
        d = lambda a, b: metric_d(a, b, p)
        assert d(x, y) == pytest.approx(d(y, x))
        assert (d(x, y) == 0) == (x == y)
        assert d(x, z) <= d(x, y) + d(y, z) + 1e-12
        s = d(x, y) + d(z, w)
        assert s <= max(d(x, z) + d(y, w), d(x, w) + d(y, z)) + 1e-12

    def test_matches_network_resistance(self):
        from lambdacover.network import effective_resistance

        p = Params(0.5, 4)
        net = build_tree_network(p)
        rng = np.random.default_rng(1)
        vs = list(vertices(4))
        for _ in range(20):
            x, y = (vs[i] for i in rng.choice(len(vs), 2, replace=False))
            assert effective_resistance(net, x, y) == pytest.approx(metric_d(x, y, p), rel=1e-10)

    def test_boundary_distance(self):
        p = Params(0.5, 3)
        a, b = LeafAddress(vtx(1, 0)), LeafAddress(vtx(1, 1))
        assert metric_d(a, b, p) == pytest.approx(4.0)
        assert metric_d(LeafAddress(vtx(3, 0b010)), LeafAddress(vtx(3, 0b011)), p) == pytest.approx(2 * 0.25 / 0.5)

    def test_boundary_bound_examples(self):
        assert boundary_distance_bound(ROOT, Params(0.5, 0)) == 2.0
        assert boundary_distance_bound(vtx(3, 0), Params(0.5, 3)) == 0.25
        assert boundary_distance_bound(Vertex(30, 0), Params(1e-12, 30)) == pytest.approx(0.0, abs=1e-300)

    def test_boundary_bound_dominates(self):
        p = Params(0.5, 6)
        for x in vertices(3):
            bound = boundary_distance_bound(x, p)
            for y in vertices(6):
                if x.is_ancestor_of(y):
                    assert metric_d(x, y, p) <= bound
            assert metric_d(x, LeafAddress(x), p) == pytest.approx(bound)


class TestMeasures:
    def test_mu_examples(self):
        assert mu_n_vertex(ROOT, Params(0.3, 4)) == 2
        assert mu_n_vertex(vtx(3, 5), P) == 4
        assert mu_n_vertex(vtx(1, 0), P) == 5
        with pytest.raises(DomainError):
            mu_n_vertex(vtx(4, 0), P)

    @pytest.mark.parametrize("lam", [0.3, 0.5, 1.0, 1.5, 2.0, 3.0])
    @pytest.mark.parametrize("n", [1, 2, 5, 9])
    def test_mu_is_row_sum(self, lam, n):
        p = Params(lam, n)
        net = build_tree_network(p)
        expect = np.array([mu_n_vertex(v, p) for v in net.vertices])
        np.testing.assert_allclose(net.row_sums, expect, rtol=1e-12)

    def test_b_n_examples(self):
        assert b_n(Params(0.5, 1)) == pytest.approx(4)
        assert b_n(Params(0.5, 2)) == pytest.approx(20)
        assert b_n(Params(0.5, 0)) == 0
        assert b_n(Params(2.0, 5)) == 20

    @given(st.floats(0.05, 3.5), st.integers(1, 20))
    def test_b_n_closed_form(self, lam, n):
        p = Params(lam, n)
        assert b_n(p) == pytest.approx(b_n_by_sum(p), rel=1e-10)

    def test_cylinder(self):
        assert mu_sigma_cylinder(ROOT) == 1
        assert mu_sigma_cylinder(vtx(3, 2)) == 0.125
        for n in range(6):
            assert sum(mu_sigma_cylinder(v) for v in level(n)) == pytest.approx(1.0)
        v = vtx(2, 1)
        assert sum(mu_sigma_cylinder(c) for c in v.children) == mu_sigma_cylinder(v)

    def test_edge_mass_total(self):
        lam = 0.5
        total = sum((1 << (m + 1)) * mu_T_edge_mass(m, lam) for m in range(200))
        assert total == pytest.approx(1.0)


class TestCantor:
    def test_examples(self):
        assert cantor_embed(LeafAddress(ROOT)) == 0.0
        assert cantor_embed(LeafAddress(vtx(1, 1))) == pytest.approx(2 / 3)
        a, b = cantor_embed(vtx(1, 0))
        assert (a, b) == pytest.approx((0.0, 1 / 3))

    def test_order_and_disjoint(self):
        n = 6
        pts = [cantor_embed(LeafAddress(v)) for v in level(n)]
        assert all(np.diff(pts) > 0)
        ivs = [cantor_embed(v) for v in level(n)]
        for (a, b), (c, _) in zip(ivs, ivs[1:]):
            assert b - a == pytest.approx(3.0**-n)
            assert b < c


class TestCovering:
    def test_exponent(self):
        assert covering_exponent(0.5) == pytest.approx(2.0)

    def test_example(self):
        assert covering_bound(0.25, Params(0.5, 3)) == 80

    def test_large_eps(self):
        assert covering_bound(10.0, Params(0.5, 1)) >= 1

    @given(st.floats(0.2, 0.8), st.floats(1e-4, 5.0))
    def test_power_law(self, lam, eps):
        # the power law describes small balls; past the radius a single ball does
        eps = min(eps, 1.0 / (1.0 - lam))
        c = covering_exponent(lam)
        const = 3.0 * (2.0 / lam) * (1.0 - lam) ** (-c)
        assert covering_bound(eps, Params(lam, 1)) <= const * eps ** (-c) * (1 + 1e-9)


class TestBarSet:
    def test_levels(self):
        assert bar_low_level(1) == 0
        assert bar_low_level(6) == 4
        assert bar_low_level(10) == 7
        assert bar_low_level(3, log_base=2) == 1
        assert len(bar_set(6)) == 16 + 32 + 64


def test_params_guard():
    with pytest.raises(DomainError):
        Params(-1, 3)
    with pytest.raises(DomainError):
        Params(0.5, 31)
    assert Params(0.5, 40, max_depth=40).n == 40
