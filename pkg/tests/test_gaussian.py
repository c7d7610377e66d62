import math

import numpy as np
import pytest

from lambdacover.gaussian import (
    InsufficientTail, chaining_sum, concentration_tail_check, depth_nets, estimate_esup, exceedance_curve,
    gamma2_upper, increment_moments, net_budget, net_depths, sample_field,
)
from lambdacover.tree import ROOT, Params, Vertex, level, metric_d, vertices
from lambdacover.walk import sample_tree_cover


class TestField:
    def test_root_zero(self):
        rng = np.random.default_rng(0)
        f = sample_field(Params(0.5, 5), rng, size=10)
        assert np.all(f.values[:, 0] == 0.0)
        assert sample_field(Params(0.5, 5), rng)[ROOT] == 0.0

    def test_leaf_variance(self):
        p = Params(0.5, 3)
        m, se = increment_moments(p, [(ROOT, Vertex(3, 5))], 100_000, seed=1)
        assert abs(m[0] - 1.75) <= 3 * se[0]

    def test_sibling_increments_uncorrelated(self):
        p = Params(0.5, 3)
        vals = sample_field(p, np.random.default_rng(2), size=50_000).values
        a = vals[:, Vertex(3, 0).heap_index - 1] - vals[:, Vertex(2, 0).heap_index - 1]
        b = vals[:, Vertex(3, 1).heap_index - 1] - vals[:, Vertex(2, 0).heap_index - 1]
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(50_000)

    def test_covariance_matches_metric(self):
        p = Params(0.5, 6)
        rng = np.random.default_rng(5)
        vs = list(vertices(6))
        pairs = []
        while len(pairs) < 20:
            i, j = rng.choice(len(vs), 2, replace=False)
            pairs.append((vs[i], vs[j]))
        m, se = increment_moments(p, pairs, 100_000, seed=6)
        for (x, y), mi, si in zip(pairs, m, se):
            assert abs(mi - metric_d(x, y, p)) <= 4 * si


class TestEsup:
    def test_depth_zero(self):
        assert estimate_esup(Params(0.5, 0), 100, seed=1).estimate == 0.0

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            estimate_esup(Params(0.5, 3), 10, seed=1)

    def test_monotone_and_bounded(self):
        ests = [estimate_esup(Params(0.5, n), 4000, seed=2) for n in (2, 4, 6, 8)]
        for a, b in zip(ests, ests[1:]):
            assert b.estimate >= a.estimate - 2 * math.hypot(a.stderr, b.stderr)

    def test_json(self):
        import json

        d = json.loads(estimate_esup(Params(0.5, 3), 100, seed=1).to_json())
        assert set(d) == {"lambda", "n", "estimate", "stderr", "samples", "seed"}


class TestGamma2:
    def test_single_vertex(self):
        assert gamma2_upper(Params(0.5, 0)) == 0.0

    def test_at_least_one(self):
        for n in (6, 10, 14):
            assert gamma2_upper(Params(0.5, n)) >= 1.0

    def test_uniform_in_n(self):
        a, b = gamma2_upper(Params(0.5, 8)), gamma2_upper(Params(0.5, 14))
        assert abs(a - b) <= 0.1 * a

    def test_budget_sizes(self):
        p = Params(0.5, 10)
        for k, net in enumerate(depth_nets(p)):
            assert len(net) <= net_budget(k)
        assert len(depth_nets(p)[0]) == 1

    def test_matches_explicit_chaining(self):
        for n in (3, 6, 9):
            p = Params(0.5, n)
            assert chaining_sum(p, depth_nets(p)) == pytest.approx(gamma2_upper(p), rel=1e-12)

    def test_order_invariant(self):
        p = Params(0.5, 7)
        nets = depth_nets(p)
        rng = np.random.default_rng(0)
        shuffled = [list(rng.permutation(np.array(c, dtype=object))) for c in nets]
        assert chaining_sum(p, shuffled) == chaining_sum(p, nets)

    @pytest.mark.parametrize("lam", [0.3, 0.5, 0.8])
    def test_nonincreasing_in_budget(self, lam):
        p = Params(lam, 12)
        vals = [gamma2_upper(p, s) for s in (0.25, 0.5, 1, 2, 8, 64)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestTail:
    @pytest.fixture(scope="class")
    @classmethod
    def taus(cls):
        return sample_tree_cover(Params(0.5, 8), 10_000, seed=3)[0]

    def test_slope_positive(self, taus):
        fit = concentration_tail_check(taus, Params(0.5, 8))
        assert fit.c > 0 and fit.C > 0
        assert 3 <= fit.fit_mask.sum()

    def test_below_median(self, taus):
        p = Params(0.5, 8)
        u = 0.5 * np.median(taus) * (p.lam / 2) ** p.n
        assert exceedance_curve(taus, p, np.array([u]))[0] > 0.9

    def test_too_few(self):
        with pytest.raises(InsufficientTail):
            concentration_tail_check(np.ones(100), Params(0.5, 3))
