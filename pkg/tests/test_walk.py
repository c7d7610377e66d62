import math

import numpy as np
import pytest
from scipy import stats

from lambdacover.analysis import ks_two_sample
from lambdacover.limit import LadderSpec, bar_network, sample_limit_cover
from lambdacover.network import Network, build_tree_network, exact_expected_cover_time
from lambdacover.tree import ROOT, Params, Vertex, bar_low_level, bar_set, level
from lambdacover.walk import (
    JumpChainEngine, LocalTimeLedger, SimulationError, StopRule, Trajectory, additive_functional,
    additive_functional_path, canonical_engine, excise, excise_time_change, inverse_clock,
    occupation_identity_check, sample_coupled_cover, sample_cover_times, sample_tree_cover, simulate_cover,
    simulate_until, tree_jump_counts, write_runs_csv,
)

T2_COVER = 42.04545454545456
T3_COVER = 233.58757486940848


def mean_se(x):
    return x.mean(), x.std(ddof=1) / math.sqrt(len(x))


class TestEngine:
    @pytest.mark.parametrize("lam", [0.3, 0.5, 1.7])
    def test_jump_law(self, lam):
        p = Params(lam, 4)
        eng = canonical_engine(p)
        assert np.all(eng.rates == 1.0)
        for v in eng.network.vertices:
            probs = eng.alias_probabilities(v)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)
            law = eng.jump_probabilities(v)
            if v.depth == 0:
                expect = {c: 0.5 for c in v.children}
            elif v.depth == p.n:
                expect = {v.parent: 1.0}
            else:
                expect = {c: 1 / (2 + lam) for c in v.children}
                expect[v.parent] = lam / (2 + lam)
            assert law == pytest.approx(expect, rel=1e-12)
            for u, q in expect.items():
                assert probs[eng.network.index_of(u)] == pytest.approx(q, rel=1e-12)

    def test_rejects_bad_conductance(self):
        mat = np.array([[0.0, np.inf], [np.inf, 0.0]])
        net = Network((Vertex(1, 0), Vertex(1, 1)), mat, np.ones(2))
        with pytest.raises(SimulationError):
            JumpChainEngine.from_network(net)

    def test_empirical_jump_frequencies(self):
        p = Params(0.5, 3)
        eng = canonical_engine(p)
        rec, _ = simulate_until(eng, ROOT, StopRule.at_time(1.2e6), seed=5)
        vs = rec.trajectory.vertices
        net = eng.network
        for v in (Vertex(1, 0), Vertex(2, 3), ROOT):
            i = net.index_of(v)
            nxt = vs[1:][vs[:-1] == i]
            law = eng.jump_probabilities(v)
            keys = list(law)
            obs = np.array([(nxt == net.index_of(u)).sum() for u in keys])
            exp = np.array([law[u] for u in keys]) * obs.sum()
            assert stats.chisquare(obs, exp).pvalue > 0.01
        assert len(vs) > 1_000_000


class TestSimulateCover:
    def test_single_vertex(self):
        net = Network((ROOT,), np.zeros((1, 1)), np.ones(1))
        rec = simulate_cover(net, ROOT, seed=1)
        assert rec.tau == 0.0 and rec.jumps == 0

    def test_t1_mean(self):
        x = sample_cover_times(build_tree_network(Params(0.5, 1)), ROOT, 100_000, seed=11)
        m, se = mean_se(x)
        assert abs(m - 5.0) <= 3 * se

    def test_t2_mean(self):
        x = sample_cover_times(build_tree_network(Params(0.5, 2)), ROOT, 50_000, seed=12)
        m, se = mean_se(x)
        assert abs(m - T2_COVER) <= 3 * se

    def test_record_invariants(self):
        p = Params(0.5, 3)
        eng = canonical_engine(p)
        rec = simulate_cover(eng, ROOT, seed=3, index=9, params=p)
        assert rec.tau > 0 and rec.jumps >= len(eng.network) - 1
        assert rec.visits.sum() == rec.jumps
        # visits count departures, so only the last new vertex can have none
        assert (rec.visits == 0).sum() <= 1

    def test_deterministic_and_worker_independent(self):
        eng = canonical_engine(Params(0.5, 4))
        a = sample_cover_times(eng, ROOT, 64, seed=8, workers=1)
        b = sample_cover_times(eng, ROOT, 64, seed=8, workers=3)
        c = sample_cover_times(eng, ROOT, 32, seed=8, first_index=32)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a[32:], c)

    def test_runs_csv(self, tmp_path):
        p = Params(0.5, 2)
        recs = [simulate_cover(build_tree_network(p), ROOT, seed=1, index=i, params=p) for i in range(3)]
        path = tmp_path / "runs.csv"
        write_runs_csv(path, recs)
        lines = path.read_text().splitlines()
        assert lines[0] == "family,lambda,n,seed,index,tau,jumps"
        assert len(lines) == 4


class TestTreeSampler:
    @pytest.mark.parametrize("n,target", [(2, T2_COVER), (3, T3_COVER)])
    def test_compressed_matches_oracle(self, n, target):
        x, _ = sample_tree_cover(Params(0.5, n), 100_000, seed=21)
        m, se = mean_se(x)
        assert abs(m - target) <= 3 * se

    def test_compressed_matches_plain_in_law(self):
        p = Params(0.5, 5)
        a, _ = sample_tree_cover(p, 4000, seed=1)
        b, _ = sample_tree_cover(p, 4000, seed=2, compress=False)
        assert ks_two_sample(a, b) < 1.63 * math.sqrt(2 / 4000)

    def test_plain_matches_generic_engine(self):
        p = Params(0.5, 4)
        a, _ = sample_tree_cover(p, 4000, seed=3, compress=False)
        b = sample_cover_times(canonical_engine(p), ROOT, 4000, seed=4)
        assert ks_two_sample(a, b) < 1.63 * math.sqrt(2 / 4000)

    def test_coupled_ordering(self):
        p = Params(0.5, 8)
        tau, bar = sample_coupled_cover(p, 200, seed=6)
        assert np.all(bar <= tau) and np.all(bar > 0)
        k, k_in = tree_jump_counts(p, 6, 0, bar_low=0)
        assert k == k_in


class TestUntil:
    def test_hit_start(self):
        net = build_tree_network(Params(0.5, 2))
        rec, led = simulate_until(net, ROOT, StopRule.hit(ROOT), seed=1)
        assert rec.tau == 0.0 and led.elapsed == 0.0

    def test_leaf_to_root(self):
        eng = canonical_engine(Params(0.5, 1))
        t = np.array([simulate_until(eng, Vertex(1, 0), StopRule.hit(ROOT), seed=2, index=i)[0].tau
                      for i in range(100_000)])
        m, se = mean_se(t)
        assert abs(m - 1.0) <= 3 * se

    def test_horizon(self):
        eng = canonical_engine(Params(0.5, 3))
        rec, led = simulate_until(eng, ROOT, StopRule.at_time(50.0), seed=3)
        assert rec.tau == pytest.approx(50.0)
        assert led.occupied.sum() == pytest.approx(50.0, rel=1e-9)

    def test_event_bytes_roundtrip(self):
        eng = canonical_engine(Params(0.5, 3))
        rec, _ = simulate_until(eng, ROOT, StopRule.cover(eng.network.vertices), seed=4)
        raw = rec.trajectory.to_bytes()
        assert len(raw) == 12 * len(rec.trajectory)
        back = Trajectory.from_bytes(raw)
        np.testing.assert_array_equal(back.vertices, rec.trajectory.vertices)
        np.testing.assert_array_equal(back.holdings, rec.trajectory.holdings)

    def test_gamma_and_event_assembly_agree(self):
        p = Params(0.5, 4)
        eng = canonical_engine(p)
        every = StopRule.cover(eng.network.vertices)
        a = np.array([simulate_until(eng, ROOT, every, seed=31, index=i)[0].tau for i in range(10_000)])
        b = sample_cover_times(eng, ROOT, 10_000, seed=32)
        assert ks_two_sample(a, b) < 0.02


class TestLedger:
    @pytest.fixture
    def run(self):
        eng = canonical_engine(Params(0.5, 3))
        rec, led = simulate_until(eng, ROOT, StopRule.cover(eng.network.vertices), seed=7)
        return eng.network, rec, led

    def test_total(self, run):
        net, rec, led = run
        assert led.occupied.sum() == pytest.approx(led.elapsed, rel=1e-9)

    def test_identity(self, run):
        net, rec, led = run
        assert occupation_identity_check(led, net, lambda v: 1.0) <= 1e-12
        assert additive_functional(led, net, net.measure) == pytest.approx(led.elapsed, rel=1e-12)
        f = np.random.default_rng(0).normal(size=len(net))
        assert occupation_identity_check(led, net, f) <= 1e-12
        x = Vertex(2, 1)
        i = net.index_of(x)
        assert led.local_times[i] * net.measure[i] == pytest.approx(led.occupied[i], rel=1e-15)
        assert additive_functional(led, net, {x: 0.0}) == 0.0

    def test_clock(self, run):
        net, rec, _ = run
        times, values = additive_functional_path(rec.trajectory, net, net.measure)
        np.testing.assert_allclose(values, times, rtol=1e-12)
        w = np.zeros(len(net))
        w[net.indices_of(level(3))] = 1.0
        times, values = additive_functional_path(rec.trajectory, net, w)
        assert np.all(np.diff(values) >= 0)
        t = 0.5 * values[-1]
        s = inverse_clock(times, values, t)
        k = np.searchsorted(times, s, side="right") - 1
        assert np.interp(s, times, values) == pytest.approx(t)
        assert inverse_clock(times, values, values[-1] + 1) == math.inf


class TestExcision:
    @pytest.fixture
    def run(self):
        eng = canonical_engine(Params(0.5, 4))
        rec, led = simulate_until(eng, ROOT, StopRule.cover(eng.network.vertices), seed=9)
        return eng.network, rec, led

    def test_keep_all(self, run):
        net, rec, _ = run
        out = excise_time_change(rec, net, net.vertices)
        np.testing.assert_array_equal(out.trajectory.vertices, rec.trajectory.vertices)
        np.testing.assert_array_equal(out.trajectory.holdings, rec.trajectory.holdings)
        assert out.tau == pytest.approx(rec.tau)

    def test_keep_one(self, run):
        net, rec, led = run
        x = Vertex(3, 5)
        out = excise_time_change(rec, net, [x])
        assert out.trajectory.elapsed == pytest.approx(led.occupied[net.index_of(x)])
        assert len(out.trajectory) == 1

    def test_never_enters(self):
        eng = canonical_engine(Params(0.5, 3))
        rec, _ = simulate_until(eng, ROOT, StopRule.hit(Vertex(1, 0)), seed=1)
        with pytest.raises(SimulationError):
            excise_time_change(rec, eng.network, [Vertex(3, 7)])

    def test_subset_monotone(self, run):
        net, rec, _ = run
        for keep in (bar_set(4), level(4), level(3) + level(4)):
            out = excise_time_change(rec, net, keep)
            assert out.tau <= rec.tau
            assert not np.any(out.trajectory.vertices[1:] == out.trajectory.vertices[:-1])

    def test_excised_equals_traced_chain(self):
        p = Params(0.5, 6)
        eng = canonical_engine(p)
        net = eng.network
        keep = bar_set(6)
        every = StopRule.cover(net.vertices)
        excised = np.array([excise_time_change(simulate_until(eng, ROOT, every, seed=41, index=i)[0], net, keep).tau
                            for i in range(10_000)])
        traced = bar_network(p)
        start = Vertex(bar_low_level(6), 0)
        direct = sample_cover_times(traced, start, 10_000, seed=42)
        assert ks_two_sample(excised, direct) < 0.05

    def test_coupled_sampler_matches_excision(self):
        p = Params(0.5, 6)
        eng = canonical_engine(p)
        every = StopRule.cover(eng.network.vertices)
        excised = np.array([excise_time_change(simulate_until(eng, ROOT, every, seed=43, index=i)[0],
                                               eng.network, bar_set(6)).tau for i in range(3000)])
        _, bar = sample_coupled_cover(p, 3000, seed=44)
        assert ks_two_sample(excised, bar) < 1.63 * math.sqrt(2 / 3000)


def test_leaf_cover_matches_boundary_ladder():
    # X^4 time-changed by the leaf local times with weight 2**-4 is the leaf-state chain;
    # its first cover of the level-2 representatives is the ladder's level-2 time
    n = 4
    p = Params(0.5, n)
    eng = canonical_engine(p)
    net = eng.network
    leaves = level(n)
    reps = [v for v in leaves if v.word % 4 == 0]
    w = np.zeros(len(net))
    w[net.indices_of(leaves)] = 2.0**-n
    out = []
    for i in range(3000):
        rec, _ = simulate_until(eng, ROOT, StopRule.cover(reps), seed=51, index=i)
        times, values = additive_functional_path(rec.trajectory, net, w)
        out.append(values[-1])
    ladder = sample_limit_cover(LadderSpec(0.5, n, (2, 4), 3000, seed=52, boundary_tails=False,
                                           uniform_start=True))
    assert np.all(ladder[:, 0] <= ladder[:, 1])
    assert ks_two_sample(np.array(out), ladder[:, 0]) < 1.63 * math.sqrt(2 / 3000)
