"""Gaussian BIC scoring, score equivalence, and the orientation maximum."""

import itertools

import numpy as np
import pytest

import _brute as brute
from fedcaus.graphs import Dag, PDGraph, cpdag_of
from fedcaus.scoring import (
    CollinearParentsError,
    LocalScoreCache,
    local_bic,
    max_orientation_score,
    per_node_regret,
    regret,
    score_dag,
    score_pdag,
)
from fedcaus.sem import ClientScenario, Dataset, LinearSem, sample_client


def make_data(edges, d, n=2000, weight=0.9, seed=0, labels=None):
    dag = Dag.from_edges(d, directed=edges, labels=labels)
    w = np.zeros((d, d))
    for a, b in edges:
        w[a, b] = weight
    sem = LinearSem(dag, w, np.ones(d))
    return sample_client(sem, ClientScenario.of(1, n, rng_seed=seed))


def rel_close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def brute_max_orientation(data, g, penalty=1.0):
    """Max score over acyclic orientations of the skeleton keeping g's
    directed marks; the independent reference for max_orientation_score."""
    und = sorted(g.undirected_edges())
    m_dir = g.matrix & ~g.matrix.T
    best = float("-inf")
    for bits in itertools.product((0, 1), repeat=len(und)):
        m = m_dir.copy()
        for bit, (i, j) in zip(bits, und):
            if bit:
                m[i, j] = True
            else:
                m[j, i] = True
        if brute.acyclic(m):
            best = max(best, score_dag(data, Dag(m, g.labels), penalty=penalty))
    return best


def random_pdgraph(rng, d, p_edge=0.5, p_dir=0.5):
    while True:
        m = np.zeros((d, d), dtype=bool)
        for i in range(d):
            for j in range(i + 1, d):
                if rng.random() < p_edge:
                    r = rng.random()
                    if r < p_dir / 2:
                        m[i, j] = True
                    elif r < p_dir:
                        m[j, i] = True
                    else:
                        m[i, j] = m[j, i] = True
        if brute.acyclic(m & ~m.T):
            return PDGraph(m)


class TestLocalBic:
    def test_matches_direct_ols(self, rng):
        x = rng.standard_normal((300, 3))
        x[:, 2] = 0.7 * x[:, 0] - 0.4 * x[:, 1] + 0.5 * rng.standard_normal(300)
        data = Dataset(x)
        design = np.column_stack([np.ones(300), x[:, :2]])
        beta, *_ = np.linalg.lstsq(design, x[:, 2], rcond=None)
        rss = float(((x[:, 2] - design @ beta) ** 2).sum())
        expect = -(300 / 2) * np.log(rss / 300) - 0.5 * (2 + 2) * np.log(300)
        got = local_bic(data, 2, (0, 1))
        assert rel_close(got, expect, 1e-8)

    def test_empty_parent_set(self, rng):
        x = rng.standard_normal((200, 2)) * 3.0
        data = Dataset(x)
        var = float(x[:, 0].var())
        expect = -(200 / 2) * np.log(var) - 0.5 * 2 * np.log(200)
        assert rel_close(local_bic(data, 0, ()), expect, 1e-8)

    def test_penalty_scales_complexity_term(self, rng):
        data = Dataset(rng.standard_normal((100, 3)))
        base = local_bic(data, 0, (1, 2), penalty=1.0)
        heavy = local_bic(data, 0, (1, 2), penalty=2.0)
        np.testing.assert_allclose(base - heavy, 0.5 * 4 * np.log(100))

    def test_own_parent_rejected(self, rng):
        data = Dataset(rng.standard_normal((10, 2)))
        with pytest.raises(ValueError, match="own parent"):
            local_bic(data, 0, (0, 1))

    def test_parent_order_is_irrelevant(self, rng):
        data = Dataset(rng.standard_normal((50, 3)))
        assert local_bic(data, 2, (0, 1)) == local_bic(data, 2, (1, 0))

    def test_collinear_parents_fall_back_to_ridge(self, rng):
        x = rng.standard_normal((100, 2))
        data = Dataset(np.column_stack([x[:, 0], x[:, 0], x[:, 1]]))
        assert np.isfinite(local_bic(data, 2, (0, 1)))

    def test_collinearity_error_is_a_value_error(self):
        assert issubclass(CollinearParentsError, ValueError)


class TestCache:
    def test_hits_skip_recomputation(self, rng):
        data = Dataset(rng.standard_normal((100, 3)))
        cache = LocalScoreCache(data)
        v = local_bic(data, 0, (1,), cache)
        assert len(cache) == 1
        cache.store(0, (1,), 123.0)
        assert local_bic(data, 0, (1,), cache) == 123.0
        assert v != 123.0

    def test_fingerprint_guard(self, rng):
        a = Dataset(rng.standard_normal((50, 2)))
        b = Dataset(rng.standard_normal((50, 2)))
        cache = LocalScoreCache(a)
        with pytest.raises(ValueError, match="fingerprint"):
            local_bic(b, 0, (), cache)

    def test_penalty_guard(self, rng):
        data = Dataset(rng.standard_normal((50, 2)))
        cache = LocalScoreCache(data, penalty=1.0)
        with pytest.raises(ValueError, match="penalty"):
            local_bic(data, 0, (), cache, penalty=2.0)

    def test_component_memo_round_trip(self, rng):
        data = Dataset(rng.standard_normal((50, 2)))
        cache = LocalScoreCache(data)
        assert cache.lookup_part(b"k") is None
        cache.store_part(b"k", 7.0)
        assert cache.lookup_part(b"k") == 7.0


class TestScoreDag:
    def test_sums_local_terms(self, rng):
        data = Dataset(rng.standard_normal((200, 3)))
        g = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
        expect = (
            local_bic(data, 0, ())
            + local_bic(data, 1, (0,))
            + local_bic(data, 2, (1,))
        )
        assert rel_close(score_dag(data, g), expect)

    def test_node_count_mismatch(self, rng):
        data = Dataset(rng.standard_normal((50, 3)))
        with pytest.raises(ValueError, match="node count"):
            score_dag(data, Dag.from_edges(2, directed=[(0, 1)]))

    def test_markov_equivalent_dags_tie(self):
        data = make_data([(0, 1), (1, 2)], 3, n=2000, seed=1)
        chain = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
        rev = Dag.from_edges(3, directed=[(2, 1), (1, 0)])
        fork = Dag.from_edges(3, directed=[(1, 0), (1, 2)])
        s = score_dag(data, chain)
        assert rel_close(s, score_dag(data, rev))
        assert rel_close(s, score_dag(data, fork))

    def test_collider_breaks_the_tie(self):
        data = make_data([(0, 1), (1, 2)], 3, n=2000, seed=2)
        collider = Dag.from_edges(3, directed=[(0, 1), (2, 1)])
        chain = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
        assert score_dag(data, collider) < score_dag(data, chain) - 1.0

    def test_equivalence_across_a_sampled_class(self, rng):
        for seed in range(5):
            m = brute.all_dags(5)[int(rng.integers(len(brute.all_dags(5))))]
            members = brute.mec_members(m)
            data = Dataset(np.random.default_rng(seed).standard_normal((500, 5)))
            scores = [score_dag(data, Dag(mm)) for mm in members]
            assert all(rel_close(scores[0], s) for s in scores[1:])


class TestScorePdag:
    def test_cpdag_scores_as_any_member(self):
        data = make_data([(0, 1), (1, 2)], 3, n=1000, seed=3)
        chain = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
        c = cpdag_of(chain)
        assert rel_close(score_pdag(data, c), score_dag(data, chain))

    def test_no_extension_uses_fallback_orientation(self, rng):
        # either orientation of 2 - 3 would mint a new collider, so the
        # deterministic low -> high fallback kicks in: 2 -> 3
        data = Dataset(rng.standard_normal((200, 4)))
        g = PDGraph.from_edges(4, directed=[(0, 3), (1, 2)], undirected=[(2, 3)])
        expect = score_dag(
            data, Dag.from_edges(4, directed=[(0, 3), (1, 2), (2, 3)])
        )
        assert rel_close(score_pdag(data, g), expect)

    def test_closure_contradiction_uses_fallback(self, rng):
        # propagation of the collider marks would close a directed cycle;
        # the fallback flips 2 - 3 to 3 -> 2 to stay acyclic
        data = Dataset(rng.standard_normal((200, 4)))
        g = PDGraph.from_edges(
            4, directed=[(0, 2), (1, 2), (3, 1)], undirected=[(2, 3)]
        )
        expect = score_dag(
            data, Dag.from_edges(4, directed=[(0, 2), (1, 2), (3, 1), (3, 2)])
        )
        assert rel_close(score_pdag(data, g), expect)

    def test_directed_cycle_scored_node_by_node(self, rng):
        data = Dataset(rng.standard_normal((200, 3)))
        m = np.zeros((3, 3), dtype=bool)
        m[0, 1] = m[1, 2] = m[2, 0] = True
        g = PDGraph(m)
        expect = (
            local_bic(data, 0, (2,))
            + local_bic(data, 1, (0,))
            + local_bic(data, 2, (1,))
        )
        assert rel_close(score_pdag(data, g), expect)


class TestRegret:
    def test_zero_at_own_class(self):
        data = make_data([(0, 1), (1, 2)], 3, n=1000, seed=4)
        own = cpdag_of(Dag.from_edges(3, directed=[(0, 1), (1, 2)]))
        baseline = score_pdag(data, own)
        assert regret(data, own, baseline) == 0.0
        member = PDGraph.from_edges(3, directed=[(2, 1), (1, 0)])
        assert abs(regret(data, member, baseline)) < 1e-6

    def test_positive_when_structure_is_lost(self):
        data = make_data([(0, 1), (1, 2)], 3, n=1000, seed=5)
        own = cpdag_of(Dag.from_edges(3, directed=[(0, 1), (1, 2)]))
        baseline = score_pdag(data, own)
        sparse = PDGraph.from_edges(3, undirected=[(0, 1)])
        assert regret(data, sparse, baseline) > 10.0


class TestMaxOrientationScore:
    def test_matches_brute_enumeration(self, rng):
        data = Dataset(np.random.default_rng(7).standard_normal((300, 4)))
        for _ in range(40):
            g = random_pdgraph(rng, 4)
            got = max_orientation_score(data, g)
            expect = brute_max_orientation(data, g)
            assert rel_close(got, expect, 1e-9), g

    def test_matches_brute_on_correlated_data(self):
        data = make_data([(0, 1), (1, 2), (0, 3)], 4, n=1500, seed=8)
        rng = np.random.default_rng(17)
        for _ in range(25):
            g = random_pdgraph(rng, 4, p_edge=0.7)
            assert rel_close(
                max_orientation_score(data, g), brute_max_orientation(data, g), 1e-9
            )

    def test_equals_dag_score_when_fully_directed(self):
        data = make_data([(0, 1), (1, 2)], 3, seed=9)
        dag = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
        g = PDGraph.from_edges(3, directed=[(0, 1), (1, 2)])
        assert rel_close(max_orientation_score(data, g), score_dag(data, dag))

    def test_marks_never_raise_the_value(self, rng):
        data = Dataset(np.random.default_rng(10).standard_normal((300, 4)))
        for _ in range(20):
            g = random_pdgraph(rng, 4, p_dir=0.0)  # fully undirected
            base = max_orientation_score(data, g)
            und = sorted(g.undirected_edges())
            if not und:
                continue
            i, j = und[int(rng.integers(len(und)))]
            marked = g.orient([(i, j)])
            assert max_orientation_score(data, marked) <= base + 1e-9

    def test_true_marks_leave_value_unchanged(self):
        data = make_data([(0, 1), (1, 2)], 3, n=3000, seed=11)
        skel = PDGraph.from_edges(3, undirected=[(0, 1), (1, 2)])
        base = max_orientation_score(data, skel)
        good = skel.orient([(0, 1)])
        assert rel_close(max_orientation_score(data, good), base, 1e-9)

    def test_cyclic_marks_give_minus_inf(self, rng):
        data = Dataset(rng.standard_normal((100, 3)))
        m = np.zeros((3, 3), dtype=bool)
        m[0, 1] = m[1, 2] = m[2, 0] = True
        assert max_orientation_score(data, PDGraph(m)) == float("-inf")

    def test_isolated_nodes_add_marginal_terms(self, rng):
        data = Dataset(rng.standard_normal((200, 3)))
        g = PDGraph.from_edges(3, undirected=[(0, 1)])
        expect = brute_max_orientation(data, g)
        assert rel_close(max_orientation_score(data, g), expect)

    def test_node_count_mismatch(self, rng):
        data = Dataset(rng.standard_normal((50, 3)))
        with pytest.raises(ValueError, match="node count"):
            max_orientation_score(data, PDGraph.empty(2))

    def test_component_memo_is_consistent(self, rng):
        data = Dataset(np.random.default_rng(12).standard_normal((300, 5)))
        cache = LocalScoreCache(data)
        graphs = [random_pdgraph(rng, 5) for _ in range(15)]
        cold = [max_orientation_score(data, g) for g in graphs]
        warm = [max_orientation_score(data, g, cache) for g in graphs]
        rewarm = [max_orientation_score(data, g, cache) for g in graphs]
        assert cold == warm == rewarm
        assert len(cache._parts) > 0


class TestPerNodeRegret:
    def test_zero_where_neighbourhoods_agree(self, rng):
        data = Dataset(rng.standard_normal((200, 3)))
        base = PDGraph.from_edges(3, directed=[(0, 1)], undirected=[(1, 2)])
        cand = PDGraph.from_edges(3, directed=[(0, 1), (1, 2)])
        out = per_node_regret(data, cand, base)
        assert out.shape == (3,)
        assert out[0] == 0.0  # same neighbourhood either way
        assert out[1] == 0.0  # parents+neighbours identical
        assert out[2] == 0.0  # {1} both ways

    def test_positive_where_the_candidate_changes_inputs(self):
        data = make_data([(0, 1), (1, 2)], 3, n=1000, seed=13)
        base = cpdag_of(Dag.from_edges(3, directed=[(0, 1), (1, 2)]))
        cand = PDGraph.from_edges(3, undirected=[(0, 1)])
        out = per_node_regret(data, cand, base)
        assert out[2] > 1.0
        assert (out >= 0.0).all()
