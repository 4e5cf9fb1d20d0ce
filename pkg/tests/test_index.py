import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _reference import (
    alg2_layer_search,
    integer_points,
    knn_graph_index,
    manual_index,
    mirrored,
    quadratic_topk,
)
from walknn.graph import GraphError
from walknn.index import (
    BuildParams,
    HnswIndex,
    SearchParams,
    adaptive_r,
    assign_layer,
    construct_layer_sparsified,
    layer_from_uniform,
    select_neighbors,
    transition_probabilities,
)


class TestLayerAssignment:
    def test_u_09_gives_layer_0(self):
        assert layer_from_uniform(0.9, 32) == 0

    def test_u_one_over_m_gives_layer_1(self):
        assert layer_from_uniform(1 / 32, 32) == 1

    def test_empirical_geometric_law(self):
        rng = np.random.default_rng(11)
        draws = 100_000
        bottom_only = sum(assign_layer(rng, 32.0) == 0 for _ in range(draws))
        assert abs(bottom_only / draws - (1 - 1 / 32)) < 0.01

    def test_invalid_multiplier(self):
        with pytest.raises(ValueError):
            layer_from_uniform(0.5, 1.0)


class TestAdaptiveR:
    def test_mean_of_one_and_three(self):
        assert adaptive_r([1.0, 3.0], 15.0) == pytest.approx(7.5)

    def test_scale_invariance_of_probabilities(self):
        rng = np.random.default_rng(5)
        dists = rng.uniform(0.1, 4.0, size=40)
        base = transition_probabilities(dists, r_hat=15.0)
        scaled = transition_probabilities(1000.0 * dists, r_hat=15.0)
        assert np.abs(base - scaled).max() <= 1e-12

    def test_degenerate_mean_gives_sentinel_and_uniform_argmin(self):
        assert adaptive_r([0.0, 0.0], 15.0) == math.inf
        probs = transition_probabilities([0.0, 0.0], r_hat=15.0)
        assert np.allclose(probs, [0.5, 0.5])

    @settings(max_examples=80, deadline=None)
    @given(
        st.lists(st.floats(0.01, 100.0), min_size=2, max_size=30),
        st.floats(0.5, 40.0),
    )
    def test_distribution_sums_to_one_and_argmin_dominates(self, dists, r_hat):
        probs = transition_probabilities(dists, r_hat)
        assert probs.sum() == pytest.approx(1.0)
        lowest = int(np.argmin(dists))
        others = [p for i, p in enumerate(probs) if dists[i] != dists[lowest]]
        if others:
            assert probs[lowest] > max(others)


class TestLayerSearch:
    def test_single_greedy_step(self):
        ix = manual_index([[0.0], [1.0]], {0: mirrored([(0, 1)])})
        res = ix.layer_search(np.array([1.1], dtype=np.float32), 0, entry=0, ef=1)
        assert [node for _, node in res] == [1]

    def test_missing_entry_rejected(self):
        ix = manual_index([[0.0]], {0: []})
        with pytest.raises(GraphError):
            ix.layer_search(np.array([0.0], dtype=np.float32), 0, entry=5, ef=1)

    @pytest.mark.parametrize("seed", range(8))
    def test_greedy_matches_reference_interpreter(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        pts = integer_points(rng, n, 6)
        edges = []
        for u in range(n):
            fanout = rng.integers(2, 7)
            for v in rng.choice(n, size=fanout, replace=False):
                if int(v) != u:
                    edges.append((u, int(v)))
        ix = manual_index(pts, {0: edges})
        tombs = {int(t) for t in rng.choice(n, size=6, replace=False)}
        for t in tombs:
            ix.graph.set_tombstone(t)
        out = {u: ix.graph.out_neighbors(0, u) for u in range(n)}
        for _ in range(12):
            q = integer_points(rng, 1, 6)[0]
            entry = int(rng.integers(n))
            ef = int(rng.integers(1, 12))

            def dist(x, q=q):
                return float(((pts[x].astype(np.float64) - q.astype(np.float64)) ** 2).sum())

            expected = alg2_layer_search(out, dist, entry, ef, tombstones=tombs)
            got = ix.layer_search(q, 0, entry=entry, ef=ef)
            assert [node for _, node in got] == expected
            assert [d for d, _ in got] == [dist(x) for x in expected]

    def test_tombstones_traversed_but_not_retained(self):
        # 0 -- 1 -- 2 in a line; 1 tombstoned; query sits at 2.
        pts = [[0.0], [1.0], [2.0]]
        ix = manual_index(pts, {0: mirrored([(0, 1), (1, 2)])})
        ix.graph.set_tombstone(1)
        res = ix.layer_search(np.array([2.0], dtype=np.float32), 0, entry=0, ef=3)
        assert [node for _, node in res] == [2, 0]

    @pytest.mark.parametrize("seed", range(100))
    def test_softmax_clamped_reproduces_greedy(self, seed):
        rng = np.random.default_rng(1000 + seed)
        pts = rng.standard_normal((40, 5)).astype(np.float32)
        ix = knn_graph_index(pts, k=4)
        q = rng.standard_normal(5).astype(np.float32)
        greedy = ix.search(q, SearchParams(mode="greedy", ef=8, k=4))
        soft = ix.search(
            q,
            SearchParams(mode="softmax", ef=8, k=4, r_hat=math.inf, seed=seed),
        )
        assert greedy.ids == soft.ids
        assert greedy.distance_computations == soft.distance_computations


class TestSelectNeighbors:
    def test_undersized_input_returned_sorted(self):
        cands = [(4.0, 7), (1.0, 3), (2.0, 5)]
        got = select_neighbors(np.zeros(1, dtype=np.float32), cands, 5, "top_m")
        assert got == [(1.0, 3), (2.0, 5), (4.0, 7)]

    def test_heuristic_drops_collinear_far_point(self):
        # q = 0, a = 1, b = 2: b is nearer to a than to q, so b is dropped.
        ix = manual_index([[1.0], [2.0]], {0: []})
        cands = [(1.0, 0), (4.0, 1)]
        kept = select_neighbors(
            np.zeros(1, dtype=np.float32), cands, 5, "heuristic", ix.store
        )
        assert [node for _, node in kept] == [0]

    def test_heuristic_keeps_spread_points(self):
        ix = manual_index([[1.0], [-1.0]], {0: []})
        cands = [(1.0, 0), (1.0, 1)]
        kept = select_neighbors(
            np.zeros(1, dtype=np.float32), cands, 5, "heuristic", ix.store
        )
        assert [node for _, node in kept] == [0, 1]

    def test_cardinality_contract(self):
        rng = np.random.default_rng(0)
        for m in (1, 3, 10):
            for count in (0, 2, 8, 20):
                cands = [(float(rng.uniform(0, 9)), i) for i in range(count)]
                got = select_neighbors(np.zeros(1, dtype=np.float32), cands, m, "top_m")
                assert len(got) == min(m, count)


class TestInsert:
    def test_first_insertion_is_entry_with_no_edges(self):
        ix = HnswIndex(4, BuildParams(m=2, ef_construction=4), seed=0)
        node = ix.add(np.zeros(4, dtype=np.float32))
        assert ix.graph.entry_point[0] == node
        assert ix.graph.edge_count(0) == 0

    def test_degree_caps_hold_everywhere(self):
        build = BuildParams(m=4, ef_construction=16)
        ix = HnswIndex(8, build, seed=2)
        rng = np.random.default_rng(2)
        for _ in range(300):
            ix.add(rng.standard_normal(8).astype(np.float32))
        for layer in range(ix.graph.num_layers):
            cap = build.cap(layer)
            for node in ix.graph.nodes_at(layer):
                assert len(ix.graph.out_neighbors(layer, node)) <= cap
        ix.graph.validate()

    def test_dimension_mismatch(self):
        ix = HnswIndex(4)
        with pytest.raises(ValueError):
            ix.add(np.zeros(5, dtype=np.float32))

    def test_recall_with_exhaustive_beam(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((1000, 16)).astype(np.float32)
        ix = HnswIndex(16, BuildParams(m=12, ef_construction=64), seed=9)
        for p in pts:
            ix.add(p)
        queries = rng.standard_normal((40, 16)).astype(np.float32)
        truth = quadratic_topk(pts, queries, 10)
        hits = 0
        for q, t in zip(queries, truth):
            res = ix.search(q, SearchParams(ef=256, k=10))
            hits += len(set(res.ids) & set(t))
        assert hits / (40 * 10) >= 0.95


class TestSearchTopK:
    def test_self_query(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((100, 8)).astype(np.float32)
        ix = HnswIndex(8, BuildParams(m=6, ef_construction=24), seed=3)
        for p in pts:
            ix.add(p)
        res = ix.search(pts[42], SearchParams(ef=32, k=1))
        assert res.ids == [42]
        assert res.distances[0] == 0.0

    def test_tombstoned_nearest_never_returned(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((100, 8)).astype(np.float32)
        ix = HnswIndex(8, BuildParams(m=6, ef_construction=24), seed=4)
        for p in pts:
            ix.add(p)
        ix.graph.set_tombstone(42)
        res = ix.search(pts[42], SearchParams(ef=64, k=10))
        assert 42 not in res.ids

    def test_empty_index_rejected(self):
        ix = HnswIndex(4)
        with pytest.raises(ValueError):
            ix.search(np.zeros(4, dtype=np.float32), SearchParams(ef=4, k=1))

    def test_greedy_determinism(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((300, 8)).astype(np.float32)
        ix = HnswIndex(8, BuildParams(m=6, ef_construction=24), seed=6)
        for p in pts:
            ix.add(p)
        q = rng.standard_normal(8).astype(np.float32)
        first = ix.search(q, SearchParams(ef=48, k=10))
        second = ix.search(q, SearchParams(ef=48, k=10))
        assert first == second

    def test_monotone_beam_recall(self):
        rng = np.random.default_rng(7)
        pts = rng.standard_normal((800, 12)).astype(np.float32)
        ix = HnswIndex(12, BuildParams(m=8, ef_construction=32), seed=7)
        for p in pts:
            ix.add(p)
        queries = rng.standard_normal((60, 12)).astype(np.float32)
        truth = quadratic_topk(pts, queries, 10)
        recalls = []
        for ef in (16, 32, 64, 128):
            hits = 0
            for q, t in zip(queries, truth):
                res = ix.search(q, SearchParams(ef=ef, k=10))
                hits += len(set(res.ids) & set(t))
            recalls.append(hits / (60 * 10))
        assert recalls == sorted(recalls)

    def test_distance_counter_matches_independent_hook(self):
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((200, 8)).astype(np.float32)
        ix = HnswIndex(8, BuildParams(m=6, ef_construction=24), seed=8)
        for p in pts:
            ix.add(p)
        seen = []
        ix.distance_hook = lambda n: seen.append(n)
        res = ix.search(rng.standard_normal(8).astype(np.float32), SearchParams(ef=32, k=5))
        assert res.distance_computations == sum(seen)
        assert res.distance_computations > 0


class TestSparsifiedConstructor:
    def test_two_points_single_edge(self):
        g = construct_layer_sparsified(
            np.array([[0.0], [1.0]], dtype=np.float32), m=3, rng=np.random.default_rng(0)
        )
        assert g.edge_count(0) == 2  # one undirected edge, mirrored
        assert g.out_neighbors(0, 0) == [1]

    def test_degree_cap(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((120, 6)).astype(np.float32)
        g = construct_layer_sparsified(pts, m=5, rng=rng)
        for node in g.nodes_at(0):
            assert len(g.out_neighbors(0, node)) <= 5
        g.validate()

    def test_connectivity_frequency_on_clustered_points(self):
        # Overlapping clusters: weight-proportional sampling is known to drop
        # weak long-range bridges, so well-separated clusters disconnect.
        hits = 0
        seeds = 100
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            centers = rng.uniform(-0.6, 0.6, size=(4, 2))
            pts = (
                centers[rng.integers(4, size=256)]
                + rng.uniform(-0.7, 0.7, size=(256, 2))
            ).astype(np.float32)
            g = construct_layer_sparsified(pts, m=8, rng=rng)
            seen = {0}
            frontier = [0]
            while frontier:
                node = frontier.pop()
                for nxt in g.out_neighbors(0, node):
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            hits += len(seen) == 256
        assert hits / seeds >= 0.95
