import math

import numpy as np
import pytest

from sessrec.data import Session, SessionCorpus, Vocab
from sessrec.graph import (
    CooccurrenceIndex,
    EdgeType,
    GraphConfig,
    assemble_graph,
    build_similar_edges,
    build_user_edges,
    count_transitions,
    sample_top_s,
    write_graph_tsv,
)


def make_corpus(num_users, num_items, sessions):
    """sessions: list of (user_id, [item ids]); all tagged train."""
    users = Vocab(f"u{i}" for i in range(num_users))
    items = Vocab(f"i{i}" for i in range(num_items))
    by_user = [[] for i in range(num_users)]
    for ts, (uid, item_ids) in enumerate(sessions):
        by_user[uid].append(Session(uid, list(item_ids), ts, "train"))
    return SessionCorpus(users, items, by_user)


A, B, C = 0, 1, 2


class TestCountTransitions:
    def test_hand_enumeration(self):
        sessions = [Session(0, [A, B, C], 0), Session(0, [A, B], 1)]
        w = count_transitions(sessions)
        assert w == {
            (A, B, EdgeType.IN): 2.0,
            (B, A, EdgeType.OUT): 2.0,
            (B, C, EdgeType.IN): 1.0,
            (C, B, EdgeType.OUT): 1.0,
        }

    def test_singleton_session_has_no_edges(self):
        assert count_transitions([Session(0, [A], 0)]) == {}

    def test_repeat_click_keeps_self_loop(self):
        w = count_transitions([Session(0, [A, A], 0)])
        assert w == {(A, A, EdgeType.IN): 1.0, (A, A, EdgeType.OUT): 1.0}

    def test_self_loop_dropped_when_configured(self):
        assert count_transitions([Session(0, [A, A], 0)], keep_self_loops=False) == {}

    def test_mirror_edges_before_sampling(self):
        rng = np.random.default_rng(2)
        sessions = [
            Session(0, list(rng.integers(0, 12, size=rng.integers(2, 9))), t)
            for t in range(30)
        ]
        w = count_transitions(sessions)
        for (h, t, et), weight in w.items():
            mirror = EdgeType.OUT if et is EdgeType.IN else EdgeType.IN
            assert w[(t, h, mirror)] == weight


class TestCooccurrence:
    def sessions(self):
        return [Session(0, [A, B], 0), Session(0, [A, C, B], 1), Session(0, [B, C], 2)]

    def test_worked_example_ab(self):
        index = CooccurrenceIndex(self.sessions())
        expected = (1 / 2 + 1 / 3) / math.sqrt(2 * 3)
        assert abs(index.score(A, B) - expected) < 1e-15
        assert abs(expected - 0.3402) < 1e-4

    def test_worked_example_ac(self):
        index = CooccurrenceIndex(self.sessions())
        assert abs(index.score(A, C) - (1 / 3) / 2) < 1e-15

    def test_symmetry_exact(self):
        rng = np.random.default_rng(5)
        sessions = [
            Session(0, list(rng.integers(0, 10, size=rng.integers(1, 7))), t)
            for t in range(40)
        ]
        index = CooccurrenceIndex(sessions)
        for i in range(10):
            for j in range(10):
                assert index.score(i, j) == index.score(j, i)

    def test_never_cooccurring_items_score_zero(self):
        index = CooccurrenceIndex([Session(0, [A], 0), Session(0, [B], 1)])
        assert index.score(A, B) == 0.0
        assert index.score(A, 99) == 0.0

    def test_pair_scores_match_pairwise_calls(self):
        rng = np.random.default_rng(9)
        sessions = [
            Session(0, list(rng.integers(0, 15, size=rng.integers(2, 8))), t)
            for t in range(25)
        ]
        index = CooccurrenceIndex(sessions)
        pairs = index.pair_scores()
        for (i, j), score in pairs.items():
            assert i < j
            assert abs(score - index.score(i, j)) < 1e-15
        # zero-score pairs are absent
        for i in range(15):
            for j in range(i + 1, 15):
                if (i, j) not in pairs:
                    assert index.score(i, j) == 0.0

    def test_distinct_item_count_in_denominator(self):
        # session [A, A, B] has 2 distinct items, so contributes 1/2
        index = CooccurrenceIndex([Session(0, [A, A, B], 0)])
        assert index.score(A, B) == (1 / 2) / math.sqrt(1 * 1)


class TestSampleTopS:
    def test_weight_then_index_tie_break(self):
        edges = {
            (7, A, EdgeType.IN): 5.0,
            (3, A, EdgeType.IN): 2.0,
            (9, A, EdgeType.IN): 2.0,
        }
        kept = sample_top_s(edges, 2)
        assert set(kept) == {(7, A, EdgeType.IN), (3, A, EdgeType.IN)}

    def test_under_capacity_keeps_everything(self):
        edges = {(1, A, EdgeType.IN): 1.0}
        assert sample_top_s(edges, 8) == edges

    def test_caps_apply_per_destination_and_type(self):
        edges = {}
        for src in range(6):
            edges[(src, A, EdgeType.IN)] = float(src)
            edges[(src, A, EdgeType.OUT)] = float(src)
            edges[(src, B, EdgeType.IN)] = float(src)
        kept = sample_top_s(edges, 3)
        for tail, et in [(A, EdgeType.IN), (A, EdgeType.OUT), (B, EdgeType.IN)]:
            assert sum(1 for (h, t, e) in kept if t == tail and e == et) == 3
        # heaviest survive
        assert (5, A, EdgeType.IN) in kept and (2, A, EdgeType.IN) not in kept


class TestSimilarEdges:
    def test_cap_is_transition_neighbor_count(self):
        # item A has 2 transition neighbors but 3 co-occurring items
        transitions = {
            (A, B, EdgeType.IN): 1.0,
            (B, A, EdgeType.OUT): 1.0,
            (A, C, EdgeType.IN): 1.0,
            (C, A, EdgeType.OUT): 1.0,
        }
        scores = {(A, 5): 0.9, (A, 6): 0.8, (A, 7): 0.7}
        chosen = build_similar_edges(scores, transitions, similar_k=10)
        heads_into_a = [h for (h, t) in chosen if t == A]
        assert sorted(heads_into_a) == [5, 6]

    def test_conflict_with_in_edge_suppressed(self):
        transitions = {
            (B, A, EdgeType.IN): 1.0,
            (A, B, EdgeType.OUT): 1.0,
        }
        scores = {(A, B): 0.5}
        chosen = build_similar_edges(scores, transitions, similar_k=10)
        # (B, A, similar) collides with (B, A, in); (A, B, similar) survives
        assert (B, A) not in chosen
        assert chosen == {(A, B): 0.5}

    def test_no_cooccurrence_no_similar_edges(self):
        transitions = {(A, B, EdgeType.IN): 1.0, (B, A, EdgeType.OUT): 1.0}
        assert build_similar_edges({}, transitions, 10) == {}

    def test_isolated_item_gets_no_similar_edges(self):
        # positive score but zero transition neighbors -> cap 0
        scores = {(A, B): 0.4}
        assert build_similar_edges(scores, {}, 10) == {}


class TestUserEdges:
    def test_dedup(self):
        sessions = [Session(0, [A, B], 0), Session(0, [A], 1)]
        assert build_user_edges(sessions) == {(0, A), (0, B)}

    def test_single_interaction_gives_one_pair(self):
        assert build_user_edges([Session(1, [A], 0)]) == {(1, A)}


class TestAssembleGraph:
    def toy(self):
        sessions = [
            (0, [0, 1, 2]),
            (0, [0, 1]),
            (1, [2, 3, 0]),
            (1, [3, 2]),
        ]
        return make_corpus(2, 4, sessions)

    def test_caps_and_conflicts_hold(self):
        corpus = self.toy()
        for s, k in [(1, 1), (2, 2), (8, 10)]:
            graph = assemble_graph(corpus, GraphConfig(sample_s=s, similar_k=k))
            for item in range(graph.num_items):
                assert len(graph.in_sources[EdgeType.IN][item]) <= s
                assert len(graph.in_sources[EdgeType.OUT][item]) <= s
                cap = min(k, len(graph.transition_neighbors(item)))
                assert len(graph.in_sources[EdgeType.SIMILAR][item]) <= cap
                for head in graph.in_sources[EdgeType.SIMILAR][item]:
                    assert head not in graph.in_sources[EdgeType.IN][item]

    def test_user_edges_mirrored(self):
        graph = assemble_graph(self.toy(), GraphConfig())
        pairs_interact = {
            (h, u)
            for u, heads in enumerate(graph.in_sources[EdgeType.INTERACT])
            for h in heads
        }
        pairs_by = {
            (i, h)
            for i, heads in enumerate(graph.in_sources[EdgeType.INTERACTED_BY])
            for h in heads
        }
        # item->user and user->item describe the same (item, user) pair set
        assert pairs_interact == pairs_by

    def test_singleton_sessions_give_user_edges_only(self):
        corpus = make_corpus(2, 2, [(0, [0]), (0, [1]), (1, [0])])
        graph = assemble_graph(corpus, GraphConfig())
        assert graph.edge_count(EdgeType.IN) == 0
        assert graph.edge_count(EdgeType.OUT) == 0
        assert graph.edge_count(EdgeType.SIMILAR) == 0
        assert graph.edge_count(EdgeType.INTERACT) == 3

    def test_exclusions(self):
        corpus = self.toy()
        for et in (EdgeType.IN, EdgeType.OUT, EdgeType.SIMILAR):
            graph = assemble_graph(corpus, GraphConfig(), exclude=frozenset({et}))
            assert graph.edge_count(et) == 0
        graph = assemble_graph(
            corpus,
            GraphConfig(),
            exclude=frozenset({EdgeType.INTERACT, EdgeType.INTERACTED_BY}),
        )
        assert graph.edge_count(EdgeType.INTERACT) == 0
        assert graph.edge_count(EdgeType.INTERACTED_BY) == 0
        assert graph.edge_count(EdgeType.IN) > 0

    def test_adjacency_sources_sorted(self):
        graph = assemble_graph(self.toy(), GraphConfig())
        for et in EdgeType:
            for sources in graph.in_sources[et]:
                assert sources == sorted(sources)

    def test_tsv_deterministic(self, tmp_path):
        p1, p2 = tmp_path / "g1.tsv", tmp_path / "g2.tsv"
        write_graph_tsv(assemble_graph(self.toy(), GraphConfig()), p1)
        write_graph_tsv(assemble_graph(self.toy(), GraphConfig()), p2)
        assert p1.read_bytes() == p2.read_bytes()
        first = p1.read_text().splitlines()[0].split("\t")
        assert len(first) == 6

    def test_stats_counts(self):
        graph = assemble_graph(self.toy(), GraphConfig())
        stats = graph.stats()
        assert stats.num_users == 2 and stats.num_items == 4
        assert stats.edge_counts["interact"] == stats.edge_counts["interacted_by"]
        assert "edges.in\t" in stats.to_text()
