"""Item-to-item nearest-neighbor baseline.

Items are represented as binary incidence vectors over train sessions, so
cosine similarity reduces to |N(i) & N(c)| / sqrt(|N(i)| |N(c)|). A
candidate's score against a session prefix is the sum of its similarities
to every prefix position; prefixes whose items were never seen in training
fall back to popularity order.
"""

from __future__ import annotations

import math

import numpy as np

from .data import SessionCorpus


class ItemKnn:
    def __init__(self, corpus: SessionCorpus):
        self.num_items = corpus.num_items
        self.sessions_of: dict[int, set[int]] = {}
        self.popularity = np.zeros(corpus.num_items, dtype=np.int64)
        for sid, s in enumerate(corpus.train_sessions()):
            for i in set(s.items):
                self.sessions_of.setdefault(i, set()).add(sid)
            for i in s.items:
                self.popularity[i] += 1
        self._cos_cache: dict[tuple[int, int], float] = {}

    def cosine(self, i: int, j: int) -> float:
        if i > j:
            i, j = j, i
        cached = self._cos_cache.get((i, j))
        if cached is not None:
            return cached
        si = self.sessions_of.get(i)
        sj = self.sessions_of.get(j)
        if not si or not sj:
            value = 0.0
        else:
            value = len(si & sj) / math.sqrt(len(si) * len(sj))
        self._cos_cache[(i, j)] = value
        return value

    def scores(self, prefix: list[int]) -> np.ndarray:
        """Summed cosine of every candidate against the prefix positions;
        None signals the popularity fallback (no prefix item seen in train)."""
        seen = [i for i in prefix if i in self.sessions_of]
        if not seen:
            return None
        out = np.zeros(self.num_items)
        for i in seen:
            for c in range(self.num_items):
                out[c] += self.cosine(i, c)
        return out

    def rank_of(self, prefix: list[int], target: int) -> int:
        scores = self.scores(prefix)
        if scores is None:
            scores = self.popularity.astype(float)
        s_t = scores[target]
        higher = int(np.sum(scores > s_t))
        tie_before = int(np.sum(scores[:target] == s_t))
        return higher + tie_before + 1

    def recommend(self, prefix: list[int], k: int) -> list[int]:
        scores = self.scores(prefix)
        if scores is None:
            scores = self.popularity.astype(float)
        order = np.lexsort((np.arange(self.num_items), -scores))
        return [int(i) for i in order[:k]]
