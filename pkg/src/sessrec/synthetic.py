"""Seeded synthetic corpora for desk-scale verification.

Users are assigned round-robin to clusters; each cluster owns a disjoint
slice of the items and a successor permutation over that slice, so
cross-cluster co-occurrence is zero by construction.

``disjoint`` mode (default): a session walks its own cluster's chain,
following the successor with probability 1 - noise_rate, else jumping
uniformly inside the pool.

``interleaved`` mode: each step first picks an acting cluster, the user's
own with probability 1 - mix_rate, else one of the others, and extends that
cluster's chain from its most recent item in the session (uniform restart
when the chain is untouched or with probability noise_rate). The next
own-cluster item therefore depends jointly on the user's cluster and on
that cluster's last item in the prefix, while steps borrowed from other
chains act as decoys that only the user identity can discount.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Interaction, SessionCorpus, filter_corpus, sessionize, split_corpus
from .errors import DataError


@dataclass(frozen=True)
class SyntheticSpec:
    num_users: int
    num_items: int
    num_clusters: int
    sessions_per_user: int
    session_length: int
    noise_rate: float
    seed: int
    mode: str = "disjoint"
    mix_rate: float = 0.45

    def __post_init__(self):
        if self.num_items % self.num_clusters != 0:
            raise DataError(
                f"num_items={self.num_items} not divisible by num_clusters={self.num_clusters}"
            )
        if not 0.0 <= self.noise_rate < 1.0:
            raise DataError(f"noise_rate must be in [0, 1), got {self.noise_rate}")
        if self.mode not in ("disjoint", "interleaved"):
            raise DataError(f"unknown synthetic mode {self.mode!r}")
        if not 0.0 <= self.mix_rate < 1.0:
            raise DataError(f"mix_rate must be in [0, 1), got {self.mix_rate}")
        if min(self.num_users, self.num_items, self.num_clusters,
               self.sessions_per_user, self.session_length) < 1:
            raise DataError("all synthetic sizes must be >= 1")


def item_pool(spec: SyntheticSpec, cluster: int) -> list[int]:
    size = spec.num_items // spec.num_clusters
    return list(range(cluster * size, (cluster + 1) * size))


def user_cluster(spec: SyntheticSpec, user: int) -> int:
    return user % spec.num_clusters


def _draw_maps(spec: SyntheticSpec, rng: np.random.Generator) -> list[dict[int, int]]:
    maps = []
    for c in range(spec.num_clusters):
        pool = item_pool(spec, c)
        perm = rng.permutation(len(pool))
        maps.append({pool[i]: pool[int(perm[i])] for i in range(len(pool))})
    return maps


def successor_maps(spec: SyntheticSpec) -> list[dict[int, int]]:
    """Per-cluster successor permutation, identical to the one that generated
    the corpus for this spec."""
    return _draw_maps(spec, np.random.default_rng(spec.seed))


def synthetic_events(spec: SyntheticSpec) -> list[Interaction]:
    """Raw event list with explicit session keys (4-column log layout)."""
    rng = np.random.default_rng(spec.seed)
    succ = _draw_maps(spec, rng)
    pools = [item_pool(spec, c) for c in range(spec.num_clusters)]
    events: list[Interaction] = []
    ts = 0
    for u in range(spec.num_users):
        c = user_cluster(spec, u)
        for j in range(spec.sessions_per_user):
            state: dict[int, int] = {}
            for _pos in range(spec.session_length):
                if spec.mode == "interleaved" and rng.random() < spec.mix_rate:
                    others = [r for r in range(spec.num_clusters) if r != c]
                    acting = others[int(rng.integers(len(others)))] if others else c
                else:
                    acting = c
                prev = state.get(acting)
                if prev is None or rng.random() < spec.noise_rate:
                    pool = pools[acting]
                    item = pool[int(rng.integers(len(pool)))]
                else:
                    item = succ[acting][prev]
                state[acting] = item
                events.append(Interaction(f"u{u}", f"i{item}", ts, f"s{j}"))
                ts += 1
    return events


def write_events_tsv(events: list[Interaction], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user\titem\ttimestamp\tsession_key\n")
        for ev in events:
            fh.write(f"{ev.user}\t{ev.item}\t{ev.timestamp}\t{ev.session_key}\n")


def gen_synthetic(spec: SyntheticSpec) -> SessionCorpus:
    """Generate, sessionize (by key), filter and split, like any real log."""
    corpus = sessionize(synthetic_events(spec), gap_seconds=10**9)
    return split_corpus(filter_corpus(corpus))


def raw_item(corpus: SessionCorpus, item_index: int) -> int:
    """Generator-side item id behind a dense corpus index."""
    return int(corpus.items.key(item_index)[1:])


def raw_user(corpus: SessionCorpus, user_index: int) -> int:
    return int(corpus.users.key(user_index)[1:])
