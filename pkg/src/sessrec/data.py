"""Session log ingestion: parse, sessionize, filter, split, segment.

Input event log is UTF-8 TSV, one event per line:

    user<TAB>item<TAB>timestamp[<TAB>session_key]

Lines starting with ``#`` are headers and skipped; blank lines are ignored;
any other malformed line is skipped and counted. Timestamps are integer
seconds since epoch and must be non-negative.

The serialized corpus format (``save_corpus``) is versioned text with a
fixed field order so that determinism is byte-testable:

    sessrec-corpus v1
    users <n>          followed by n user keys, one per line, index order
    items <m>          followed by m item keys, one per line, index order
    sessions <count>   followed by one line per session,
                       ``user_id<TAB>start_ts<TAB>split<TAB>i1,i2,...``,
                       users in index order, sessions in chronological order
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError


@dataclass
class Interaction:
    """One raw log event."""

    user: str
    item: str
    timestamp: int
    session_key: str | None = None


@dataclass
class Session:
    user_id: int
    items: list[int]
    start_ts: int
    split: str = "train"


class Vocab:
    """Bidirectional map between opaque external keys and dense indices."""

    def __init__(self, keys=()):
        self._keys: list[str] = []
        self._ids: dict[str, int] = {}
        for k in keys:
            self.add(k)

    def add(self, key: str) -> int:
        idx = self._ids.get(key)
        if idx is None:
            idx = len(self._keys)
            self._ids[key] = idx
            self._keys.append(key)
        return idx

    def id(self, key: str) -> int:
        return self._ids[key]

    def get(self, key: str):
        return self._ids.get(key)

    def key(self, idx: int) -> str:
        return self._keys[idx]

    @property
    def keys(self) -> list[str]:
        return list(self._keys)

    def __len__(self):
        return len(self._keys)

    def __contains__(self, key):
        return key in self._ids


@dataclass
class SessionCorpus:
    users: Vocab
    items: Vocab
    sessions_by_user: list[list[Session]]

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_items(self) -> int:
        return len(self.items)

    def sessions(self, split: str | None = None):
        for per_user in self.sessions_by_user:
            for s in per_user:
                if split is None or s.split == split:
                    yield s

    def train_sessions(self) -> list[Session]:
        return list(self.sessions("train"))

    def test_sessions(self) -> list[Session]:
        return list(self.sessions("test"))


@dataclass
class TrainingExample:
    user_id: int
    prefix: list[int]
    label: int


def parse_log(path, fmt: str = "3col") -> tuple[list[Interaction], int]:
    """Read the event TSV; returns (events in file order, skipped line count)."""
    if fmt not in ("3col", "4col"):
        raise DataError(f"unknown log format {fmt!r} (expected 3col or 4col)")
    events: list[Interaction] = []
    skipped = 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line in fh:
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if line.startswith("#"):
                continue
            parts = line.split("\t")
            want = 3 if fmt == "3col" else 4
            if len(parts) < 3 or len(parts) > want:
                skipped += 1
                continue
            user, item, ts_raw = parts[0], parts[1], parts[2]
            key = parts[3] if len(parts) == 4 else None
            if not user or not item:
                skipped += 1
                continue
            try:
                ts = int(ts_raw)
            except ValueError:
                skipped += 1
                continue
            if ts < 0:
                skipped += 1
                continue
            events.append(Interaction(user, item, ts, key))
    return events, skipped


def sessionize(events: list[Interaction], gap_seconds: int) -> SessionCorpus:
    """Group events into per-user chronological sessions.

    A new session starts when the gap to the previous event is strictly
    greater than ``gap_seconds``. An explicit ``session_key`` overrides the
    gap rule: the session breaks exactly when the key changes. Vocabulary
    indices follow first appearance in file order.
    """
    if gap_seconds <= 0:
        raise DataError(f"gap_seconds must be positive, got {gap_seconds}")
    users = Vocab()
    items = Vocab()
    for ev in events:
        users.add(ev.user)
        items.add(ev.item)
    per_user: list[list[Interaction]] = [[] for _ in range(len(users))]
    for ev in events:
        per_user[users.id(ev.user)].append(ev)

    sessions_by_user: list[list[Session]] = []
    for uid, evs in enumerate(per_user):
        evs = sorted(evs, key=lambda e: e.timestamp)  # stable: ties keep file order
        sessions: list[Session] = []
        prev: Interaction | None = None
        for ev in evs:
            if prev is None:
                new = True
            elif ev.session_key is not None or prev.session_key is not None:
                new = ev.session_key != prev.session_key
            else:
                new = ev.timestamp - prev.timestamp > gap_seconds
            if new:
                sessions.append(Session(uid, [], ev.timestamp))
            sessions[-1].items.append(items.id(ev.item))
            prev = ev
        sessions.sort(key=lambda s: s.start_ts)
        sessions_by_user.append(sessions)
    return SessionCorpus(users, items, sessions_by_user)


def _rebuild_vocabs(corpus: SessionCorpus, kept: list[list[Session]]) -> SessionCorpus:
    """Re-densify user and item vocabularies over the surviving sessions,
    preserving the old relative index order."""
    used_users = [uid for uid, sess in enumerate(kept) if sess]
    used_items_set = {i for sess in kept for s in sess for i in s.items}
    used_items = [i for i in range(corpus.num_items) if i in used_items_set]

    users = Vocab(corpus.users.key(u) for u in used_users)
    items = Vocab(corpus.items.key(i) for i in used_items)
    item_map = {old: new for new, old in enumerate(used_items)}

    sessions_by_user: list[list[Session]] = []
    for new_uid, old_uid in enumerate(used_users):
        sessions_by_user.append(
            [
                Session(new_uid, [item_map[i] for i in s.items], s.start_ts, s.split)
                for s in kept[old_uid]
            ]
        )
    return SessionCorpus(users, items, sessions_by_user)


def filter_corpus(
    corpus: SessionCorpus, min_session_len: int = 3, min_sessions: int = 5
) -> SessionCorpus:
    """Drop sessions shorter than ``min_session_len``, then users with fewer
    than ``min_sessions`` sessions, repeating until nothing changes, and
    rebuild dense vocabularies over the survivors."""
    kept = [list(sess) for sess in corpus.sessions_by_user]
    while True:
        changed = False
        for uid in range(len(kept)):
            pruned = [s for s in kept[uid] if len(s.items) >= min_session_len]
            if len(pruned) != len(kept[uid]):
                changed = True
                kept[uid] = pruned
        for uid in range(len(kept)):
            if kept[uid] and len(kept[uid]) < min_sessions:
                kept[uid] = []
                changed = True
        if not changed:
            break
    if not any(kept):
        raise DataError(
            "no sessions survive filtering "
            f"(min_session_len={min_session_len}, min_sessions={min_sessions})"
        )
    return _rebuild_vocabs(corpus, kept)


def split_corpus(corpus: SessionCorpus, test_fraction: float = 0.2) -> SessionCorpus:
    """Tag the last ceil(test_fraction * n) sessions of each user as test.

    Test interactions whose item never occurs in any train session are
    removed, and test sessions left with fewer than 2 events are dropped.
    Vocabularies are re-densified if that removal orphans an item.
    """
    tagged: list[list[Session]] = []
    for sessions in corpus.sessions_by_user:
        n = len(sessions)
        n_test = math.ceil(test_fraction * n) if n else 0
        out = []
        for j, s in enumerate(sessions):
            split = "test" if j >= n - n_test else "train"
            out.append(Session(s.user_id, list(s.items), s.start_ts, split))
        tagged.append(out)

    train_items = {
        i for sess in tagged for s in sess if s.split == "train" for i in s.items
    }
    final: list[list[Session]] = []
    for sessions in tagged:
        out = []
        for s in sessions:
            if s.split == "test":
                s.items = [i for i in s.items if i in train_items]
                if len(s.items) < 2:
                    continue
            out.append(s)
        final.append(out)

    used = {i for sess in final for s in sess for i in s.items}
    result = SessionCorpus(corpus.users, corpus.items, final)
    if len(used) != corpus.num_items:
        result = _rebuild_vocabs(result, final)
    return result


def segment_examples(
    corpus: SessionCorpus, mode: str = "all-prefixes", split: str = "train"
) -> list[TrainingExample]:
    """Turn sessions of one split into (prefix, label) examples.

    ``last-only`` yields one example per session (everything before the last
    event predicts it); ``all-prefixes`` yields one example per position
    t >= 2. Test examples are always generated per position so every
    next-item event is scored. Sessions shorter than 2 yield nothing.
    """
    if mode not in ("last-only", "all-prefixes"):
        raise DataError(f"unknown segmentation mode {mode!r}")
    if split == "test":
        mode = "all-prefixes"
    examples: list[TrainingExample] = []
    for s in corpus.sessions(split):
        if len(s.items) < 2:
            continue
        if mode == "last-only":
            examples.append(TrainingExample(s.user_id, s.items[:-1], s.items[-1]))
        else:
            for t in range(2, len(s.items) + 1):
                examples.append(
                    TrainingExample(s.user_id, s.items[: t - 1], s.items[t - 1])
                )
    return examples


def save_corpus(corpus: SessionCorpus, path):
    lines = ["sessrec-corpus v1"]
    lines.append(f"users {corpus.num_users}")
    lines.extend(corpus.users.keys)
    lines.append(f"items {corpus.num_items}")
    lines.extend(corpus.items.keys)
    all_sessions = [s for sess in corpus.sessions_by_user for s in sess]
    lines.append(f"sessions {len(all_sessions)}")
    for s in all_sessions:
        items = ",".join(str(i) for i in s.items)
        lines.append(f"{s.user_id}\t{s.start_ts}\t{s.split}\t{items}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(path) -> SessionCorpus:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise DataError(f"{path}: corrupt corpus file (truncated)")
        pos += 1
        return lines[pos - 1]

    try:
        if take() != "sessrec-corpus v1":
            raise DataError(f"{path}: not a sessrec-corpus v1 file")
        n_users = int(take().split()[1])
        users = Vocab(take() for _ in range(n_users))
        n_items = int(take().split()[1])
        items = Vocab(take() for _ in range(n_items))
        n_sessions = int(take().split()[1])
        sessions_by_user: list[list[Session]] = [[] for _ in range(n_users)]
        for _ in range(n_sessions):
            uid_s, ts_s, split, items_s = take().split("\t")
            s = Session(
                int(uid_s),
                [int(x) for x in items_s.split(",")] if items_s else [],
                int(ts_s),
                split,
            )
            sessions_by_user[s.user_id].append(s)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: corrupt corpus file ({exc})") from exc
    return SessionCorpus(users, items, sessions_by_user)
