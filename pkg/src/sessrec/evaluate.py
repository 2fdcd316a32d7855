"""Ranking metrics and reports.

HR@k is 1 when the target ranks within the top k, else 0; MRR@k is the
reciprocal rank, zeroed beyond k. Reports average per test example by
default, with an optional per-user mode that first averages each user's
examples and then averages across users.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def hr_at_k(ranked, target, k: int) -> int:
    """1 iff ``target`` occurs within the first k entries of ``ranked``."""
    return 1 if target in list(ranked)[:k] else 0


def mrr_at_k(ranked, target, k: int) -> float:
    """Reciprocal rank of ``target`` in ``ranked``, 0 when beyond k."""
    ranked = list(ranked)
    for pos, item in enumerate(ranked[:k], start=1):
        if item == target:
            return 1.0 / pos
    return 0.0


def rank_hr(rank: int, k: int) -> int:
    return 1 if rank <= k else 0


def rank_mrr(rank: int, k: int) -> float:
    return 1.0 / rank if rank <= k else 0.0


def mean_metrics(ranks, ks) -> dict[int, tuple[float, float]]:
    """{k: (HR@k, MRR@k)} averaged over all examples."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise DataError("mean_metrics: no examples")
    out = {}
    for k in ks:
        hr = float(np.mean(ranks <= k))
        mrr = float(np.mean(np.where(ranks <= k, 1.0 / ranks, 0.0)))
        out[k] = (hr, mrr)
    return out


def mean_metrics_per_user(ranks, user_ids, ks) -> dict[int, tuple[float, float]]:
    """Per-user average of per-example metrics, then averaged across users."""
    ranks = np.asarray(ranks)
    user_ids = np.asarray(user_ids)
    if ranks.size == 0:
        raise DataError("mean_metrics_per_user: no examples")
    out = {}
    users = np.unique(user_ids)
    for k in ks:
        hr_user = [float(np.mean(ranks[user_ids == u] <= k)) for u in users]
        mrr_user = [
            float(np.mean(np.where(ranks[user_ids == u] <= k, 1.0 / ranks[user_ids == u], 0.0)))
            for u in users
        ]
        out[k] = (float(np.mean(hr_user)), float(np.mean(mrr_user)))
    return out


@dataclass
class MetricReport:
    arm: str
    n_examples: int
    hr: dict[int, float]
    mrr: dict[int, float]

    def to_text(self) -> str:
        lines = [f"arm: {self.arm}", f"examples: {self.n_examples}"]
        for k in sorted(self.hr):
            lines.append(f"HR@{k} = {self.hr[k]:.4f}\tMRR@{k} = {self.mrr[k]:.4f}")
        return "\n".join(lines) + "\n"

    def tsv_rows(self) -> list[str]:
        return [
            f"{self.arm}\t{k}\t{self.hr[k]!r}\t{self.mrr[k]!r}\t{self.n_examples}"
            for k in sorted(self.hr)
        ]


def report_from_ranks(
    arm: str, ranks, ks, user_ids=None, per_user: bool = False
) -> MetricReport:
    if per_user:
        if user_ids is None:
            raise DataError("per-user averaging needs user ids")
        metrics = mean_metrics_per_user(ranks, user_ids, ks)
    else:
        metrics = mean_metrics(ranks, ks)
    return MetricReport(
        arm,
        len(np.asarray(ranks)),
        {k: hm[0] for k, hm in metrics.items()},
        {k: hm[1] for k, hm in metrics.items()},
    )


def write_metrics_tsv(path, reports: list[MetricReport]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("arm\tk\thr\tmrr\texamples\n")
        for report in reports:
            for row in report.tsv_rows():
                fh.write(row + "\n")


def write_ranks_tsv(path, examples, ranks):
    """Raw per-example target ranks (reciprocal rank derivable), one row per
    scored test example."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("example\tuser\ttarget\trank\n")
        for n, (ex, rank) in enumerate(zip(examples, ranks)):
            fh.write(f"{n}\t{ex.user_id}\t{ex.label}\t{rank}\n")
