"""Mini-batch training loop, batch scoring, and top-k recommendation."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .config import Config
from .data import SessionCorpus, TrainingExample, segment_examples
from .encoder import encode_session
from .errors import DataError, NonFiniteError
from .evaluate import mean_metrics
from .graph import HeteroGraph
from .hgnn import aggregation_matrices, encode_graph
from .model import ModelParams, init_params, loss, score
from .optim import Adam


@dataclass(frozen=True)
class ArmToggles:
    """Which model paths are active; the full model enables everything.

    ``user_passthrough`` serves the no-user-nodes arm: the general-preference
    path stays but reads the initial user embedding instead of the graph
    output.
    """

    use_hgnn: bool = True
    use_current: bool = True
    use_general: bool = True
    user_passthrough: bool = False


FULL = ArmToggles()


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    val_hr: float | None
    val_mrr: float | None
    wall_s: float


def combined_embeddings(
    graph: HeteroGraph,
    params: ModelParams,
    toggles: ArmToggles = FULL,
    agg=None,
) -> tuple[Tensor, Tensor]:
    """Final item/user tables fed to the session encoder."""
    if not toggles.use_hgnn:
        return params.item_emb, params.user_emb
    emb = encode_graph(graph, params.item_emb, params.user_emb, params.layers, agg)
    user_final = params.user_emb if toggles.user_passthrough else emb.user_final
    return emb.item_final, user_final


def encode_example(
    example: TrainingExample,
    item_final: Tensor,
    user_final: Tensor,
    params: ModelParams,
    toggles: ArmToggles = FULL,
) -> Tensor:
    """Session representation of one example; the prefix is truncated to the
    most recent ``encoder.Lmax`` items, and an out-of-table user falls back
    to the mean user embedding."""
    l_max = params.encoder.l_max
    prefix = example.prefix[-l_max:]
    if not prefix:
        raise DataError("cannot encode an empty prefix")
    item_vecs = ad.embedding_lookup(item_final, prefix)
    user_vec = None
    if toggles.use_general:
        uid = example.user_id
        if uid is not None and 0 <= uid < user_final.shape[0]:
            user_vec = ad.embedding_lookup(user_final, [uid])
        else:
            user_vec = ad.row_mean(user_final)
    return encode_session(
        item_vecs,
        user_vec,
        params.encoder,
        use_current=toggles.use_current,
        use_general=toggles.use_general,
    )


def score_examples(
    params: ModelParams,
    graph: HeteroGraph,
    examples: list[TrainingExample],
    toggles: ArmToggles = FULL,
    agg=None,
) -> np.ndarray:
    """Target ranks (1-based, ties resolved toward smaller item ids) for a
    list of examples, scored without recording gradients."""
    ranks = np.empty(len(examples), dtype=np.int64)
    with ad.no_grad():
        item_final, user_final = combined_embeddings(graph, params, toggles, agg)
        table = params.item_emb.data
        for n, ex in enumerate(examples):
            s = encode_example(ex, item_final, user_final, params, toggles)
            logits = (s.data @ table.T)[0]
            ranks[n] = rank_of_target(logits, ex.label)
    return ranks


def rank_of_target(scores_row: np.ndarray, target: int) -> int:
    """Rank of ``target`` under descending score, ties to the smaller index."""
    s_t = scores_row[target]
    higher = int(np.sum(scores_row > s_t))
    tie_before = int(np.sum(scores_row[:target] == s_t))
    return higher + tie_before + 1


def predict_scores(
    params: ModelParams,
    graph: HeteroGraph,
    user_id: int | None,
    prefix: list[int],
    toggles: ArmToggles = FULL,
) -> np.ndarray:
    """Softmax probability over all candidate items for one session prefix.

    Out-of-vocabulary prefix items are dropped with a warning; an empty or
    fully unknown prefix is an error.
    """
    if not prefix:
        raise DataError("recommend: empty prefix")
    known = [i for i in prefix if 0 <= i < graph.num_items]
    if len(known) != len(prefix):
        warnings.warn(
            f"recommend: dropped {len(prefix) - len(known)} unknown prefix items",
            stacklevel=2,
        )
    if not known:
        raise DataError("recommend: every prefix item is unknown")
    example = TrainingExample(user_id, known, 0)
    with ad.no_grad():
        item_final, user_final = combined_embeddings(graph, params, toggles)
        s = encode_example(example, item_final, user_final, params, toggles)
        return score(s, params.item_emb).data[0]


def recommend(
    params: ModelParams,
    graph: HeteroGraph,
    user_id: int | None,
    prefix: list[int],
    k: int,
    toggles: ArmToggles = FULL,
) -> list[int]:
    """Deterministic top-k item ids; nothing is masked out, so already
    clicked items may be recommended again."""
    probs = predict_scores(params, graph, user_id, prefix, toggles)
    order = np.lexsort((np.arange(len(probs)), -probs))
    return [int(i) for i in order[:k]]


def train_model(
    corpus: SessionCorpus,
    graph: HeteroGraph,
    config: Config,
    toggles: ArmToggles = FULL,
    log=None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Seeded Adam training; returns the parameters (best validation HR@5
    snapshot when a validation split is configured, else the final state)
    and per-epoch statistics."""
    examples = segment_examples(corpus, config.data_segmentation, "train")
    if not examples:
        raise DataError("train: no training examples after segmentation")

    rng = np.random.default_rng(config.train_seed)
    params = init_params(corpus.num_items, corpus.num_users, config.to_dict(), rng)
    agg = aggregation_matrices(graph)
    opt = Adam(params.tensors(), lr=config.train_lr)

    n = len(examples)
    n_val = int(n * config.train_val_fraction)
    order0 = rng.permutation(n)
    val_examples = [examples[i] for i in order0[:n_val]]
    train_idx = np.sort(order0[n_val:])

    stats: list[EpochStats] = []
    best: tuple[float, int] | None = None
    best_values = None
    for epoch in range(1, config.train_epochs + 1):
        t0 = time.perf_counter()
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for lo in range(0, len(order), config.train_batch):
            batch = [examples[i] for i in order[lo : lo + config.train_batch]]
            targets = [ex.label for ex in batch]
            try:
                with Tape() as tape:
                    item_final, user_final = combined_embeddings(
                        graph, params, toggles, agg
                    )
                    rows = [
                        encode_example(ex, item_final, user_final, params, toggles)
                        for ex in batch
                    ]
                    y_hat = score(ad.concat(rows, axis=0), params.item_emb)
                    batch_loss = loss(y_hat, targets, config.loss_mode)
                    tape.backward(batch_loss)
            except NonFiniteError as exc:
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, batch starting at "
                    f"example {lo}: targets={targets[:8]}... ({exc})"
                ) from exc
            opt.step()
            opt.zero_grad()
            total += batch_loss.item() * len(batch)
        mean_loss = total / len(order)

        val_hr = val_mrr = None
        if val_examples:
            ranks = score_examples(params, graph, val_examples, toggles, agg)
            metrics = mean_metrics(ranks, (5,))
            val_hr, val_mrr = metrics[5]
        wall = time.perf_counter() - t0
        stats.append(EpochStats(epoch, mean_loss, val_hr, val_mrr, wall))
        if log is not None:
            log(
                f"epoch {epoch}: loss {mean_loss:.6f}"
                + (f" val HR@5 {val_hr:.4f} MRR@5 {val_mrr:.4f}" if val_hr is not None else "")
                + f" ({wall:.2f}s)"
            )
        if val_examples:
            key = (val_hr, -epoch)
            if best is None or key > best:
                best = key
                best_values = params.copy_values()

    if best_values is not None:
        params.load_values(best_values)
    return params, stats


def write_epoch_log(path, stats: list[EpochStats]):
    """Deterministic TSV of the training curve; wall time is reported on the
    console log only so that fixed-seed reruns are byte-identical."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tmean_loss\tval_hr5\tval_mrr5\n")
        for s in stats:
            hr = "" if s.val_hr is None else repr(s.val_hr)
            mrr = "" if s.val_mrr is None else repr(s.val_mrr)
            fh.write(f"{s.epoch}\t{s.mean_loss!r}\t{hr}\t{mrr}\n")
