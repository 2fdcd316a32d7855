"""Relation-aware message passing over the heterogeneous global graph.

Each layer, per edge type, averages the incoming neighbor embeddings
(zero vector when a node has no neighbors of that type), transforms the
(aggregate, self) concatenation through a relation-specific d x 2d weight
with relu, then averages the per-relation outputs: items over their four
relations, users over their single one. Layer outputs, including the input
embeddings as layer 0, are combined uniformly with weight 1/(K+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graph import EdgeType, HeteroGraph

# relations delivering messages into item nodes, in accumulation order
ITEM_RELATIONS = (EdgeType.INTERACTED_BY, EdgeType.IN, EdgeType.OUT, EdgeType.SIMILAR)


@dataclass
class LayerParams:
    """One layer's relation-specific transforms: weight (d, 2d), bias (1, d)."""

    weights: dict[EdgeType, Tensor]
    biases: dict[EdgeType, Tensor]


@dataclass
class NodeEmbeddings:
    item_layers: list[Tensor]
    user_layers: list[Tensor]
    item_final: Tensor
    user_final: Tensor


def neighbor_mean_matrix(graph: HeteroGraph, etype: EdgeType) -> sp.csr_matrix:
    """Row-normalized incidence matrix whose product with the source
    embedding table yields, per destination, the unweighted mean of its
    incoming neighbors (a zero row where there are none)."""
    n_dst = graph.num_users if etype is EdgeType.INTERACT else graph.num_items
    n_src = graph.num_users if etype is EdgeType.INTERACTED_BY else graph.num_items
    rows, cols, vals = [], [], []
    for dst, sources in enumerate(graph.in_sources[etype]):
        if not sources:
            continue
        inv = 1.0 / len(sources)
        for src in sources:
            rows.append(dst)
            cols.append(src)
            vals.append(inv)
    return sp.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n_dst, n_src),
    )


def aggregation_matrices(graph: HeteroGraph) -> dict[EdgeType, sp.csr_matrix]:
    return {et: neighbor_mean_matrix(graph, et) for et in EdgeType}


def transform_relation(agg: Tensor, self_vecs: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """relu(W [aggregate || self] + b), applied to every node row at once."""
    return ad.relu(ad.add(ad.matmul(ad.concat([agg, self_vecs], axis=-1), weight.T), bias))


def accumulate(outputs: list[Tensor]) -> Tensor:
    """Elementwise mean across the relation outputs present for a node kind."""
    total = outputs[0]
    for other in outputs[1:]:
        total = ad.add(total, other)
    return ad.mul(total, 1.0 / len(outputs))


def combine_layers(layer_outputs: list[Tensor]) -> Tensor:
    """Uniform 1/(K+1) combination of layers 0..K."""
    return accumulate(layer_outputs)


def encode_graph(
    graph: HeteroGraph,
    item_emb: Tensor,
    user_emb: Tensor,
    layers: list[LayerParams],
    agg: dict[EdgeType, sp.csr_matrix] | None = None,
) -> NodeEmbeddings:
    """Run the full layer stack and combine; differentiable end to end."""
    if agg is None:
        agg = aggregation_matrices(graph)
    item_layers = [item_emb]
    user_layers = [user_emb]
    for params in layers:
        p_prev, q_prev = item_layers[-1], user_layers[-1]
        relation_out = []
        for et in ITEM_RELATIONS:
            source = q_prev if et is EdgeType.INTERACTED_BY else p_prev
            neigh = ad.spmm(agg[et], source)
            relation_out.append(
                transform_relation(neigh, p_prev, params.weights[et], params.biases[et])
            )
        item_layers.append(accumulate(relation_out))

        et = EdgeType.INTERACT
        neigh = ad.spmm(agg[et], p_prev)
        user_layers.append(
            transform_relation(neigh, q_prev, params.weights[et], params.biases[et])
        )
    return NodeEmbeddings(
        item_layers,
        user_layers,
        combine_layers(item_layers),
        combine_layers(user_layers),
    )
