"""Personalized session encoding.

A session prefix (last ``l_max`` items at most) is encoded three ways and
fused: current preference attends over position-augmented item vectors,
general preference attends over the raw item vectors conditioned on the user
embedding, and a learned scalar gate blends the two convexly. Position
indices run reversed: the most recent item gets index 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class EncoderParams:
    pos_emb: Tensor       # (l_max, d) reversed-position table
    pos_proj: Tensor      # (d, 2d) projects [item || position]
    cur_item_w: Tensor    # (d, d)
    cur_mean_w: Tensor    # (d, d)
    cur_score_v: Tensor   # (d, 1)
    cur_bias: Tensor      # (1, d)
    gen_item_w: Tensor    # (d, d)
    gen_user_w: Tensor    # (d, d)
    gen_score_v: Tensor   # (d, 1)
    gen_bias: Tensor      # (1, d)
    gate_w: Tensor        # (1, 2d)

    @property
    def l_max(self) -> int:
        return self.pos_emb.shape[0]


def position_augment(item_vecs: Tensor, params: EncoderParams) -> Tensor:
    """Project each item vector concatenated with its reversed-position
    embedding; row i of the (l, d) input gets position l-1-i."""
    l = item_vecs.shape[0]
    if l > params.l_max:
        raise ValueError(f"prefix length {l} exceeds l_max {params.l_max}")
    positions = np.arange(l - 1, -1, -1)
    pos_vecs = ad.embedding_lookup(params.pos_emb, positions)
    return ad.matmul(ad.concat([item_vecs, pos_vecs], axis=-1), params.pos_proj.T)


def attention_pool(values: Tensor, keys: Tensor, context: Tensor,
                   w_key: Tensor, w_ctx: Tensor, bias: Tensor, score_v: Tensor,
                   ) -> tuple[Tensor, Tensor]:
    """softmax(v' sigmoid(W_k key_i + W_c context + b)) weighted sum of values;
    returns (pooled (1, d), weights (1, l))."""
    hidden = ad.sigmoid(ad.add(ad.add(ad.matmul(keys, w_key.T), ad.matmul(context, w_ctx.T)), bias))
    logits = ad.matmul(hidden, score_v).T          # (1, l)
    weights = ad.softmax(logits)
    return ad.matmul(weights, values), weights


def current_preference(p_aug: Tensor, params: EncoderParams) -> Tensor:
    """Soft attention over position-augmented vectors, keyed on each item
    and on the session mean."""
    mean = ad.row_mean(p_aug)
    pooled, _ = attention_pool(
        p_aug, p_aug, mean,
        params.cur_item_w, params.cur_mean_w, params.cur_bias, params.cur_score_v,
    )
    return pooled


def general_preference(item_vecs: Tensor, user_vec: Tensor, params: EncoderParams) -> Tensor:
    """Attention over the raw item vectors conditioned on the user embedding."""
    pooled, _ = attention_pool(
        item_vecs, item_vecs, user_vec,
        params.gen_item_w, params.gen_user_w, params.gen_bias, params.gen_score_v,
    )
    return pooled


def fuse(current: Tensor, general: Tensor, params: EncoderParams) -> Tensor:
    """Convex gate: sigma(W [C || O]) * C + (1 - gate) * O."""
    gate = ad.sigmoid(ad.matmul(ad.concat([current, general], axis=-1), params.gate_w.T))
    return ad.add(ad.mul(current, gate), ad.mul(general, ad.sub(1.0, gate)))


def encode_session(
    item_vecs: Tensor,
    user_vec: Tensor,
    params: EncoderParams,
    use_current: bool = True,
    use_general: bool = True,
) -> Tensor:
    """Session representation with optional paths disabled (ablation arms)."""
    if not use_current and not use_general:
        raise ValueError("at least one preference path must be enabled")
    if use_current:
        current = current_preference(position_augment(item_vecs, params), params)
    if use_general:
        general = general_preference(item_vecs, user_vec, params)
    if not use_general:
        return current
    if not use_current:
        return general
    return fuse(current, general, params)
