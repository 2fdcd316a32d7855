"""Model parameters, candidate scoring, loss, and checkpoint files.

Checkpoint layout (little-endian):

    bytes 0..11   magic ``SESSRECCKPT``
    bytes 12..15  version uint32 (currently 1)
    bytes 16..19  header length uint32
    header        UTF-8 JSON: {"config": {...}, "tensors": [{name, shape}]}
    payload       raw float64 buffers, concatenated in manifest order

Round-trips are bitwise exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderParams
from .errors import CheckpointError, ShapeMismatchError
from .graph import EdgeType
from .hgnn import ITEM_RELATIONS, LayerParams

CKPT_MAGIC = b"SESSRECCKPT"
CKPT_VERSION = 1

RELATION_ORDER = ITEM_RELATIONS + (EdgeType.INTERACT,)

ENCODER_FIELDS = (
    "pos_emb", "pos_proj",
    "cur_item_w", "cur_mean_w", "cur_score_v", "cur_bias",
    "gen_item_w", "gen_user_w", "gen_score_v", "gen_bias",
    "gate_w",
)


@dataclass
class ModelParams:
    item_emb: Tensor
    user_emb: Tensor
    layers: list[LayerParams]
    encoder: EncoderParams
    config: dict

    @property
    def num_items(self) -> int:
        return self.item_emb.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def dim(self) -> int:
        return self.item_emb.shape[1]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """All trainable tensors in a fixed, documented order."""
        out = [("item_emb", self.item_emb), ("user_emb", self.user_emb)]
        for k, layer in enumerate(self.layers):
            for et in RELATION_ORDER:
                out.append((f"hgnn.{k}.{et.value}.weight", layer.weights[et]))
                out.append((f"hgnn.{k}.{et.value}.bias", layer.biases[et]))
        for name in ENCODER_FIELDS:
            out.append((f"encoder.{name}", getattr(self.encoder, name)))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_values(self, values: dict[str, np.ndarray]):
        for name, t in self.named_tensors():
            t.data = values[name].copy()


def init_params(
    num_items: int,
    num_users: int,
    config: dict,
    rng: np.random.Generator,
) -> ModelParams:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) weights and embeddings, zero biases."""
    d = int(config["model.d"])
    n_layers = int(config["model.layers"])
    l_max = int(config["encoder.Lmax"])
    bound = 1.0 / np.sqrt(d)

    def uni(*shape):
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    layers = []
    for _ in range(n_layers):
        layers.append(
            LayerParams(
                weights={et: uni(d, 2 * d) for et in RELATION_ORDER},
                biases={et: zeros(1, d) for et in RELATION_ORDER},
            )
        )
    encoder = EncoderParams(
        pos_emb=uni(l_max, d),
        pos_proj=uni(d, 2 * d),
        cur_item_w=uni(d, d),
        cur_mean_w=uni(d, d),
        cur_score_v=uni(d, 1),
        cur_bias=zeros(1, d),
        gen_item_w=uni(d, d),
        gen_user_w=uni(d, d),
        gen_score_v=uni(d, 1),
        gen_bias=zeros(1, d),
        gate_w=uni(1, 2 * d),
    )
    return ModelParams(
        item_emb=uni(num_items, d),
        user_emb=uni(num_users, d),
        layers=layers,
        encoder=encoder,
        config=dict(config),
    )


def score(session_repr: Tensor, item_emb: Tensor) -> Tensor:
    """Softmax over all candidates of the dot product with the initial item
    embeddings; accepts one (1, d) row or a (B, d) batch."""
    return ad.softmax(ad.matmul(session_repr, item_emb.T))


def loss(y_hat: Tensor, targets, mode: str = "literal") -> Tensor:
    """Mean per-example loss of a (B, |V|) probability batch.

    ``literal`` charges every coordinate of the one-hot comparison,
    -[log y_t + sum_{i != t} log(1 - y_i)]; ``categorical`` charges
    -log y_t only. Log arguments are clamped to [1e-12, 1 - 1e-12].
    """
    if mode not in ("literal", "categorical"):
        raise ValueError(f"unknown loss mode {mode!r}")
    targets = np.asarray(targets, dtype=np.int64)
    batch, n_items = y_hat.shape
    if targets.shape != (batch,):
        raise ShapeMismatchError(f"loss: batch {batch} vs targets {targets.shape}")
    hot = np.zeros((batch, n_items))
    hot[np.arange(batch), targets] = 1.0
    eps = 1e-12
    log_y = ad.log(ad.clip(y_hat, eps, 1.0 - eps))
    picked = ad.sum_all(ad.mul(Tensor(hot), log_y))
    if mode == "categorical":
        return ad.mul(picked, -1.0 / batch)
    log_rest = ad.log(ad.clip(ad.sub(1.0, y_hat), eps, 1.0 - eps))
    rest = ad.sum_all(ad.mul(Tensor(1.0 - hot), log_rest))
    return ad.mul(ad.add(picked, rest), -1.0 / batch)


def validate_against(params: ModelParams, num_items: int, num_users: int):
    """Reject a checkpoint whose tables do not match the graph being served."""
    if params.num_items != num_items or params.num_users != num_users:
        raise ShapeMismatchError(
            f"checkpoint covers {params.num_items} items / {params.num_users} users, "
            f"corpus has {num_items} / {num_users}"
        )


def save_checkpoint(path, params: ModelParams):
    named = params.named_tensors()
    manifest = [{"name": n, "shape": list(t.shape)} for n, t in named]
    header = json.dumps(
        {"config": params.config, "tensors": manifest}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < len(CKPT_MAGIC) + 8 or not blob.startswith(CKPT_MAGIC):
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic")
    off = len(CKPT_MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<I", blob, off + 4)
    off += 8
    try:
        header = json.loads(blob[off : off + header_len].decode("utf-8"))
        config = header["config"]
        manifest = header["tensors"]
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: bad header") from exc
    off += header_len

    values: dict[str, np.ndarray] = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        size = 8 * int(np.prod(shape)) if shape else 8
        if off + size > len(blob):
            raise CheckpointError(f"corrupt checkpoint {path}: truncated payload")
        values[entry["name"]] = np.frombuffer(
            blob, dtype="<f8", count=size // 8, offset=off
        ).reshape(shape).copy()
        off += size
    if off != len(blob):
        raise CheckpointError(f"corrupt checkpoint {path}: trailing bytes")

    return _params_from_values(config, values, path)


def _params_from_values(config: dict, values: dict[str, np.ndarray], path) -> ModelParams:
    def tensor(name: str) -> Tensor:
        if name not in values:
            raise CheckpointError(f"corrupt checkpoint {path}: missing tensor {name}")
        return Tensor(values[name], requires_grad=True)

    try:
        n_layers = int(config["model.layers"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: bad config") from exc
    layers = []
    for k in range(n_layers):
        layers.append(
            LayerParams(
                weights={et: tensor(f"hgnn.{k}.{et.value}.weight") for et in RELATION_ORDER},
                biases={et: tensor(f"hgnn.{k}.{et.value}.bias") for et in RELATION_ORDER},
            )
        )
    encoder = EncoderParams(**{name: tensor(f"encoder.{name}") for name in ENCODER_FIELDS})
    params = ModelParams(
        item_emb=tensor("item_emb"),
        user_emb=tensor("user_emb"),
        layers=layers,
        encoder=encoder,
        config=dict(config),
    )
    d = params.dim
    for name, t in params.named_tensors():
        if name.endswith(".weight") or name == "encoder.pos_proj":
            want = (d, 2 * d)
        elif name == "encoder.gate_w":
            want = (1, 2 * d)
        elif name.endswith("score_v"):
            want = (d, 1)
        elif name.endswith(".bias") or name.endswith("_bias"):
            want = (1, d)
        else:
            want = None
        if want is not None and t.shape != want:
            raise ShapeMismatchError(f"checkpoint tensor {name}: shape {t.shape}, expected {want}")
    return params
